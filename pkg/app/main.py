import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import orjson

ROOT_DIR = Path(__file__).resolve().parent.parent
if str(ROOT_DIR) not in sys.path:
    sys.path.append(str(ROOT_DIR))

from app.generators import KINDS, generate_instance
from app.loaders import InstanceLoader
from app.reports import ReportBundle, RunConfig, error_bundle
from core import certificates, pairwise
from core.certificates import check_points
from core.cover_shrink import shrink, validate_colored_cover
from core.errors import CoarseKitError
from core.extension_engine import SpliceParams, extension_modulus, splice_extend
from core.maps import (
    NormPreservingMap,
    SphereMap,
    annulus_profile,
    asymptotic_fit,
    discrete_lipschitz_bound,
    induce,
    lip_witness,
    profile_implies_lipschitz,
    sublinear_defect,
)
from core.metric_core import annulus, greedy_net, is_epsilon_discrete, is_epsilon_net, scale_connected, validate_space
from core.partitions import canonical_partition, certify_partition_lipschitz, sublinearity_gap
from core.sublinear import fit_sublinear_through
from utils.config_manager import load_config
from utils.file_utils import digest_file, dumps_json
from utils.logger import AppLogger

logger = AppLogger(name="CoarseKit").get_logger()

Handler = Callable[[argparse.Namespace, dict, InstanceLoader, ReportBundle], None]


# metric spaces


def cmd_validate(args, config, loader, bundle):
    data = loader.read(args.file)
    if "matrix" in data:
        points = data.get("points")
        basepoint = data.get("basepoint", points[0] if points else None)
        report = validate_space(data["matrix"], basepoint, points=points)
    else:
        space = loader.space(args.file)
        report = validate_space(space.dist, space.basepoint, points=space.points)
    bundle.results["validation"] = report.to_dict()
    if args.eps is not None:
        bundle.results["epsilon_discrete"] = report.is_epsilon_discrete(args.eps)
    if args.scale is not None and report.metric_ok:
        bundle.results["scale_connected"] = scale_connected(loader.space(args.file), args.scale)
    if not report.metric_ok:
        bundle.warnings.append(f"triangle inequality fails by {report.worst_triangle_violation:.3e}")
        bundle.exit_override = 2


def cmd_net(args, config, loader, bundle):
    space = loader.space(args.file)
    net = greedy_net(space, args.eps)
    indices = space.indices_of(net.points)
    bundle.results["net"] = {
        "eps": args.eps,
        "size": net.n,
        "points": list(net.points),
        "is_net": is_epsilon_net(space, indices, args.eps),
        "is_discrete": is_epsilon_discrete(space, args.eps, indices),
    }
    bundle.add_certificates(check_points("net-covering", space.distance_to(indices), args.eps))


def cmd_annulus(args, config, loader, bundle):
    space = loader.space(args.file)
    bundle.results["annulus"] = annulus(space, args.r, args.s).to_dict()


# maps


def _load_sphere_map(args, loader) -> SphereMap:
    return loader.map(args.map, kind="sphere")


def cmd_lip(args, config, loader, bundle):
    f = loader.map(args.map, kind=args.kind)
    lip, pair = lip_witness(f)
    bundle.results["lip"] = {"value": lip, "witness": list(pair) if pair else None, "points": f.size}


def cmd_fit(args, config, loader, bundle):
    f = loader.map(args.map, kind=args.kind)
    target = induce(f) if args.induced and isinstance(f, SphereMap) else f
    fit = asymptotic_fit(target)
    bundle.results["fit"] = {
        "induced": target is not f,
        **fit.to_dict(),
        "discrete_lipschitz": discrete_lipschitz_bound(target),
    }


def cmd_profile(args, config, loader, bundle):
    f = _load_sphere_map(args, loader)
    r = config["splice_base_scale"] if args.r is None else args.r
    M = config["splice_ratio"] if args.M is None else args.M
    profile = annulus_profile(f, r, M)
    bundle.results["profile"] = profile.to_dict()
    bundle.add_certificates(profile.forward)
    bundle.csv_table = profile.csv_rows()
    if profile.bounded:
        lip = profile_implies_lipschitz(f, profile)
        bundle.results["lipschitz_bound"] = lip.to_dict()
        bundle.add_certificates(lip.checks())
    else:
        bundle.warnings.append(f"profile shows an unbounded trend (ratio {profile.trend_ratio:.3g})")


def cmd_defect(args, config, loader, bundle):
    f = _load_sphere_map(args, loader)
    s = loader.function(args.sublinear)
    fit = asymptotic_fit(induce(f))
    rows = []
    reports = []
    for R in args.R:
        report = sublinear_defect(f, s, R, fit=fit)
        reports.append(report.to_dict())
        rows.append([R, report.defect, report.pairs, report.bound])
        bundle.add_certificates(report.certificates)
    bundle.results["defect"] = reports
    bundle.csv_table = (["R", "defect", "pairs", "bound"], rows)


# partitions


def cmd_partition(args, config, loader, bundle):
    partition = canonical_partition(loader.cover(args.cover))
    cert = certify_partition_lipschitz(partition)
    bundle.results["partition"] = partition.to_dict()
    bundle.results["certificate"] = cert.to_dict()
    bundle.add_certificates(cert.certificates)


def cmd_gap(args, config, loader, bundle):
    bundle.results["gap"] = sublinearity_gap(loader.cover(args.cover)).to_dict()


# extension


def cmd_extend(args, config, loader, bundle):
    space = loader.space(args.space) if args.space else None
    f = loader.map(args.map, space=space)
    fp = induce(f) if isinstance(f, SphereMap) else NormPreservingMap(f.space, f.support, f.values)
    params = SpliceParams(
        r=config["splice_base_scale"] if args.r is None else args.r,
        M=config["splice_ratio"] if args.M is None else args.M,
        strategy=args.strategy or config["sphere_strategy"],
        rho_min=config["rho_min"] if args.rho_min is None else args.rho_min,
        max_workers=config["max_workers"],
    )
    cert = splice_extend(fp, params)
    bundle.results["extension"] = cert.to_dict()
    bundle.add_certificates(cert.certificates)
    bundle.warnings.extend(cert.warnings)
    if not (cert.restriction_ok and cert.norm_preserving_ok):
        bundle.exit_override = 3


def cmd_modulus(args, config, loader, bundle):
    family = loader.family(args.family_dir, kind="sphere")
    table = extension_modulus(
        family,
        strategy=args.strategy or config["sphere_strategy"],
        rho_min=config["rho_min"] if args.rho_min is None else args.rho_min,
    )
    bundle.results["modulus"] = table.to_dict()
    bundle.csv_table = table.csv_rows()


def cmd_shrink(args, config, loader, bundle):
    cc = loader.colored_cover(args.cover)
    validation = validate_colored_cover(cc)
    bundle.results["validation"] = validation.to_dict()
    if not validation.ok:
        bundle.warnings.append("colored cover violates its disjointness or mesh bounds")
    report = shrink(
        cc,
        strategy=args.strategy or config["sphere_strategy"],
        rho_min=config["rho_min"] if args.rho_min is None else args.rho_min,
        max_workers=config["max_workers"],
    )
    bundle.results["shrink"] = report.to_dict()
    bundle.add_certificates(report.certificates)
    bundle.warnings.extend(report.warnings)


# sublinear functions


def cmd_sublinear_fit(args, config, loader, bundle):
    ts, coeffs = loader.samples(args.samples)
    bundle.results["fit"] = fit_sublinear_through(ts, coeffs).to_dict()


def cmd_generate(args, config, loader, bundle):
    params = {
        key: getattr(args, key)
        for key in ("N", "r", "n", "side", "dim", "scale", "fraction", "twist")
        if getattr(args, key) is not None
    }
    files = generate_instance(args.kind, bundle.config.seed, args.out, params)
    bundle.results["generated"] = {
        "kind": args.kind,
        "params": params,
        "files": {p.name: digest_file(p) for p in files},
    }


COMMANDS: Dict[str, Handler] = {
    "validate": cmd_validate,
    "net": cmd_net,
    "annulus": cmd_annulus,
    "lip": cmd_lip,
    "fit": cmd_fit,
    "profile": cmd_profile,
    "defect": cmd_defect,
    "partition": cmd_partition,
    "gap": cmd_gap,
    "extend": cmd_extend,
    "modulus": cmd_modulus,
    "shrink": cmd_shrink,
    "sublinear-fit": cmd_sublinear_fit,
    "generate": cmd_generate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", type=Path, help="Write the JSON report here as well as to stdout")
    common.add_argument("--csv", type=Path, help="Write the CSV projection of the results here")
    common.add_argument("--seed", type=int, help="Seed for generators (default from config)")
    common.add_argument("--tol", type=float, help="Relative tolerance of every inequality check")
    common.add_argument("--config", type=Path, help="Configuration JSON (default config.json)")

    parser = argparse.ArgumentParser(prog="coarse-kit", description="Sublinear coarse geometry toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="Check metric axioms and discreteness")
    p.add_argument("file")
    p.add_argument("--eps", type=float)
    p.add_argument("--scale", type=float, help="Also test M-scale connectedness at this M")

    p = sub.add_parser("net", parents=[common], help="Greedy eps-net")
    p.add_argument("file")
    p.add_argument("--eps", type=float, required=True)

    p = sub.add_parser("annulus", parents=[common], help="Points with r <= |x| < s")
    p.add_argument("file")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--s", type=float, default=float("inf"))

    for name, text in (("lip", "Exact Lipschitz constant"), ("fit", "Asymptotic (lambda, M) frontier")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("map")
        p.add_argument("--kind", choices=["plain", "sphere", "norm-preserving"])
        if name == "fit":
            p.add_argument("--induced", action="store_true", help="Fit f'(x) = |x| f(x) instead of f")

    p = sub.add_parser("profile", parents=[common], help="Annulus profile of a sphere map")
    p.add_argument("map")
    p.add_argument("--r", type=float)
    p.add_argument("--M", type=float)

    p = sub.add_parser("defect", parents=[common], help="Higson sublinearity defect")
    p.add_argument("map")
    p.add_argument("--sublinear", required=True, help="Piecewise-linear function JSON")
    p.add_argument("--R", type=float, nargs="+", required=True)

    for name in ("partition", "gap"):
        p = sub.add_parser(name, parents=[common], help="Canonical partition of unity" if name == "partition" else "Sublinearity gap")
        p.add_argument("cover")

    p = sub.add_parser("extend", parents=[common], help="Splice extension of a norm-preserving map")
    p.add_argument("map")
    p.add_argument("--space", help="Space file overriding the map's own reference")
    p.add_argument("--strategy", choices=["nearest", "project"])
    p.add_argument("--r", type=float)
    p.add_argument("--M", type=float)
    p.add_argument("--rho-min", dest="rho_min", type=float)

    p = sub.add_parser("modulus", parents=[common], help="Empirical extension modulus c(s)")
    p.add_argument("family_dir")
    p.add_argument("--strategy", choices=["nearest", "project"])
    p.add_argument("--rho-min", dest="rho_min", type=float)

    p = sub.add_parser("shrink", parents=[common], help="Shrink a colored cover")
    p.add_argument("cover")
    p.add_argument("--strategy", choices=["nearest", "project"])
    p.add_argument("--rho-min", dest="rho_min", type=float)

    p = sub.add_parser("sublinear-fit", parents=[common], help="Sublinear function through samples")
    p.add_argument("samples")

    p = sub.add_parser("generate", parents=[common], help="Write a seeded instance")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--out", type=Path, default=Path("instances"))
    for key, kind in (("N", int), ("r", float), ("n", int), ("side", int), ("dim", int), ("scale", float), ("fraction", float), ("twist", int)):
        p.add_argument(f"--{key}", type=kind)
    return parser


def _configure(args) -> dict:
    config = load_config(args.config)
    if args.tol is not None:
        config["tolerance"] = args.tol
    certificates.set_tolerance(config["tolerance"])
    pairwise.set_block_rows(int(config["pair_block_rows"]))
    return config


def run(config: RunConfig, args: argparse.Namespace, settings: dict) -> ReportBundle:
    loader = InstanceLoader()
    bundle = ReportBundle(config)
    COMMANDS[config.command](args, settings, loader, bundle)
    bundle.inputs = dict(sorted(loader.digests.items()))
    return bundle


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = _configure(args)
    flags = {k: v for k, v in vars(args).items() if k not in {"command", "output", "csv", "seed", "tol", "config"}}
    config = RunConfig(
        command=args.command,
        flags=flags,
        seed=settings["default_seed"] if args.seed is None else args.seed,
        tolerance=settings["tolerance"],
        output=args.output,
        csv=args.csv,
        config_path=args.config,
    )
    try:
        bundle = run(config, args, settings)
    except CoarseKitError as e:
        logger.error(f"{args.command} failed: {e}")
        print(dumps_json(error_bundle(config, e, e.exit_code)).decode())
        return e.exit_code
    except (OSError, orjson.JSONDecodeError) as e:
        logger.error(f"{args.command} could not read its input: {e}")
        print(dumps_json(error_bundle(config, e, 1)).decode())
        return 1

    print(bundle.emit().decode())
    if bundle.exit_code:
        logger.warning(f"{args.command} finished with exit code {bundle.exit_code}")
    return bundle.exit_code


if __name__ == "__main__":
    sys.exit(main())
