"""
Seeded desk-scale studies: each one generates instances, runs the toolkit and
counts certificate violations. Results go to a metrics JSON file.
"""

import argparse
import sys
import time
from itertools import combinations
from pathlib import Path
from typing import Callable, Dict

import numpy as np

ROOT_DIR = Path(__file__).resolve().parent.parent
if str(ROOT_DIR) not in sys.path:
    sys.path.append(str(ROOT_DIR))

from app.generators import cloud_space, interval_cover, path_space, spiked_circle_values, twisted_cone_values
from app.loaders import space_from_dict
from core.cover_shrink import ColoredCover, lebesgue_number, multiplicity, nerve_map, shrink
from core.extension_engine import SpliceParams, mcshane_extend, nearest_point_transfer, paste, retract_extend, splice_extend
from core.maps import (
    MetricMap,
    NormPreservingMap,
    RadialGrowthBound,
    SphereMap,
    annulus_profile,
    lip_constant,
    profile_implies_lipschitz,
    project,
    rescale_transfer,
    sublinear_defect,
)
from core.metric_core import PointedMetricSpace, greedy_net, is_epsilon_discrete, is_epsilon_net, metric_closure, validate_space
from core.partitions import Cover, canonical_partition, certify_partition_lipschitz, convex_combine, sublinearity_gap
from core.sublinear import PiecewiseLinearFunction
from utils.file_utils import dump_json



def random_graph(rng: np.random.Generator, n: int):
    order = rng.permutation(n)
    edges = [(str(order[i]), str(order[i + 1]), float(rng.uniform(0.5, 2.0))) for i in range(n - 1)]
    for _ in range(n):
        a, b = rng.integers(0, n, size=2)
        if a != b:
            edges.append((str(a), str(b), float(rng.uniform(0.5, 4.0))))
    return edges


def twisted_sphere_map(rng: np.random.Generator, n: int, scale: float = 20.0, twist: int = 2) -> SphereMap:
    data = cloud_space(rng, n, 2, scale)
    space = space_from_dict(data)
    fp = NormPreservingMap.total(space, twisted_cone_values(np.asarray(data["coordinates"]), twist))
    return project(fp)


def ball_cover(space: PointedMetricSpace, eps: float) -> Cover:
    centers = space.indices_of(greedy_net(space, eps).points)
    members = space.dist[centers] < 1.5 * eps
    return Cover(space, tuple(f"B{c}" for c in centers), members)


# studies


def study_metric(rng, count: int) -> Dict:
    failures = 0
    for _ in range(count):
        space = metric_closure(random_graph(rng, int(rng.integers(2, 120))))
        if not validate_space(space.dist, space.basepoint, space.points).metric_ok:
            failures += 1
        eps = float(rng.uniform(0.5, 3.0))
        net = space.indices_of(greedy_net(space, eps).points)
        if not (is_epsilon_net(space, net, eps) and is_epsilon_discrete(space, eps, net)):
            failures += 1
    return {"instances": count, "violations": failures}


def study_profile(rng, count: int) -> Dict:
    violations = 0
    for _ in range(count):
        f = twisted_sphere_map(rng, int(rng.integers(20, 80)))
        profile = annulus_profile(f, 1.0, 2.0)
        violations += profile.forward.violations
        if profile.bounded:
            violations += sum(c.violations for c in profile_implies_lipschitz(f, profile).checks())
    return {"instances": count, "violations": violations}


def study_spiked_circle(N: int = 4096) -> Dict:
    space = space_from_dict(path_space(N, start=1))
    values = spiked_circle_values(N)
    f = SphereMap(space, space.indices_of(values.keys()), np.array(list(values.values())))
    profile = annulus_profile(f, 1.0, 2.0, forward_check=False)
    growth_ok = all(row.scaled_x >= 0.5 * 2 ** (row.k / 2) for row in profile.rows if 4 <= row.k <= 10)
    s = PiecewiseLinearFunction.from_callable(np.sqrt, np.arange(0.0, N + 1.0, 1.0))
    early = sublinear_defect(f, s, 16, with_bound=False)
    # largest power-of-two radius that still sees a pair
    R = float(N)
    late = sublinear_defect(f, s, R, with_bound=False)
    while late.pairs == 0 and R > 16:
        R /= 2
        late = sublinear_defect(f, s, R, with_bound=False)
    decay_ok = early.pairs > 0 and late.pairs > 0 and R > 16 and early.defect >= 4 * late.defect
    return {
        "growth_ok": growth_ok,
        "decay_ok": decay_ok,
        "defect_16": early.defect,
        "late_R": R,
        "late_pairs": late.pairs,
        "defect_late": late.defect,
        "trend": profile.trend,
    }


def study_partitions(rng, count: int) -> Dict:
    violations = 0
    for _ in range(count):
        data = cloud_space(rng, int(rng.integers(10, 50)), 2, 10.0)
        space = space_from_dict(data)
        cover = ball_cover(space, float(rng.uniform(2.0, 5.0)))
        if not cover.proper:
            continue
        partition = canonical_partition(cover)
        violations += sum(c.violations for c in certify_partition_lipschitz(partition).certificates.checks)

        halves = space.norms <= np.median(space.norms)
        gamma_cover = Cover(space, ("in", "out"), np.vstack([space.norms < np.median(space.norms) + 1, ~halves]))
        if not gamma_cover.proper:
            continue
        gamma = MetricMap.total(space, canonical_partition(gamma_cover).phi)
        other_cover = ball_cover(space, float(rng.uniform(2.0, 5.0)))
        if not other_cover.proper:
            continue
        other = canonical_partition(other_cover)
        k = max(cover.k, other.cover.k)
        f = MetricMap.total(space, np.pad(partition.phi, ((0, 0), (0, k - cover.k))))
        g = MetricMap.total(space, np.pad(other.phi, ((0, 0), (0, k - other.cover.k))))
        violations += convex_combine(gamma, f, g).check.violations
    return {"instances": count, "violations": violations}


def study_extension(rng, count: int) -> Dict:
    violations, restriction_failures = 0, 0
    for _ in range(count):
        data = cloud_space(rng, int(rng.integers(10, 60)), 2, 10.0)
        space = space_from_dict(data)
        values = twisted_cone_values(np.asarray(data["coordinates"]), 2)
        keep = np.sort(rng.choice(space.n, size=max(1, space.n // 2), replace=False))
        fp = NormPreservingMap(space, keep, values[keep])
        cert = splice_extend(fp, SpliceParams())
        if not (cert.restriction_ok and cert.norm_preserving_ok and np.isfinite(cert.lip_out)):
            restriction_failures += 1
        transfer = nearest_point_transfer(project(fp), np.arange(space.n), eps=2.0)
        violations += sum(c.violations for c in transfer.certificates.checks)
        retraction = retract_extend(fp, RadialGrowthBound(1.0, 0.0), R=2.0)
        violations += sum(c.violations for c in retraction.certificates.checks)
    return {"instances": count, "violations": violations, "restriction_failures": restriction_failures}


def study_paste(rng, count: int) -> Dict:
    violations = 0
    for _ in range(count):
        N = int(rng.integers(6, 60))
        space = space_from_dict(path_space(N))
        g = np.cumsum(rng.normal(size=(N + 1, 2)), axis=0)
        p = int(rng.integers(1, N - 2))
        overlap = int(rng.integers(1, N - p))
        first = np.arange(0, p + overlap)
        second = np.arange(p, N + 1)
        result = paste(MetricMap(space, first, g[first]), MetricMap(space, second, g[second]), float(overlap + 1))
        violations += result.check.violations
    return {"instances": count, "violations": violations}


def study_shrink(scales=(4, 16, 64), N: int = 400) -> Dict:
    rows = []
    for r in scales:
        data = interval_cover(N, r)
        space = space_from_dict(path_space(N))
        cc = ColoredCover.from_sets(space, data["sets"], data["colors"], data["r"], data["C"])
        report = shrink(cc)
        nerve = nerve_map(cc)
        rows.append(
            {
                "r": r,
                "multiplicity": report.multiplicity,
                "lebesgue": report.lebesgue,
                "bound": report.proved_lebesgue_bound,
                "lambda": report.lam,
                "t": report.t,
                "ok": report.multiplicity <= 2
                and report.proved_lebesgue_bound > 0
                and report.lebesgue >= report.proved_lebesgue_bound
                and report.certificates.holds
                and nerve.certificates.holds,
            }
        )
    return {"rows": rows, "ok": all(row["ok"] for row in rows)}


def study_rescale(rng, count: int) -> Dict:
    violations = 0
    for _ in range(count):
        f = twisted_sphere_map(rng, int(rng.integers(10, 60)))
        slope, offset = float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.0, 5.0))
        s = MetricMap(f.space, f.support, slope * f.norms + offset)
        transfer = rescale_transfer(f, s, RadialGrowthBound(slope, offset))
        violations += sum(check.violations for check in transfer.certificates.checks)
    return {"instances": count, "violations": violations}


def brute_lip(space: PointedMetricSpace, values: np.ndarray) -> float:
    best = 0.0
    for i, j in combinations(range(space.n), 2):
        best = max(best, float(np.linalg.norm(values[i] - values[j])) / space.dist[i, j])
    return best


def brute_lebesgue(space: PointedMetricSpace, members: np.ndarray) -> float:
    best_min = float("inf")
    for x in range(space.n):
        best = 0.0
        for row in members:
            outside = [y for y in range(space.n) if not row[y]]
            best = max(best, min(space.dist[x, y] for y in outside) if outside else float("inf"))
        best_min = min(best_min, best)
    return best_min


def study_oracles(rng, count: int) -> Dict:
    mismatches = 0
    for _ in range(count):
        n = int(rng.integers(2, 13))
        space = space_from_dict({"points": [str(i) for i in range(n)], "basepoint": "0", "coordinates": rng.integers(0, 20, size=(n, 2)).tolist()})
        if space.n >= 2 and (space.dist + np.eye(n)).min() == 0:
            continue
        values = rng.normal(size=(n, 2))
        if not np.isclose(lip_constant(MetricMap.total(space, values)), brute_lip(space, values), rtol=1e-9):
            mismatches += 1
        members = rng.random((3, n)) < 0.5
        members[rng.integers(0, 3, size=n), np.arange(n)] = True
        if multiplicity(members) != max(sum(members[:, x]) for x in range(n)):
            mismatches += 1
        if not np.isclose(lebesgue_number(space, members), brute_lebesgue(space, members)):
            mismatches += 1
        cover = Cover(space, ("a", "b", "c"), members)
        if n >= 2:
            D = np.array([[min((space.dist[x, y] for y in range(n) if not row[y]), default=np.inf) for row in members] for x in range(n)])
            S = D.sum(axis=1)
            expected = min((S[x] / space.norms[x] for x in range(n) if space.norms[x] > 0), default=float("inf"))
            if not np.isclose(sublinearity_gap(cover).eps_star, expected, rtol=1e-9):
                mismatches += 1
        A = np.sort(rng.choice(n, size=max(1, n // 2), replace=False))
        real = rng.normal(size=len(A))
        g = mcshane_extend(MetricMap(space, A, real), [1.0]).values[:, 0]
        expected_g = [min(real[k] + space.dist[x, a] for k, a in enumerate(A)) for x in range(n)]
        expected_g = np.array(expected_g)
        expected_g[A] = real
        if not np.array_equal(g, expected_g):
            mismatches += 1
    return {"instances": count, "mismatches": mismatches}


def run_studies(seed: int, quick: bool = False) -> Dict:
    scale = 0.1 if quick else 1.0

    def n(count: int) -> int:
        return max(1, int(count * scale))

    studies: Dict[str, Callable[[], Dict]] = {
        "metric_axioms_and_nets": lambda: study_metric(np.random.default_rng(seed), n(200)),
        "annulus_profile_constants": lambda: study_profile(np.random.default_rng(seed + 1), n(100)),
        "spiked_circle_growth": lambda: study_spiked_circle(1024 if quick else 4096),
        "partition_bounds": lambda: study_partitions(np.random.default_rng(seed + 3), n(100)),
        "extension_soundness": lambda: study_extension(np.random.default_rng(seed + 4), n(50)),
        "pasting": lambda: study_paste(np.random.default_rng(seed + 5), n(500)),
        "cover_shrinking": lambda: study_shrink(),
        "rescale_transfer": lambda: study_rescale(np.random.default_rng(seed + 7), n(50)),
        "oracle_equivalence": lambda: study_oracles(np.random.default_rng(seed + 8), n(1000)),
    }
    metrics = {}
    for name, study in studies.items():
        start = time.perf_counter()
        result = study()
        result["runtime_s"] = round(time.perf_counter() - start, 3)
        metrics[name] = result
        print(f"{name}: {result}")
    return metrics


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run the seeded acceptance studies")
    parser.add_argument("--seed", type=int, default=0, help="Base seed; each study offsets it")
    parser.add_argument("--quick", action="store_true", help="Run a tenth of the instances")
    parser.add_argument("--output", type=str, default="acceptance_metrics.json", help="Where to save the metrics")
    args = parser.parse_args()

    metrics = run_studies(args.seed, args.quick)
    dump_json(metrics, args.output)
