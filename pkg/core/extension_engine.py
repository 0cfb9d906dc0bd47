"""
Extension of maps from a subset A of a finite space.

Values on A are always copied from the input, never recomputed, so every
restriction check is bitwise. Sphere-valued extensions use either the nearest
point of A or a coordinatewise McShane extension followed by radial
projection; the splice engine glues such extensions over annuli.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import certificates
from core.certificates import CertificateSet, InequalityCheck, check_pairs, check_points
from core.errors import CoarseKitError, ExtensionStageError, PreconditionError
from core.maps import (
    AsymptoticFit,
    MetricMap,
    NormPreservingMap,
    RadialGrowthBound,
    SphereMap,
    asymptotic_fit,
    canonical_direction,
    induce,
    lip_constant,
    project,
)
from core.metric_core import PointedMetricSpace, annulus_mask
from core.pairwise import iter_blocks, vector_distances
from utils.logger import AppLogger

logger = AppLogger(name="ExtensionEngine").get_logger()


class Strategy(Enum):
    NEAREST = "nearest"
    PROJECT = "project"


def _as_strategy(strategy) -> Strategy:
    try:
        return strategy if isinstance(strategy, Strategy) else Strategy(str(strategy))
    except ValueError:
        raise PreconditionError(f"unknown sphere extension strategy {strategy!r}") from None


def _domain(f: MetricMap, over: Optional[Sequence[int]]) -> np.ndarray:
    if over is None:
        return np.arange(f.space.n)
    return np.union1d(np.asarray(over, dtype=int), f.support)


def _nearest_anchor(space: PointedMetricSpace, anchors: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Position in `anchors` of the nearest anchor to each target; ties go to the lowest index."""
    pos = np.empty(len(targets), dtype=int)
    for start, stop in iter_blocks(len(targets)):
        pos[start:stop] = np.argmin(space.dist[np.ix_(targets[start:stop], anchors)], axis=1)
    inside = np.searchsorted(anchors, targets)
    inside = np.clip(inside, 0, len(anchors) - 1)
    own = anchors[inside] == targets
    pos[own] = inside[own]
    return pos


def _with_anchor_values(f: MetricMap, domain: np.ndarray, values: np.ndarray, cls=None) -> MetricMap:
    values = np.array(values, dtype=float)
    own = np.isin(domain, f.support)
    values[own] = f.values[f.positions_of(domain[own])]
    return (cls or type(f))(f.space, domain, values)


def image_diameter(values: np.ndarray) -> float:
    n = len(values)
    best = 0.0
    for start, stop in iter_blocks(n):
        block = vector_distances(values[start:stop], values)
        if block.size:
            best = max(best, float(block.max()))
    return best


# real-valued extension


def mcshane_extend(f: MetricMap, lipschitz: Optional[Sequence[float]] = None) -> MetricMap:
    """
    g_j(x) = min over a in A of f_j(a) + L_j d(x, a), coordinate by coordinate,
    with L_j the Lipschitz constant of f_j unless given.
    """
    if f.size == 0:
        raise PreconditionError("cannot extend a map with an empty domain")
    space = f.space
    if lipschitz is None:
        lipschitz = [lip_constant(MetricMap(space, f.support, f.values[:, j])) for j in range(f.dim)]
    L = np.broadcast_to(np.asarray(lipschitz, dtype=float), (f.dim,))
    if not np.all(np.isfinite(L)):
        raise PreconditionError("McShane extension needs a finite Lipschitz constant")
    out = np.empty((space.n, f.dim))
    for start, stop in iter_blocks(space.n):
        d = space.dist[start:stop][:, f.support]
        for j in range(f.dim):
            out[start:stop, j] = (f.values[None, :, j] + L[j] * d).min(axis=1)
    return _with_anchor_values(f, np.arange(space.n), out, cls=MetricMap)


def nearest_extend(f: MetricMap, over: Optional[Sequence[int]] = None, cls=None) -> MetricMap:
    """Copies the nearest anchor value; norm-preserving inputs come back as plain maps."""
    if f.size == 0:
        raise PreconditionError("cannot extend a map with an empty domain")
    domain = _domain(f, over)
    pos = _nearest_anchor(f.space, f.support, domain)
    if cls is None and isinstance(f, NormPreservingMap):
        cls = MetricMap
    return _with_anchor_values(f, domain, f.values[pos], cls=cls)


# nearest-point transfer


@dataclass
class TransferResult:
    g: SphereMap
    eps: float
    fit_in: AsymptoticFit
    discrete_bound: Optional[Dict]
    certificates: CertificateSet

    def to_dict(self) -> Dict:
        return {
            "eps": self.eps,
            "domain": self.g.domain_ids,
            "fit_in": self.fit_in.to_dict(),
            "discrete_lipschitz": self.discrete_bound,
            "certificates": self.certificates.to_dict(),
        }


def nearest_point_transfer(f: SphereMap, targets: Sequence[int], eps: float, knee_limit: int = 4) -> TransferResult:
    """
    g(x) = f(a(x)) on A1 = {x in X1 : d(x, A) < eps}. If f' fits (lam, M)
    then g' fits (lam, 2 eps lam + M + 2 eps).
    """
    if not eps > 0:
        raise PreconditionError(f"transfer radius must be positive, got {eps}")
    if f.size == 0:
        raise PreconditionError("cannot transfer a map with an empty domain")
    space = f.space
    targets = np.unique(np.asarray(targets, dtype=int))
    close = targets[space.distance_to(f.support)[targets] < eps]
    pos = _nearest_anchor(space, f.support, close)
    g = SphereMap(space, close, f.values[pos])
    gp = induce(g)
    fit_in = asymptotic_fit(induce(f))

    certs = CertificateSet()
    for lam, M in fit_in.fit_candidates(knee_limit):
        additive = 2.0 * eps * lam + M + 2.0 * eps

        def block(start, stop, lam=lam, additive=additive):
            rows, cols = np.arange(start, stop), np.arange(gp.size)
            return gp.image_block(rows, cols), lam * gp.domain_block(rows, cols) + additive, None

        certs.add(check_pairs(f"transfer-fit(lam={lam:.4g})", gp.size, block, index=gp.support))

    discrete = None
    if gp.size >= 2:
        d = space.dist[np.ix_(close, close)]
        eps_g = float(d[~np.eye(len(close), dtype=bool)].min())
        if eps_g > 0:
            lam, M = fit_in.lam, fit_in.M
            if np.isfinite(lam):
                M_g = 2.0 * eps * lam + M + 2.0 * eps
                discrete = {"eps": eps_g, "lambda": lam, "M": M_g, "bound": lam + M_g / eps_g}
                certs.add(check_points("transfer-discrete", np.array([lip_constant(gp)]), discrete["bound"]))
    return TransferResult(g, eps, fit_in, discrete, certs)


# pasting


@dataclass
class PasteResult:
    u: MetricMap
    mu: float
    target_diameter: float
    lip_1: float
    lip_2: float
    lip_u: float
    bound: float
    check: InequalityCheck

    def to_dict(self) -> Dict:
        return {
            "mu": self.mu,
            "target_diameter": self.target_diameter,
            "lip_1": self.lip_1,
            "lip_2": self.lip_2,
            "lip_u": self.lip_u,
            "bound": self.bound,
            "certificate": self.check.to_dict(),
        }


def paste(u1: MetricMap, u2: MetricMap, mu: float, target_diameter: Optional[float] = None) -> PasteResult:
    """
    Union of two maps that agree on the overlap and whose private parts are
    mu apart; Lip(u) <= max(Lip(u1), Lip(u2), diam(Y)/mu).
    """
    if u1.space is not u2.space:
        raise PreconditionError("pasted maps must live on the same space")
    if not mu > 0:
        raise PreconditionError(f"pasting gap must be positive, got {mu}")
    space = u1.space
    shared = np.intersect1d(u1.support, u2.support)
    if len(shared):
        a = u1.values[u1.positions_of(shared)]
        b = u2.values[u2.positions_of(shared)]
        tol = certificates.tolerance()
        if np.abs(a - b).max() > tol * max(1.0, float(np.abs(a).max())):
            raise PreconditionError("pasted maps disagree on their overlap")
    only_1 = np.setdiff1d(u1.support, u2.support)
    only_2 = np.setdiff1d(u2.support, u1.support)
    gap = space.set_distance(only_1, only_2)
    if gap < mu * (1.0 - certificates.tolerance()):
        raise PreconditionError(f"pieces are {gap:.4g} apart, less than the pasting gap {mu:.4g}")

    domain = np.union1d(u1.support, u2.support)
    values = np.empty((len(domain), max(u1.dim, u2.dim)))
    from_2 = np.isin(domain, only_2)
    if (~from_2).any():
        values[~from_2] = u1.values[u1.positions_of(domain[~from_2])]
    if from_2.any():
        values[from_2] = u2.values[u2.positions_of(domain[from_2])]
    u = type(u1)(space, domain, values)

    lip_1, lip_2 = lip_constant(u1), lip_constant(u2)
    if target_diameter is None:
        target_diameter = image_diameter(values)
    bound = max(lip_1, lip_2, target_diameter / mu)

    def block(start, stop):
        rows, cols = np.arange(start, stop), np.arange(u.size)
        return u.image_block(rows, cols), bound * u.domain_block(rows, cols), None

    check = check_pairs("paste", u.size, block, index=u.support)
    return PasteResult(u, float(mu), float(target_diameter), lip_1, lip_2, lip_constant(u), bound, check)


def _paste_or_take(u1: MetricMap, u2: MetricMap, mu: float) -> Tuple[MetricMap, Optional[PasteResult]]:
    if u2.size == 0:
        return u1, None
    if u1.size == 0:
        return u2, None
    result = paste(u1, u2, mu, target_diameter=2.0)
    return result.u, result


# sphere-valued extension


@dataclass
class SphereExtension:
    g: SphereMap
    strategy: Strategy
    fallback: bool
    rho: Optional[float]
    lip_in: float
    lip_out: float
    bound: float
    check: Optional[InequalityCheck] = None

    def to_dict(self) -> Dict:
        return {
            "strategy": self.strategy.value,
            "fallback": self.fallback,
            "rho": self.rho,
            "lip_in": self.lip_in,
            "lip_out": self.lip_out,
            "bound": self.bound,
            "certificate": self.check.to_dict() if self.check else None,
        }


def _nearest_sphere(f: SphereMap, over, lip_in: float, fallback: bool, rho) -> SphereExtension:
    g = nearest_extend(f, over)
    delta = f.space.distance_to(f.support)[g.support]

    def block(start, stop):
        rows, cols = np.arange(start, stop), np.arange(g.size)
        reach = g.domain_block(rows, cols) + delta[rows][:, None] + delta[None, :]
        return g.image_block(rows, cols), lip_in * reach, None

    check = check_pairs("sphere-nearest", g.size, block, index=g.support)
    bound = lip_in * (1.0 + 2.0 * float(delta.max(initial=0.0)) / _min_gap(g))
    return SphereExtension(g, Strategy.NEAREST, fallback, rho, lip_in, lip_constant(g), bound, check)


def _min_gap(f: MetricMap) -> float:
    if f.size < 2:
        return float("inf")
    d = f.space.dist[np.ix_(f.support, f.support)]
    off = d[~np.eye(f.size, dtype=bool)]
    positive = off[off > 0]
    return float(positive.min()) if positive.size else float("inf")


def extend_sphere_map(
    f: SphereMap,
    over: Optional[Sequence[int]] = None,
    strategy="nearest",
    rho_min: float = 0.1,
) -> SphereExtension:
    """
    Extend a direction field from A to A together with `over` (default all).

    "nearest" copies the value of the nearest point of A and satisfies
    |g(x) - g(y)| <= Lip(f)(d(x, y) + d(x, A) + d(y, A)). "project" extends
    each coordinate by McShane and projects radially; it is used only while
    the extended vectors stay at least rho_min away from the origin, and
    then Lip(g) <= (2/rho) sqrt(sum L_j^2).
    """
    strategy = _as_strategy(strategy)
    if f.size == 0:
        raise PreconditionError("cannot extend a sphere map with an empty domain")
    lip_in = lip_constant(f)
    domain = _domain(f, over)
    if len(domain) == f.size:
        return SphereExtension(f, strategy, False, None, lip_in, lip_in, lip_in)
    if strategy is Strategy.NEAREST:
        return _nearest_sphere(f, over, lip_in, False, None)

    coord_lips = [lip_constant(MetricMap(f.space, f.support, f.values[:, j])) for j in range(f.dim)]
    G = mcshane_extend(f, coord_lips).values[domain]
    lengths = np.linalg.norm(G, axis=1)
    rho = float(lengths.min())
    if rho < rho_min:
        logger.info(f"Projection degenerates (rho={rho:.3g} < {rho_min}); falling back to nearest")
        return _nearest_sphere(f, over, lip_in, True, rho)
    g = _with_anchor_values(f, domain, G / lengths[:, None])
    bound = (2.0 / rho) * float(np.sqrt(np.sum(np.square(coord_lips))))

    def block(start, stop):
        rows, cols = np.arange(start, stop), np.arange(g.size)
        return g.image_block(rows, cols), bound * g.domain_block(rows, cols), None

    check = check_pairs("sphere-project", g.size, block, index=g.support)
    return SphereExtension(g, Strategy.PROJECT, False, rho, lip_in, lip_constant(g), bound, check)


# splicing over annuli


@dataclass
class SpliceParams:
    r: float = 1.0
    M: float = 2.0
    strategy: Strategy = Strategy.NEAREST
    rho_min: float = 0.1
    max_workers: int = 4

    def __post_init__(self):
        if not self.r > 0:
            raise PreconditionError(f"splice base scale must be positive, got {self.r}")
        if not self.M > 1:
            raise PreconditionError(f"splice ratio must exceed 1, got {self.M}")
        self.strategy = _as_strategy(self.strategy)

    def scale(self, k: int) -> float:
        return self.r * self.M**k

    def gap(self, k: int) -> float:
        """Pasting gap between annuli that start at r M^k and r M^{k+1}."""
        return self.scale(k) * (self.M - 1.0)

    def to_dict(self) -> Dict:
        return {"r": self.r, "M": self.M, "strategy": self.strategy.value, "rho_min": self.rho_min}


@dataclass
class ExtensionCertificate:
    input_map: MetricMap
    output_map: MetricMap
    restriction_ok: bool
    norm_preserving_ok: bool
    lip_in: float
    lip_out: float
    fit_out: AsymptoticFit
    constants_used: Dict[str, float]
    stages: List[Dict] = field(default_factory=list)
    certificates: CertificateSet = field(default_factory=CertificateSet)
    warnings: List[str] = field(default_factory=list)

    @property
    def c_emp(self) -> float:
        if self.lip_in > 0:
            return self.lip_out / self.lip_in
        return 1.0 if self.lip_out == 0 else float("inf")

    def to_dict(self) -> Dict:
        return {
            "restriction_ok": self.restriction_ok,
            "norm_preserving_ok": self.norm_preserving_ok,
            "lip_in": self.lip_in,
            "lip_out": self.lip_out,
            "c_emp": self.c_emp,
            "fit_out": self.fit_out.to_dict(),
            "constants_used": self.constants_used,
            "stages": self.stages,
            "certificates": self.certificates.to_dict(),
            "warnings": self.warnings,
            "output": self.output_map.to_dict(),
        }


def restriction_holds(f: MetricMap, g: MetricMap) -> bool:
    if not np.isin(f.support, g.support).all():
        return False
    return bool(np.array_equal(g.values[g.positions_of(f.support)], f.values))


def norm_preserved(g: MetricMap) -> bool:
    if g.size == 0:
        return True
    err = np.abs(np.linalg.norm(g.values, axis=1) - g.norms) / np.maximum(1.0, g.norms)
    return bool(err.max() <= certificates.tolerance())


STAGE_ORDER = {"f": 0, "g": 1, "h": 2, "fold": 3, "low": 4, "fold-low": 5}


class _Splicer:
    """One splice run: stage extensions, pastes and the fold over even levels."""

    def __init__(self, fp: NormPreservingMap, params: SpliceParams):
        self.fp = fp
        self.params = params
        self.space = fp.space
        self.norms = self.space.norms
        # (stage rank, k, record, check, warning); appended from worker threads
        self.records: List[Tuple[int, int, Dict, Optional[InequalityCheck], Optional[str]]] = []
        self.direction = self._directions()

    def _directions(self) -> SphereMap:
        f = project(self.fp)
        base = self.space.base_index
        if base in set(f.support.tolist()):
            return f
        logger.info("Basepoint not in the domain; adjoining it with the canonical direction")
        support = np.append(f.support, base)
        values = np.vstack([f.values, canonical_direction(f.dim)])
        return SphereMap(self.space, support, values)

    def record(self, name: str, k: int, record: Dict, check=None, warning=None) -> None:
        self.records.append((STAGE_ORDER[name], k, {"stage": name, "k": k, **record}, check, warning))

    def ordered(self):
        return sorted(self.records, key=lambda rec: (rec[0], rec[1]))

    def band(self, lo: float, hi: float, on_anchor: bool = False) -> np.ndarray:
        pool = self.direction.support if on_anchor else np.arange(self.space.n)
        return pool[annulus_mask(self.norms[pool], lo, hi)]

    def extend(self, f: SphereMap, over: np.ndarray, name: str, k: int) -> SphereMap:
        if len(over) == 0 and f.size == 0:
            return f
        if f.size == 0:
            msg = f"{name}[{k}]: no anchor points; using the canonical direction on {len(over)} points"
            logger.warning(msg)
            g = SphereMap(self.space, over, np.tile(canonical_direction(f.dim), (len(over), 1)))
            self.record(name, k, {"points": g.size, "anchors": 0, "strategy": "constant"}, warning=msg)
            return g
        ext = extend_sphere_map(f, over, self.params.strategy, self.params.rho_min)
        warning = None
        if ext.fallback:
            warning = f"{name}[{k}]: projection fell back to nearest (rho={ext.rho:.3g})"
        self.record(name, k, {"points": ext.g.size, "anchors": f.size, **ext.to_dict()}, ext.check, warning)
        return ext.g

    def run_stage(self, name: str, k: int, job: Callable[[], MetricMap]):
        try:
            return job()
        except ExtensionStageError:
            raise
        except CoarseKitError as e:
            raise ExtensionStageError(name, k, e) from e

    def parallel(self, name: str, ks: Sequence[int], job: Callable[[int], MetricMap]) -> Dict[int, MetricMap]:
        results: Dict[int, MetricMap] = {}
        with ThreadPoolExecutor(max_workers=self.params.max_workers) as executor:
            futures = {executor.submit(self.run_stage, name, k, lambda k=k: job(k)): k for k in ks}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
        return dict(sorted(results.items()))

    def paste(self, u1: MetricMap, u2: MetricMap, mu: float, name: str, k: int) -> MetricMap:
        u, result = self.run_stage(name, k, lambda: _paste_or_take(u1, u2, mu))
        if result is not None:
            self.record(name, k, {"points": u.size, **result.to_dict()}, result.check)
        return u

    def splice(self) -> SphereMap:
        p, f = self.params, self.direction
        top = float(self.norms.max())
        evens = [0]
        while p.scale(evens[-1] + 2) <= top:
            evens.append(evens[-1] + 2)
        levels = list(range(0, evens[-1] + 3))
        logger.info(f"Splicing over {len(evens)} even levels (r={p.r}, M={p.M}, strategy={p.strategy.value})")

        def f_stage(k: int) -> MetricMap:
            lo, hi = p.scale(k - 1), p.scale(k + 2)
            return self.extend(f.restrict(self.band(lo, hi, True)), self.band(lo, hi), "f", k)

        fs = self.parallel("f", levels, f_stage)

        def h_stage(k: int) -> MetricMap:
            shared = self.band(p.scale(k + 1), p.scale(k + 2), True)
            inner = np.union1d(self.band(p.scale(k), p.scale(k + 1)), shared)
            outer = np.union1d(shared, self.band(p.scale(k + 2), p.scale(k + 3)))
            g = self.paste(fs[k].restrict(inner), fs[k + 2].restrict(outer), p.gap(k + 1), "g", k)
            return self.extend(g, self.band(p.scale(k), p.scale(k + 3)), "h", k)

        hs = self.parallel("h", evens, h_stage)

        acc = hs[evens[0]]
        for k in evens[1:]:
            acc = self.paste(acc, hs[k], p.gap(k), "fold", k)

        below = f.restrict(self.band(0.0, p.r, True))
        ring = acc.restrict(self.band(p.r, p.scale(1)))
        seed = SphereMap(
            self.space,
            np.concatenate([below.support, ring.support]),
            np.vstack([below.values, ring.values]),
        )
        low = self.run_stage("low", 0, lambda: self.extend(seed, self.band(0.0, p.scale(1)), "low", 0))
        return self.paste(low, acc, p.gap(0), "fold-low", 0)


def splice_extend(fp: NormPreservingMap, params: Optional[SpliceParams] = None) -> ExtensionCertificate:
    """
    Extend a Lipschitz norm-preserving map from A to the whole space by
    extending its direction field over overlapping annuli, pasting neighbours
    two levels apart and folding the even levels in increasing order.
    """
    params = SpliceParams() if params is None else params
    space = fp.space
    if space.n >= 2:
        off = space.dist[~np.eye(space.n, dtype=bool)]
        if off.min() <= 0:
            raise PreconditionError("splice extension needs a discrete space (coincident points found)")
    if fp.size == 0:
        raise PreconditionError("cannot extend a map with an empty domain")

    lip_in = lip_constant(fp)
    constants = {"r": params.r, "M": params.M, "rho_min": params.rho_min}
    if fp.is_total:
        output = NormPreservingMap(space, fp.support, fp.values)
        return ExtensionCertificate(
            fp, output, True, True, lip_in, lip_in, asymptotic_fit(output), constants
        )

    splicer = _Splicer(fp, params)
    g = splicer.splice()
    if g.size != space.n:
        raise ExtensionStageError("splice", None, PreconditionError(f"splice covered {g.size} of {space.n} points"))
    values = splicer.norms[g.support][:, None] * g.values
    values[np.isin(g.support, fp.support)] = fp.values
    output = NormPreservingMap(space, g.support, values)

    lip_out = lip_constant(output)
    ordered = splicer.ordered()
    cert = ExtensionCertificate(
        input_map=fp,
        output_map=output,
        restriction_ok=restriction_holds(fp, output),
        norm_preserving_ok=norm_preserved(output),
        lip_in=lip_in,
        lip_out=lip_out,
        fit_out=asymptotic_fit(output),
        constants_used=constants,
        stages=[rec[2] for rec in ordered],
        certificates=CertificateSet([rec[3] for rec in ordered if rec[3] is not None]),
        warnings=[rec[4] for rec in ordered if rec[4]],
    )
    logger.info(f"Splice done: Lip in {lip_in:.4g}, Lip out {lip_out:.4g}, c_emp {cert.c_emp:.4g}")
    return cert


# retraction extension


@dataclass
class RetractionResult:
    g: MetricMap
    R: float
    vacuous: bool
    fit_in: AsymptoticFit
    certificates: CertificateSet

    def to_dict(self) -> Dict:
        return {
            "R": self.R,
            "vacuous": self.vacuous,
            "domain": self.g.domain_ids,
            "fit_in": self.fit_in.to_dict(),
            "certificates": self.certificates.to_dict(),
        }


def retract_extend(f: MetricMap, growth: RadialGrowthBound, R: float, knee_limit: int = 4) -> RetractionResult:
    """
    g = f o r on the closed neighbourhood B(A, R), r(x) the nearest point of A.
    A fit (lam, M) of f gives (lam, 2 lam R + M) for g, and |g(x)| >= c|x| - cR - b.
    """
    if not R > 0:
        raise PreconditionError(f"retraction radius must be positive, got {R}")
    if f.size == 0:
        raise PreconditionError("cannot extend a map with an empty domain")
    space = f.space
    lengths = np.linalg.norm(f.values, axis=1)
    growth_in = growth.check(lengths, f.norms)
    if not growth_in.holds:
        raise PreconditionError(f"map violates its radial growth bound (worst excess {growth_in.worst_excess:.3e})")

    ball = np.flatnonzero(space.distance_to(f.support) <= R)
    fit_in = asymptotic_fit(f)
    if len(ball) == f.size:
        logger.warning(f"B(A, {R}) = A; retraction extension is vacuous")
        return RetractionResult(f, float(R), True, fit_in, CertificateSet([growth_in]))

    g = nearest_extend(f, ball, cls=MetricMap)
    certs = CertificateSet([growth_in])
    for lam, M in fit_in.fit_candidates(knee_limit):
        additive = 2.0 * lam * R + M

        def block(start, stop, lam=lam, additive=additive):
            rows, cols = np.arange(start, stop), np.arange(g.size)
            return g.image_block(rows, cols), lam * g.domain_block(rows, cols) + additive, None

        certs.add(check_pairs(f"retraction-fit(lam={lam:.4g})", g.size, block, index=g.support))
    certs.add(
        check_points(
            "retraction-growth",
            growth.c * g.norms - growth.c * R - growth.b,
            np.linalg.norm(g.values, axis=1),
            index=g.support,
        )
    )
    return RetractionResult(g, float(R), False, fit_in, certs)


# empirical extension modulus


@dataclass
class ModulusRow:
    s: float
    instances: int
    c_raw: float
    c_cumulative: float
    c_regularized: float


@dataclass
class ModulusTable:
    strategy: Strategy
    rows: List[ModulusRow]
    per_instance: List[Dict]

    def to_dict(self) -> Dict:
        return {
            "strategy": self.strategy.value,
            "rows": [row.__dict__ for row in self.rows],
            "per_instance": self.per_instance,
        }

    def csv_rows(self):
        header = ["s", "instances", "c_raw", "c_cumulative", "c_regularized"]
        return header, [[getattr(row, h) for h in header] for row in self.rows]


def extension_modulus(
    family: Sequence[SphereMap],
    strategy="nearest",
    rho_min: float = 0.1,
    bucket_digits: int = 9,
) -> ModulusTable:
    """
    For each (Y, B, f) extend f over Y and bucket Lip(g)/Lip(f) by
    s = Lip(f) diam(Y); 0/0 counts as 1. `c_cumulative` is the running max
    over s (the modulus proper), `c_regularized` the running max from the
    right, which is nonincreasing.
    """
    strategy = _as_strategy(strategy)
    buckets: Dict[float, List[float]] = {}
    per_instance = []
    for i, f in enumerate(family):
        ext = extend_sphere_map(f, None, strategy, rho_min)
        lip_f, lip_g = ext.lip_in, ext.lip_out
        s = round(lip_f * f.space.diameter(), bucket_digits)
        if lip_f > 0:
            ratio = lip_g / lip_f
        else:
            ratio = 1.0 if lip_g == 0 else float("inf")
        buckets.setdefault(s, []).append(ratio)
        per_instance.append({"index": i, "s": s, "lip_f": lip_f, "lip_g": lip_g, "ratio": ratio, "fallback": ext.fallback})

    keys = sorted(buckets)
    raw = np.array([max(buckets[s]) for s in keys])
    cumulative = np.maximum.accumulate(raw) if len(raw) else raw
    regularized = np.maximum.accumulate(raw[::-1])[::-1] if len(raw) else raw
    rows = [
        ModulusRow(float(s), len(buckets[s]), float(c), float(cc), float(cr))
        for s, c, cc, cr in zip(keys, raw, cumulative, regularized)
    ]
    return ModulusTable(strategy, rows, per_instance)
