"""
Maps out of finite pointed metric spaces.

A map is defined on a subset A of its space (`support`, ambient indices in
increasing order) and carries one vector per point of A. Norms always come
from the ambient space, so |x| is d(x, x0) even when x0 is not in A.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core import certificates
from core.certificates import CertificateSet, InequalityCheck, check_pairs, check_points
from core.errors import (
    InstanceFormatError,
    NormPreservationError,
    PreconditionError,
    UnboundedProfileError,
)
from core.metric_core import PointedMetricSpace, annulus_mask
from core.pairwise import iter_blocks, max_ratio, upper_mask, vector_distances
from core.sublinear import PiecewiseLinearFunction
from utils.logger import AppLogger

logger = AppLogger(name="Maps").get_logger()


@dataclass(eq=False)
class MetricMap:
    space: PointedMetricSpace
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=int).ravel()
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or len(support) != values.shape[0]:
            raise InstanceFormatError(
                f"{len(support)} domain points but values of shape {values.shape}"
            )
        order = np.argsort(support, kind="stable")
        support, values = support[order], values[order]
        if len(support) and (support[0] < 0 or support[-1] >= self.space.n):
            raise InstanceFormatError("map domain is not a subset of its space")
        if (np.diff(support) == 0).any():
            raise InstanceFormatError("map assigns two values to one point")
        support.setflags(write=False)
        values.setflags(write=False)
        self.support = support
        self.values = values
        self._validate()

    def _validate(self) -> None:
        pass

    @classmethod
    def total(cls, space: PointedMetricSpace, values) -> "MetricMap":
        return cls(space, np.arange(space.n), values)

    @property
    def size(self) -> int:
        return len(self.support)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def norms(self) -> np.ndarray:
        return self.space.norms[self.support]

    @property
    def is_total(self) -> bool:
        return self.size == self.space.n

    @property
    def domain_ids(self) -> List[str]:
        return self.space.ids(self.support)

    def positions_of(self, ambient) -> np.ndarray:
        ambient = np.asarray(ambient, dtype=int)
        pos = np.searchsorted(self.support, ambient)
        pos = np.clip(pos, 0, max(self.size - 1, 0))
        if self.size == 0 or (self.support[pos] != ambient).any():
            raise PreconditionError("point outside the domain of the map")
        return pos

    def contains(self, ambient) -> np.ndarray:
        return np.isin(np.asarray(ambient, dtype=int), self.support)

    def value_at(self, point_id) -> np.ndarray:
        return self.values[self.positions_of([self.space.index_of(point_id)])[0]]

    def with_values(self, values) -> "MetricMap":
        return type(self)(self.space, self.support, values)

    def restrict(self, ambient) -> "MetricMap":
        keep = np.isin(self.support, np.asarray(ambient, dtype=int))
        return type(self)(self.space, self.support[keep], self.values[keep])

    def image_block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return vector_distances(self.values[rows], self.values[cols])

    def domain_block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return self.space.dist[np.ix_(self.support[rows], self.support[cols])]

    def to_dict(self) -> Dict:
        return {
            "target_dim": self.dim,
            "values": {pid: row.tolist() for pid, row in zip(self.domain_ids, self.values)},
        }


class SphereMap(MetricMap):
    """Direction field: every value is a unit vector of R^{m+1}."""

    def _validate(self) -> None:
        if self.size == 0:
            return
        err = np.abs(np.linalg.norm(self.values, axis=1) - 1.0)
        if err.max() > certificates.tolerance():
            bad = self.space.points[self.support[int(np.argmax(err))]]
            raise PreconditionError(f"sphere map value at {bad!r} is not a unit vector")


class NormPreservingMap(MetricMap):
    """Values f'(x) with |f'(x)| = |x|."""

    def _validate(self) -> None:
        if self.size == 0:
            return
        lengths = np.linalg.norm(self.values, axis=1)
        norms = self.norms
        err = np.abs(lengths - norms) / np.maximum(1.0, norms)
        if err.max() > certificates.tolerance():
            bad = self.space.points[self.support[int(np.argmax(err))]]
            raise NormPreservationError(f"|f'(x)| differs from |x| at {bad!r}")


@dataclass(eq=False)
class SpaceMap:
    """Map between pointed metric spaces, stored as target indices."""

    space: PointedMetricSpace
    support: np.ndarray
    target: PointedMetricSpace
    targets: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=int).ravel()
        targets = np.asarray(self.targets, dtype=int).ravel()
        if len(support) != len(targets):
            raise InstanceFormatError("one target per domain point is required")
        if len(targets) and (targets.min() < 0 or targets.max() >= self.target.n):
            raise InstanceFormatError("target index outside the codomain")
        order = np.argsort(support, kind="stable")
        self.support = support[order]
        self.targets = targets[order]

    @property
    def size(self) -> int:
        return len(self.support)

    def image_block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return self.target.dist[np.ix_(self.targets[rows], self.targets[cols])]

    def domain_block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return self.space.dist[np.ix_(self.support[rows], self.support[cols])]

    def positions_of(self, ambient) -> np.ndarray:
        ambient = np.asarray(ambient, dtype=int)
        pos = np.clip(np.searchsorted(self.support, ambient), 0, max(self.size - 1, 0))
        if self.size == 0 or (self.support[pos] != ambient).any():
            raise PreconditionError("point outside the domain of the map")
        return pos


AnyMap = Union[MetricMap, SpaceMap]


def compose(g: AnyMap, f: SpaceMap) -> AnyMap:
    """g after f; the image of f must lie in the domain of g."""
    if g.space is not f.target and g.space.points != f.target.points:
        raise PreconditionError("codomain of f is not the domain of g")
    pos = g.positions_of(f.targets)
    if isinstance(g, SpaceMap):
        return SpaceMap(f.space, f.support, g.target, g.targets[pos])
    return MetricMap(f.space, f.support, g.values[pos])


def lip_witness(f: AnyMap, positions: Optional[np.ndarray] = None) -> Tuple[float, Optional[Tuple[str, str]]]:
    pos = np.arange(f.size) if positions is None else np.asarray(positions, dtype=int)
    lip, pair = max_ratio(
        lambda r, c: f.image_block(pos[r], pos[c]),
        lambda r, c: f.domain_block(pos[r], pos[c]),
        len(pos),
    )
    if pair is None:
        return lip, None
    a, b = (f.space.points[f.support[pos[p]]] for p in pair)
    return lip, (a, b)


def lip_constant(f: AnyMap, positions: Optional[np.ndarray] = None) -> float:
    """sup |f(x) - f(y)| / d(x, y); inf when coincident points have distinct values."""
    if f.size < 2 and positions is None:
        return 0.0
    return lip_witness(f, positions)[0]


def lip_on(f: AnyMap, ambient) -> float:
    """Lipschitz constant of f restricted to the ambient indices given."""
    return lip_constant(f, np.flatnonzero(np.isin(f.support, np.asarray(ambient, dtype=int))))


# asymptotic fits


@dataclass
class AsymptoticFit:
    """
    M(lam) = max over pairs of (|f(x) - f(y)| - lam * d(x, y))^+, stored as the
    upper chain of the points (d, |f(x) - f(y)|). `pareto` lists the knees of
    M from lam = 0 to the smallest lam with M = 0.
    """

    lam: float
    M: float
    pareto: List[Tuple[float, float]]
    chain: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 2)))

    def M_at(self, lam: float) -> float:
        if len(self.chain) == 0:
            return 0.0
        return float(max(0.0, np.max(self.chain[:, 1] - lam * self.chain[:, 0])))

    def fit_candidates(self, limit: int = 16) -> List[Tuple[float, float]]:
        knees = [(l, m) for l, m in self.pareto if np.isfinite(l)]
        if len(knees) <= limit:
            return knees
        picks = np.unique(np.linspace(0, len(knees) - 1, limit).round().astype(int))
        return [knees[i] for i in picks]

    def discrete_lipschitz_bound(self, eps: float) -> Dict:
        """On an eps-discrete domain every fit (lam, M) gives Lip <= lam + M/eps."""
        if not eps > 0:
            raise PreconditionError("discreteness constant must be positive")
        rows = [
            {"lambda": l, "M": m, "bound": l + m / eps}
            for l, m in self.pareto
            if np.isfinite(l)
        ]
        best = min((r["bound"] for r in rows), default=float("inf"))
        return {"eps": eps, "per_knee": rows, "best": best}

    def to_dict(self) -> Dict:
        return {"lambda": self.lam, "M": self.M, "pareto": [list(p) for p in self.pareto]}


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _rising_chain(points: np.ndarray) -> np.ndarray:
    """Upper hull of (d, D) points from the smallest d up to the first maximum of D."""
    if len(points) == 0:
        return points
    order = np.lexsort((-points[:, 1], points[:, 0]))
    pts = points[order]
    first = np.r_[True, pts[1:, 0] != pts[:-1, 0]]
    pts = pts[first]
    hull: List[np.ndarray] = []
    for p in pts:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) >= 0:
            hull.pop()
        hull.append(p)
    hull_arr = np.array(hull)
    peak = int(np.argmax(hull_arr[:, 1]))
    return hull_arr[: peak + 1]


def asymptotic_fit(f: AnyMap) -> AsymptoticFit:
    n = f.size
    pieces = [np.zeros((1, 2))]
    cols = np.arange(n)
    for start, stop in iter_blocks(n):
        rows = cols[start:stop]
        keep = upper_mask(start, stop, n)
        d = f.domain_block(rows, cols)[keep]
        D = f.image_block(rows, cols)[keep]
        if d.size:
            pieces.append(_rising_chain(np.column_stack([d, D])))
    chain = _rising_chain(np.vstack(pieces))

    pareto: List[Tuple[float, float]] = [(0.0, float(chain[-1, 1]))]
    for i in range(len(chain) - 1, 0, -1):
        slope = (chain[i, 1] - chain[i - 1, 1]) / (chain[i, 0] - chain[i - 1, 0])
        pareto.append((float(slope), float(max(0.0, chain[i, 1] - slope * chain[i, 0]))))
    floor = float(chain[0, 1])
    if floor > 0:
        # coincident points with distinct images: no finite lam reaches M = 0
        return AsymptoticFit(float("inf"), floor, pareto, chain)
    lam_star = pareto[-1][0]
    pareto[-1] = (lam_star, 0.0)
    return AsymptoticFit(lam_star, 0.0, pareto, chain)


def discrete_lipschitz_bound(f: AnyMap, eps: Optional[float] = None) -> Dict:
    if eps is None:
        off = f.domain_block(np.arange(f.size), np.arange(f.size))
        off = off[~np.eye(f.size, dtype=bool)]
        eps = float(off.min()) if off.size else float("inf")
        if not np.isfinite(eps):
            return {"eps": eps, "per_knee": [], "best": 0.0}
    report = asymptotic_fit(f).discrete_lipschitz_bound(eps)
    report["measured_lip"] = lip_constant(f)
    return report


# norm-preserving induction


def canonical_direction(dim: int) -> np.ndarray:
    e1 = np.zeros(dim)
    e1[0] = 1.0
    return e1


def induce(f: SphereMap) -> NormPreservingMap:
    return NormPreservingMap(f.space, f.support, f.norms[:, None] * f.values)


def project(fp: MetricMap, default_direction: Optional[Sequence[float]] = None) -> SphereMap:
    lengths = np.linalg.norm(fp.values, axis=1)
    norms = fp.norms
    err = np.abs(lengths - norms) / np.maximum(1.0, norms)
    if fp.size and err.max() > certificates.tolerance():
        bad = fp.space.points[fp.support[int(np.argmax(err))]]
        raise NormPreservationError(f"cannot project: |f'(x)| differs from |x| at {bad!r}")
    default = canonical_direction(fp.dim) if default_direction is None else np.asarray(default_direction, dtype=float)
    dirs = np.tile(default, (fp.size, 1))
    live = lengths > 0
    dirs[live] = fp.values[live] / lengths[live, None]
    return SphereMap(fp.space, fp.support, dirs)


# annulus profiles


@dataclass
class ProfileRow:
    k: int
    lower: float
    upper: float
    size_x: int
    size_y: int
    lip_x: float
    lip_y: float
    scaled_x: float
    scaled_y: float


@dataclass
class AnnulusProfile:
    r: float
    Mratio: float
    rows: List[ProfileRow]
    C: float
    C_y: float
    trend: str
    trend_ratio: float
    lam_measured: Optional[float] = None
    forward: Optional[InequalityCheck] = None

    @property
    def bounded(self) -> bool:
        return self.trend == "bounded"

    def to_dict(self) -> Dict:
        out = {
            "r": self.r,
            "M": self.Mratio,
            "C": self.C,
            "C_y": self.C_y,
            "trend": self.trend,
            "trend_ratio": self.trend_ratio,
            "per_k": [row.__dict__ for row in self.rows],
        }
        if self.forward is not None:
            out["lambda_induced"] = self.lam_measured
            out["forward_bound"] = self.Mratio * (self.lam_measured + 1) / self.r
        return out

    def csv_rows(self):
        header = ["k", "lower", "upper", "size_x", "size_y", "lip_x", "lip_y", "scaled_x", "scaled_y"]
        return header, [[getattr(row, h) for h in header] for row in self.rows]


def growth_trend(values: Sequence[float]) -> Tuple[str, float]:
    """Second-half max over first-half max; >= 2 reads as unbounded growth."""
    vals = np.asarray(values, dtype=float)
    if len(vals) < 2:
        return "bounded", 1.0
    half = len(vals) // 2
    first, second = vals[:half].max(), vals[half:].max()
    if first > 0:
        ratio = float(second / first)
    else:
        ratio = float("inf") if second > 0 else 1.0
    return ("unbounded-trend" if ratio >= 2.0 else "bounded"), ratio


def annulus_profile(f: SphereMap, r: float, Mratio: float = 2.0, forward_check: bool = True) -> AnnulusProfile:
    if not r > 0:
        raise PreconditionError(f"profile base radius must be positive, got {r}")
    if not Mratio > 1:
        raise PreconditionError(f"profile ratio must exceed 1, got {Mratio}")
    norms = f.norms
    top = float(norms.max()) if f.size else 0.0

    rows: List[ProfileRow] = []
    k = 1
    while r * Mratio ** (k - 1) <= top:
        lower, upper = r * Mratio ** (k - 1), r * Mratio ** (k + 1)
        in_x = np.flatnonzero(annulus_mask(norms, lower, upper))
        in_y = np.flatnonzero(annulus_mask(norms, lower, np.inf))
        lip_x = lip_constant(f, in_x) if len(in_x) >= 2 else 0.0
        lip_y = lip_constant(f, in_y) if len(in_y) >= 2 else 0.0
        scale = Mratio**k
        rows.append(
            ProfileRow(k, lower, upper, len(in_x), len(in_y), lip_x, lip_y, scale * lip_x, scale * lip_y)
        )
        k += 1
    while rows and rows[-1].size_x == 0:
        rows.pop()
    if not rows:
        raise PreconditionError(f"no nonempty annulus above r={r}")

    trend, ratio = growth_trend([row.scaled_x for row in rows])
    profile = AnnulusProfile(
        r=float(r),
        Mratio=float(Mratio),
        rows=rows,
        C=max(row.scaled_x for row in rows),
        C_y=max(row.scaled_y for row in rows),
        trend=trend,
        trend_ratio=ratio,
    )
    if forward_check:
        lam = lip_constant(induce(f))
        scaled_y = np.array([row.scaled_y for row in rows])
        ks = np.array([row.k for row in rows])
        profile.lam_measured = lam
        profile.forward = check_points(
            "annulus-forward",
            scaled_y,
            Mratio * (lam + 1.0) / r,
            mask=ks >= 2,
            index=ks,
        )
    logger.info(f"Annulus profile: {len(rows)} levels, C={profile.C:.4g}, trend={trend}")
    return profile


@dataclass
class LipschitzBound:
    bound: float
    measured: float
    check: InequalityCheck
    inner: Optional[InequalityCheck] = None

    def to_dict(self) -> Dict:
        out = {"bound": self.bound, "measured": self.measured, "certificate": self.check.to_dict()}
        if self.inner is not None:
            out["inner_certificate"] = self.inner.to_dict()
        return out

    def checks(self) -> List[InequalityCheck]:
        return [self.check] + ([self.inner] if self.inner is not None else [])


def profile_implies_lipschitz(f: SphereMap, profile: AnnulusProfile) -> LipschitzBound:
    """
    Lip(f') <= max(rMC + 1, 2/(M - 1) + 1) on pairs with both norms >= r.
    Pairs touching the r-ball are held to the coarse bound L d + 2r instead,
    which |f'(x)| = |x| < r guarantees.
    """
    if not profile.bounded:
        raise UnboundedProfileError(
            f"profile grows (second/first half ratio {profile.trend_ratio:.3g}); no bound certified"
        )
    r, M, C = profile.r, profile.Mratio, profile.C
    bound = max(r * M * C + 1.0, 2.0 / (M - 1.0) + 1.0)
    fp = induce(f)
    outer = fp.norms >= r
    pos = np.flatnonzero(outer)
    measured = lip_constant(fp, pos) if len(pos) >= 2 else 0.0

    def block(start, stop):
        rows, cols = pos[start:stop], pos
        return fp.image_block(rows, cols), bound * fp.domain_block(rows, cols), None

    check = check_pairs("profile-lipschitz", len(pos), block, index=fp.support[pos])
    inner = None
    if not outer.all():

        def inner_block(start, stop):
            rows, cols = np.arange(start, stop), np.arange(fp.size)
            touching = ~outer[rows][:, None] | ~outer[None, :]
            return fp.image_block(rows, cols), bound * fp.domain_block(rows, cols) + 2.0 * r, touching

        inner = check_pairs("profile-inner-ball", fp.size, inner_block, index=fp.support)
    return LipschitzBound(bound, measured, check, inner)


# Higson sublinearity


def higson_pointwise_check(f: SphereMap, lam: float, M: float) -> InequalityCheck:
    """max(|x|, |y|) * |f(x) - f(y)| <= (lam + 1) d(x, y) + M over all pairs."""
    norms = f.norms

    def block(start, stop):
        rows = np.arange(start, stop)
        cols = np.arange(f.size)
        big = np.maximum(norms[rows][:, None], norms[None, :])
        return big * f.image_block(rows, cols), (lam + 1.0) * f.domain_block(rows, cols) + M, None

    return check_pairs("higson-pointwise", f.size, block, index=f.support)


@dataclass
class DefectReport:
    R: float
    defect: float
    pairs: int
    bound: Optional[float] = None
    bound_fit: Optional[Tuple[float, float]] = None
    certificates: CertificateSet = field(default_factory=CertificateSet)

    def to_dict(self) -> Dict:
        return {
            "R": self.R,
            "defect": self.defect,
            "pairs": self.pairs,
            "bound": self.bound,
            "bound_fit": list(self.bound_fit) if self.bound_fit else None,
            "certificates": self.certificates.to_dict(),
        }


def sublinear_defect(
    f: SphereMap,
    s: PiecewiseLinearFunction,
    R: float,
    fit: Optional[AsymptoticFit] = None,
    with_bound: bool = True,
) -> DefectReport:
    """
    Largest |f(x) - f(y)| over pairs with min(|x|, |y|) >= R and d(x, y) at
    most s of one of the two norms.
    """
    if R < 0:
        raise PreconditionError(f"defect radius must be nonnegative, got {R}")
    norms = f.norms
    pos = np.flatnonzero(norms >= R)
    reach = s(norms[pos]) if len(pos) else np.zeros(0)
    n = len(pos)
    defect, pairs = 0.0, 0
    for start, stop in iter_blocks(n):
        rows, cols = pos[start:stop], pos
        allowed = f.domain_block(rows, cols) <= np.maximum(reach[start:stop][:, None], reach[None, :])
        allowed &= upper_mask(start, stop, n)
        if allowed.any():
            pairs += int(allowed.sum())
            defect = max(defect, float(f.image_block(rows, cols)[allowed].max()))
    report = DefectReport(float(R), defect, pairs)
    if not with_bound:
        return report

    fit = asymptotic_fit(induce(f)) if fit is None else fit
    ratio = s.sup_ratio_beyond(R)
    best, best_fit = float("inf"), None
    for lam, M in fit.fit_candidates():
        additive = 0.0 if M == 0 else (M / R if R > 0 else float("inf"))
        value = (lam + 1.0) * ratio + additive
        if value < best:
            best, best_fit = value, (lam, M)
    report.bound, report.bound_fit = best, best_fit
    report.certificates.add(check_points("defect-bound", np.array([defect]), best))
    if best_fit is not None:
        report.certificates.add(higson_pointwise_check(f, *best_fit))
    return report


# rescaling by radial functions


@dataclass
class RadialGrowthBound:
    c: float
    b: float

    def __post_init__(self):
        if not self.c > 0:
            raise PreconditionError(f"growth slope must be positive, got {self.c}")
        if self.b < 0:
            raise PreconditionError(f"growth offset must be nonnegative, got {self.b}")

    def check(self, values: np.ndarray, norms: np.ndarray) -> InequalityCheck:
        return check_points("radial-growth", self.c * norms - self.b, values)


@dataclass
class RescaleTransfer:
    F: MetricMap
    fit_f_prime: AsymptoticFit
    fit_F: AsymptoticFit
    constants: Dict[str, float]
    certificates: CertificateSet

    def to_dict(self) -> Dict:
        return {
            "fit_f_prime": self.fit_f_prime.to_dict(),
            "fit_F": self.fit_F.to_dict(),
            "constants": self.constants,
            "certificates": self.certificates.to_dict(),
        }


def rescale_transfer(
    f: SphereMap,
    s: MetricMap,
    growth: RadialGrowthBound,
    knee_limit: int = 4,
) -> RescaleTransfer:
    """
    F(x) = s(x) f(x) for a radial scale s with s >= c|x| - b, checking that a
    fit of f' gives one of F and conversely.

    Beyond T = 2b/c the growth bound gives s(x) >= (c/2)|x|, which drives the
    converse direction; pairs touching the ball of radius T are bounded
    directly.
    """
    if s.dim != 1 or s.size != f.size or (s.support != f.support).any():
        raise PreconditionError("scale function must be real-valued on the domain of f")
    sv = s.values[:, 0]
    if (sv < 0).any():
        raise PreconditionError("scale function takes negative values")
    norms = f.norms
    growth_check = growth.check(sv, norms)
    if not growth_check.holds:
        raise PreconditionError(
            f"scale function violates |s(x)| >= {growth.c}|x| - {growth.b} "
            f"(worst excess {growth_check.worst_excess:.3e})"
        )

    F = MetricMap(f.space, f.support, sv[:, None] * f.values)
    fp = induce(f)
    fit_fp = asymptotic_fit(fp)
    fit_F = asymptotic_fit(F)
    lam_s = lip_constant(s)
    M_s = float(max(0.0, np.max(sv - lam_s * norms))) if f.size else 0.0
    c_half = growth.c / 2.0
    T = growth.b / c_half
    far = norms > T
    factor = float(np.max(sv[far] / norms[far])) if far.any() else 0.0
    constants = {
        "c": growth.c,
        "b": growth.b,
        "c_prime": c_half,
        "threshold": T,
        "lambda_s": lam_s,
        "M_s": M_s,
        "scale_factor": factor,
    }
    certs = CertificateSet([growth_check])

    def near(rows, cols):
        return np.minimum(norms[rows][:, None], norms[None, cols]) <= T

    for u, v in fit_fp.fit_candidates(knee_limit):

        def forward(start, stop, u=u, v=v):
            rows, cols = np.arange(start, stop), np.arange(f.size)
            d = F.domain_block(rows, cols)
            rhs = np.where(
                near(rows, cols),
                lam_s * d + 2.0 * lam_s * T + 2.0 * M_s,
                factor * ((u + 1.0) * d + v) + lam_s * d,
            )
            return F.image_block(rows, cols), rhs, None

        certs.add(check_pairs(f"rescale-forward(lam={u:.4g},M={v:.4g})", f.size, forward, index=f.support))

    for lam_F, M_F in fit_F.fit_candidates(knee_limit):
        lam = max(lam_F, lam_s)

        def backward(start, stop, lam=lam, M=M_F):
            rows, cols = np.arange(start, stop), np.arange(f.size)
            d = fp.domain_block(rows, cols)
            rhs = np.where(
                near(rows, cols),
                d + 2.0 * T,
                (2.0 * lam * d + 2.0 * M) / c_half + d,
            )
            return fp.image_block(rows, cols), rhs, None

        certs.add(check_pairs(f"rescale-backward(lam={lam_F:.4g},M={M_F:.4g})", f.size, backward, index=f.support))

    return RescaleTransfer(F, fit_fp, fit_F, constants, certs)
