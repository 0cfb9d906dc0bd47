"""
Shrinking colored covers to lower multiplicity.

A colored cover uses m+2 colors; points that lie in m+2 sets are pushed off
the top simplex of the nerve by extending the nerve map from the
low-multiplicity points to the simplex boundary, and every set keeps only the
points whose pushed coordinate for it stays positive.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from core.certificates import CertificateSet, check_points
from core.cones import sphere_simplex_homeo
from core.errors import CoarseKitError, ExtensionStageError, InstanceFormatError, PreconditionError
from core.extension_engine import Strategy, _as_strategy, extend_sphere_map
from core.maps import MetricMap, SphereMap, lip_constant
from core.metric_core import PointedMetricSpace
from core.partitions import Cover, NerveMap, build_nerve_map, canonical_partition, complement_distances
from utils.logger import AppLogger

logger = AppLogger(name="CoverShrink").get_logger()

SNAP = 1e-12

Family = Union[Cover, np.ndarray, Mapping[str, Sequence]]


@dataclass(eq=False)
class ColoredCover:
    cover: Cover
    colors: Tuple[int, ...]
    r: float
    C: float

    def __post_init__(self):
        colors = tuple(int(c) for c in self.colors)
        if len(colors) != self.cover.k:
            raise InstanceFormatError("one color per cover set is required")
        if min(colors) < 1:
            raise InstanceFormatError("colors are numbered from 1")
        if not self.r > 0:
            raise PreconditionError(f"cover scale must be positive, got {self.r}")
        if not self.C > 0:
            raise PreconditionError(f"mesh constant must be positive, got {self.C}")
        self.colors = colors
        self.r = float(self.r)
        self.C = float(self.C)

    @classmethod
    def from_sets(cls, space: PointedMetricSpace, sets: Mapping[str, Sequence], colors: Mapping[str, int], r, C):
        cover = Cover.from_sets(space, sets)
        try:
            return cls(cover, tuple(colors[name] for name in cover.names), r, C)
        except KeyError as e:
            raise InstanceFormatError(f"no color given for set {e}") from None

    @property
    def space(self) -> PointedMetricSpace:
        return self.cover.space

    @property
    def m(self) -> int:
        return max(self.colors) - 2

    def to_dict(self) -> Dict:
        return {
            **self.cover.to_dict(),
            "colors": dict(zip(self.cover.names, self.colors)),
            "r": self.r,
            "C": self.C,
        }


def _members(space: Optional[PointedMetricSpace], family: Family) -> np.ndarray:
    if isinstance(family, Cover):
        return family.members
    if isinstance(family, Mapping):
        members = np.zeros((len(family), space.n), dtype=bool)
        for i, ids in enumerate(family.values()):
            members[i, space.indices_of(ids)] = True
        return members
    return np.atleast_2d(np.asarray(family, dtype=bool))


def multiplicity(family: Family, space: Optional[PointedMetricSpace] = None) -> int:
    members = _members(space, family)
    if members.size == 0:
        return 0
    return int(members.sum(axis=0).max())


def lebesgue_number(space: PointedMetricSpace, family: Family) -> float:
    """
    min over x of max over U of d(x, X minus U); +inf when some member is the
    whole space. Closed balls of this radius fit inside some member.
    """
    members = _members(space, family)
    if members.shape[1] != space.n:
        raise InstanceFormatError(f"membership matrix of shape {members.shape} for {space.n} points")
    uncovered = np.flatnonzero(~members.any(axis=0))
    if len(uncovered):
        raise PreconditionError(f"family does not cover the space: {space.ids(uncovered[:5])} missing")
    cover = Cover(space, tuple(str(i) for i in range(len(members))), members)
    return float(complement_distances(cover).max(axis=1).min())


# validation


@dataclass
class ColoredCoverReport:
    ok: bool
    disjoint_ok: bool
    mesh_ok: bool
    worst_gap: float
    worst_pair: Optional[Tuple[str, str]]
    mesh: float
    mesh_bound: float
    colors: int
    violations: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "ok": self.ok,
            "disjoint_ok": self.disjoint_ok,
            "mesh_ok": self.mesh_ok,
            "worst_same_color_gap": self.worst_gap,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "mesh": self.mesh,
            "mesh_bound": self.mesh_bound,
            "colors": self.colors,
            "violations": self.violations,
        }


def validate_colored_cover(cc: ColoredCover) -> ColoredCoverReport:
    """Same-colored sets must be r apart and every set must have diameter at most C r."""
    space, cover = cc.space, cc.cover
    mesh_bound = cc.C * cc.r
    violations = []
    worst_gap, worst_pair = float("inf"), None
    colors = np.asarray(cc.colors)
    for color in np.unique(colors):
        group = np.flatnonzero(colors == color)
        for a_pos, a in enumerate(group):
            for b in group[a_pos + 1:]:
                gap = space.set_distance(cover.set_indices(a), cover.set_indices(b))
                if gap < worst_gap:
                    worst_gap, worst_pair = gap, (cover.names[a], cover.names[b])
                if gap < cc.r:
                    violations.append({"kind": "disjointness", "sets": [cover.names[a], cover.names[b]], "gap": gap})

    diameters = [space.diameter(cover.set_indices(i)) for i in range(cover.k)]
    for i, diam in enumerate(diameters):
        if diam > mesh_bound:
            violations.append({"kind": "mesh", "set": cover.names[i], "diameter": diam})
    disjoint_ok = not any(v["kind"] == "disjointness" for v in violations)
    mesh_ok = not any(v["kind"] == "mesh" for v in violations)
    if violations:
        logger.warning(f"Colored cover has {len(violations)} violations")
    return ColoredCoverReport(
        ok=disjoint_ok and mesh_ok,
        disjoint_ok=disjoint_ok,
        mesh_ok=mesh_ok,
        worst_gap=worst_gap,
        worst_pair=worst_pair,
        mesh=max(diameters),
        mesh_bound=mesh_bound,
        colors=len(np.unique(colors)),
        violations=violations,
    )


# nerve


@dataclass(eq=False)
class ColoredNerve:
    cc: ColoredCover
    nerve: NerveMap
    lip_phi: float
    lam: float
    top_simplices: List[Tuple[int, ...]]
    preimages: Dict[Tuple[int, ...], np.ndarray]
    certificates: CertificateSet

    @property
    def phi(self) -> np.ndarray:
        return self.nerve.simplex_coords

    @property
    def counts(self) -> np.ndarray:
        return self.cc.cover.members.sum(axis=0)

    def simplex_names(self, simplex: Tuple[int, ...]) -> List[str]:
        return [self.cc.cover.names[i] for i in simplex]

    def to_dict(self) -> Dict:
        space = self.cc.space
        return {
            "lip_phi": self.lip_phi,
            "lambda": self.lam,
            "top_simplices": [
                {
                    "sets": self.simplex_names(s),
                    "points": len(self.preimages[s]),
                    "diameter": space.diameter(self.preimages[s]),
                }
                for s in self.top_simplices
            ],
            "certificates": self.certificates.to_dict(),
            "nerve": self.nerve.to_dict(),
        }


def nerve_map(cc: ColoredCover) -> ColoredNerve:
    """
    Canonical map into the nerve with lam = r Lip(phi). The preimage of a top
    simplex is the set of points whose supporting sets all lie in it; its
    diameter is at most 2 C r on a valid cover.
    """
    partition = canonical_partition(cc.cover)
    nerve = build_nerve_map(partition)
    space = cc.space
    lip_phi = lip_constant(MetricMap.total(space, nerve.simplex_coords))
    lam = cc.r * lip_phi

    supports = cc.cover.members
    top = sorted({tuple(np.flatnonzero(col).tolist()) for col in supports.T if col.sum() == cc.m + 2})
    preimages = {}
    for simplex in top:
        outside = np.ones(cc.cover.k, dtype=bool)
        outside[list(simplex)] = False
        preimages[simplex] = np.flatnonzero(~supports[outside].any(axis=0))

    certs = CertificateSet()
    if top:
        diameters = np.array([space.diameter(preimages[s]) for s in top])
        certs.add(check_points("nerve-preimage-diameter", diameters, 2.0 * cc.C * cc.r))
    logger.info(f"Nerve map: lambda={lam:.4g}, {len(top)} top simplices")
    return ColoredNerve(cc, nerve, lip_phi, lam, top, preimages, certs)


# shrinking


@dataclass
class SimplexPush:
    simplex: Tuple[int, ...]
    points: np.ndarray
    anchors: np.ndarray
    psi: np.ndarray
    lip_phi: float
    lip_psi: float
    ratio: float
    strategy: str
    fallback: bool = False
    warning: Optional[str] = None

    def to_dict(self, names: Sequence[str]) -> Dict:
        return {
            "sets": [names[i] for i in self.simplex],
            "points": len(self.points),
            "anchors": len(self.anchors),
            "lip_phi": self.lip_phi,
            "lip_psi": self.lip_psi,
            "ratio": self.ratio,
            "strategy": self.strategy,
            "fallback": self.fallback,
        }


@dataclass
class ShrinkReport:
    names: Tuple[str, ...]
    shrunk: np.ndarray
    A_r: np.ndarray
    multiplicity: int
    lebesgue: float
    proved_lebesgue_bound: float
    lam: float
    t: float
    m: int
    r: float
    homeo_distortion: Optional[float]
    pushes: List[SimplexPush]
    certificates: CertificateSet
    warnings: List[str] = field(default_factory=list)
    space: Optional[PointedMetricSpace] = field(default=None, repr=False)

    def shrunk_sets(self) -> Dict[str, List[str]]:
        return {name: self.space.ids(np.flatnonzero(row)) for name, row in zip(self.names, self.shrunk)}

    def to_dict(self) -> Dict:
        return {
            "m": self.m,
            "r": self.r,
            "lambda": self.lam,
            "t": self.t,
            "K": 1.0 / (self.lam * (self.m + 2) * self.t) if self.lam > 0 and self.t > 0 else None,
            "multiplicity": self.multiplicity,
            "multiplicity_target": self.m + 1,
            "lebesgue": self.lebesgue,
            "proved_lebesgue_bound": self.proved_lebesgue_bound,
            "homeo_distortion": self.homeo_distortion,
            "A_r": self.space.ids(np.flatnonzero(self.A_r)),
            "shrunk_sets": self.shrunk_sets(),
            "simplices": [p.to_dict(self.names) for p in self.pushes],
            "certificates": self.certificates.to_dict(),
            "warnings": self.warnings,
        }


def _push_constant(homeo, p: np.ndarray) -> np.ndarray:
    """Radial push of p from the barycenter to the boundary; a vertex when p is the barycenter."""
    if np.allclose(p, homeo.barycenter):
        vertex = np.zeros_like(p)
        vertex[0] = 1.0
        return vertex
    return _snap(homeo.u(homeo.v(p)))


def _snap(p: np.ndarray) -> np.ndarray:
    p = np.where(p <= SNAP, 0.0, p)
    return p / p.sum(axis=-1, keepdims=True)


def _push_simplex(nerve: ColoredNerve, simplex: Tuple[int, ...], homeo, strategy: Strategy, rho_min: float) -> SimplexPush:
    space = nerve.cc.space
    points = nerve.preimages[simplex]
    coords = nerve.phi[np.ix_(points, list(simplex))]
    low = nerve.counts[points] <= nerve.cc.m + 1
    anchors = points[low]
    lip_phi = lip_constant(MetricMap(space, points, coords))

    if len(anchors) == 0:
        msg = f"simplex {nerve.simplex_names(simplex)}: no low-multiplicity points; pushing a constant"
        logger.warning(msg)
        psi = np.tile(_push_constant(homeo, coords[0]), (len(points), 1))
        return SimplexPush(simplex, points, anchors, psi, lip_phi, 0.0, 0.0, "constant", warning=msg)

    sphere_values = homeo.v(coords[low])
    f = SphereMap(space, anchors, sphere_values)
    ext = extend_sphere_map(f, points, strategy, rho_min)
    psi = _snap(homeo.u(ext.g.values[ext.g.positions_of(points)]))
    psi[low] = coords[low]

    lip_psi = lip_constant(MetricMap(space, points, psi))
    ratio = lip_psi / lip_phi if lip_phi > 0 else 0.0
    warning = None
    if ext.fallback:
        warning = f"simplex {nerve.simplex_names(simplex)}: projection fell back to nearest (rho={ext.rho:.3g})"
    return SimplexPush(
        simplex, points, anchors, psi, lip_phi, lip_psi, ratio, ext.strategy.value, ext.fallback, warning
    )


def shrink(cc: ColoredCover, strategy="nearest", rho_min: float = 0.1, max_workers: int = 4) -> ShrinkReport:
    """
    s(U) = (U and A_r) together with the points of each top-simplex preimage
    whose pushed U-coordinate is positive; A_r are the points in at most m+1
    sets. The shrunk cover has multiplicity at most m+1 and its Lebesgue
    number is compared with r / (lam (m+2) t), t the measured worst ratio
    Lip(psi) / Lip(phi) over top simplices.
    """
    strategy = _as_strategy(strategy)
    if cc.m < 0:
        raise PreconditionError("shrinking needs at least two colors")
    nerve = nerve_map(cc)
    space, cover = cc.space, cc.cover
    counts = nerve.counts
    if counts.max() > cc.m + 2:
        raise PreconditionError(f"a point lies in {counts.max()} sets but only {cc.m + 2} colors are used")
    A_r = counts <= cc.m + 1
    homeo = sphere_simplex_homeo(cc.m)

    pushes: Dict[Tuple[int, ...], SimplexPush] = {}

    def job(simplex):
        try:
            return _push_simplex(nerve, simplex, homeo, strategy, rho_min)
        except CoarseKitError as e:
            raise ExtensionStageError("shrink", nerve.top_simplices.index(simplex), e) from e

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {executor.submit(job, s): s for s in nerve.top_simplices}
        for future in as_completed(futures):
            pushes[futures[future]] = future.result()
    ordered = [pushes[s] for s in nerve.top_simplices]

    shrunk = cover.members & A_r[None, :]
    warnings = [p.warning for p in ordered if p.warning]
    assigned: Dict[int, frozenset] = {}
    for push in ordered:
        for pos, x in enumerate(push.points):
            if A_r[x]:
                continue
            positive = frozenset(push.simplex[q] for q in np.flatnonzero(push.psi[pos] > 0))
            if x in assigned and assigned[x] != positive:
                msg = f"point {space.points[x]!r} pushed differently by two top simplices"
                logger.warning(msg)
                warnings.append(msg)
            assigned[x] = assigned.get(x, frozenset()) | positive
            shrunk[list(positive), x] = True

    t = max((p.ratio for p in ordered), default=0.0)
    mult = multiplicity(shrunk)
    lebesgue = lebesgue_number(space, shrunk)
    if nerve.lam > 0 and t > 0:
        proved = cc.r / (nerve.lam * (cc.m + 2) * t)
    else:
        proved = 0.0

    certs = CertificateSet(list(nerve.certificates.checks))
    every = np.arange(space.n)
    certs.add(check_points("shrink-subset", (shrunk & ~cover.members).sum(axis=0), 0.0, index=every))
    certs.add(check_points("shrink-multiplicity", shrunk.sum(axis=0), float(cc.m + 1), index=every))
    if proved > 0:
        certs.add(check_points("shrink-lebesgue", np.array([proved]), np.array([lebesgue])))
    logger.info(
        f"Shrink: {len(ordered)} top simplices, multiplicity {mult} (target {cc.m + 1}), "
        f"Lebesgue {lebesgue:.4g} vs bound {proved:.4g}"
    )
    return ShrinkReport(
        names=cover.names,
        shrunk=shrunk,
        A_r=A_r,
        multiplicity=mult,
        lebesgue=lebesgue,
        proved_lebesgue_bound=proved,
        lam=nerve.lam,
        t=t,
        m=cc.m,
        r=cc.r,
        homeo_distortion=homeo.distortion,
        pushes=ordered,
        certificates=certs,
        warnings=warnings,
        space=space,
    )
