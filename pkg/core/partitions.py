from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core import certificates
from core.certificates import CertificateSet, InequalityCheck, check_pairs, check_points
from core.errors import (
    DegenerateCoverError,
    ImproperCoverError,
    InstanceFormatError,
    PreconditionError,
)
from core.maps import MetricMap, lip_constant
from core.metric_core import PointedMetricSpace, is_epsilon_net
from utils.logger import AppLogger

logger = AppLogger(name="Partitions").get_logger()


@dataclass(eq=False)
class Cover:
    space: PointedMetricSpace
    names: Tuple[str, ...]
    members: np.ndarray  # (k, n) membership matrix

    def __post_init__(self):
        members = np.array(self.members, dtype=bool)
        if members.ndim != 2 or members.shape[1] != self.space.n:
            raise InstanceFormatError(f"membership matrix of shape {members.shape} for {self.space.n} points")
        if members.shape[0] == 0:
            raise PreconditionError("a cover needs at least one set")
        if len(self.names) != members.shape[0]:
            raise InstanceFormatError("one name per cover set is required")
        uncovered = np.flatnonzero(~members.any(axis=0))
        if len(uncovered):
            raise PreconditionError(f"sets do not cover the space: {self.space.ids(uncovered[:5])} missing")
        members.setflags(write=False)
        self.members = members
        self.names = tuple(str(n) for n in self.names)

    @classmethod
    def from_sets(cls, space: PointedMetricSpace, sets: Mapping[str, Sequence]) -> "Cover":
        names = list(sets)
        members = np.zeros((len(names), space.n), dtype=bool)
        for i, name in enumerate(names):
            members[i, space.indices_of(sets[name])] = True
        return cls(space, tuple(names), members)

    @property
    def k(self) -> int:
        return self.members.shape[0]

    @property
    def proper(self) -> bool:
        return not self.members.all(axis=1).any()

    def set_indices(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.members[i])

    def to_dict(self) -> Dict:
        return {"sets": {name: self.space.ids(self.set_indices(i)) for i, name in enumerate(self.names)}}


def complement_distances(cover: Cover) -> np.ndarray:
    """D[x, i] = d(x, X minus U_i); +inf when U_i is the whole space."""
    out = np.full((cover.space.n, cover.k), np.inf)
    for i in range(cover.k):
        outside = np.flatnonzero(~cover.members[i])
        if len(outside):
            out[:, i] = cover.space.dist[:, outside].min(axis=1)
    return out


@dataclass(eq=False)
class PartitionOfUnity:
    cover: Cover
    phi: np.ndarray
    S: np.ndarray
    complement: np.ndarray

    @property
    def space(self) -> PointedMetricSpace:
        return self.cover.space

    @property
    def cone_values(self) -> np.ndarray:
        """|x| * phi(x)."""
        return self.space.norms[:, None] * self.phi

    def to_dict(self) -> Dict:
        return {
            "sets": list(self.cover.names),
            "phi": {pid: row.tolist() for pid, row in zip(self.space.points, self.phi)},
            "S": dict(zip(self.space.points, self.S.tolist())),
        }


def canonical_partition(cover: Cover) -> PartitionOfUnity:
    if not cover.proper:
        whole = [cover.names[i] for i in np.flatnonzero(cover.members.all(axis=1))]
        raise ImproperCoverError(f"cover sets equal to the whole space: {whole}")
    D = complement_distances(cover)
    S = D.sum(axis=1)
    flat = np.flatnonzero(S <= 0)
    if len(flat):
        raise DegenerateCoverError(f"S(x) = 0 at {cover.space.ids(flat[:5])}")
    phi = D / S[:, None]
    return PartitionOfUnity(cover, phi, S, D)


@dataclass
class GapReport:
    eps_star: float
    argmin: Optional[str]

    def to_dict(self) -> Dict:
        return {"eps_star": self.eps_star, "argmin": self.argmin}


def sublinearity_gap(partition) -> GapReport:
    """min over x with |x| > 0 of S(x)/|x|; accepts a partition or a bare cover."""
    if isinstance(partition, PartitionOfUnity):
        space, S = partition.space, partition.S
    else:
        space = partition.space
        S = complement_distances(partition).sum(axis=1)
    norms = space.norms
    live = np.flatnonzero(norms > 0)
    if len(live) == 0:
        return GapReport(float("inf"), None)
    ratios = S[live] / norms[live]
    at = int(np.argmin(ratios))
    return GapReport(float(ratios[at]), space.points[live[at]])


@dataclass
class PartitionCertificate:
    eps_star: float
    k: int
    proved_bound: float
    measured: List[float]
    cone_lip: float
    certificates: CertificateSet

    def to_dict(self) -> Dict:
        return {
            "eps_star": self.eps_star,
            "k": self.k,
            "proved_bound": self.proved_bound,
            "measured_per_coordinate": self.measured,
            "measured_best": max(self.measured) if self.measured else 0.0,
            "cone_lipschitz": self.cone_lip,
            "certificates": self.certificates.to_dict(),
        }


def certify_partition_lipschitz(partition: PartitionOfUnity) -> PartitionCertificate:
    """
    With S(x) >= eps|x|, each |x| phi_i(x) is (3k/eps + 1)-Lipschitz and each
    phi_i varies by at most 3k d(x, y) / (eps max(|x|, |y|)). Conversely a
    lam-Lipschitz cone map forces S(x) > |x| / (2 lam).
    """
    gap = sublinearity_gap(partition)
    eps = gap.eps_star
    if eps == 0:
        raise DegenerateCoverError(f"sublinearity gap is zero (at {gap.argmin!r})")
    space = partition.space
    k = partition.cover.k
    bound = 3.0 * k / eps + 1.0
    h = partition.cone_values
    phi = partition.phi
    norms = space.norms
    every = np.arange(space.n)

    coords = MetricMap.total(space, h)
    measured = [lip_constant(MetricMap.total(space, h[:, i])) for i in range(k)]
    cone_lip = lip_constant(coords)

    def coordinate_block(start, stop):
        rows = every[start:stop]
        diff = np.abs(h[rows][:, None, :] - h[None, :, :]).max(axis=2)
        return diff, bound * space.dist[rows], None

    def refined_block(start, stop):
        rows = every[start:stop]
        diff = np.abs(phi[rows][:, None, :] - phi[None, :, :]).max(axis=2)
        big = np.maximum(norms[rows][:, None], norms[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            rhs = 3.0 * k * space.dist[rows] / (eps * big)
        return diff, rhs, big > 0

    certs = CertificateSet()
    certs.add(check_pairs("partition-coordinate-lipschitz", space.n, coordinate_block, index=every))
    certs.add(check_pairs("partition-refined", space.n, refined_block, index=every))
    if cone_lip > 0 and np.isfinite(cone_lip):
        certs.add(check_points("partition-converse", norms / (2.0 * cone_lip), partition.S))
    return PartitionCertificate(eps, k, bound, measured, cone_lip, certs)


# nerve maps


@dataclass(eq=False)
class NerveMap:
    partition: PartitionOfUnity
    simplex_coords: np.ndarray
    induced_cone_values: np.ndarray

    def supports(self) -> List[Tuple[int, ...]]:
        return [tuple(np.flatnonzero(row > 0).tolist()) for row in self.simplex_coords]

    def to_dict(self) -> Dict:
        space = self.partition.space
        return {
            "sets": list(self.partition.cover.names),
            "coords": {pid: row.tolist() for pid, row in zip(space.points, self.simplex_coords)},
            "supports": {pid: list(s) for pid, s in zip(space.points, self.supports())},
        }


def build_nerve_map(partition: PartitionOfUnity) -> NerveMap:
    coords = partition.phi
    support_ok = np.array_equal(coords > 0, partition.complement > 0)
    if not support_ok:
        logger.warning("nerve coordinates do not match complement-distance support")
    return NerveMap(partition, coords, partition.cone_values)


# convex combinations


def _require_simplex_valued(name: str, f: MetricMap) -> None:
    tol = certificates.tolerance()
    if f.size == 0:
        return
    if f.values.min() < -tol or np.abs(f.values.sum(axis=1) - 1.0).max() > tol:
        raise PreconditionError(f"{name} is not simplex-valued")


@dataclass
class ConvexCombination:
    h: MetricMap
    lip_f: float
    lip_g: float
    lip_gamma: float
    measured: float
    bound: float
    check: InequalityCheck

    def to_dict(self) -> Dict:
        return {
            "lip_f_prime": self.lip_f,
            "lip_g_prime": self.lip_g,
            "lip_gamma_prime": self.lip_gamma,
            "measured_h_prime": self.measured,
            "bound": self.bound,
            "certificate": self.check.to_dict(),
        }


def convex_combine(gamma: MetricMap, f: MetricMap, g: MetricMap) -> ConvexCombination:
    """h = alpha f + beta g with (alpha, beta) = gamma; Lip(h') <= Lip(f') + Lip(g') + 2 Lip(gamma') + 2."""
    _require_simplex_valued("gamma", gamma)
    _require_simplex_valued("f", f)
    _require_simplex_valued("g", g)
    if gamma.dim != 2:
        raise PreconditionError("gamma must take values in the 1-simplex")
    if f.dim != g.dim:
        raise PreconditionError("f and g must share a target simplex")
    for other in (f, g):
        if other.space is not gamma.space or not np.array_equal(other.support, gamma.support):
            raise PreconditionError("gamma, f and g must share a domain")

    h = MetricMap(f.space, f.support, gamma.values[:, :1] * f.values + gamma.values[:, 1:] * g.values)
    norms = f.norms[:, None]
    lip_f = lip_constant(MetricMap(f.space, f.support, norms * f.values))
    lip_g = lip_constant(MetricMap(f.space, f.support, norms * g.values))
    lip_gamma = lip_constant(MetricMap(f.space, f.support, norms * gamma.values))
    h_prime = MetricMap(f.space, f.support, norms * h.values)
    bound = lip_f + lip_g + 2.0 * lip_gamma + 2.0

    def block(start, stop):
        rows, cols = np.arange(start, stop), np.arange(h.size)
        return h_prime.image_block(rows, cols), bound * h_prime.domain_block(rows, cols), None

    check = check_pairs("convex-combination", h.size, block, index=h.support)
    return ConvexCombination(h, lip_f, lip_g, lip_gamma, lip_constant(h_prime), bound, check)


# gap transfer from nets


@dataclass
class NetGapReport:
    delta: float
    threshold: float
    gap_on_space: float
    certificates: CertificateSet = field(default_factory=CertificateSet)

    def to_dict(self) -> Dict:
        return {
            "delta": self.delta,
            "threshold": self.threshold,
            "gap_on_space": self.gap_on_space,
            "certificates": self.certificates.to_dict(),
        }


def net_gap_transfer(
    space: PointedMetricSpace,
    net: Sequence[int],
    eps: float,
    first: Sequence[int],
    second: Sequence[int],
    delta: Optional[float] = None,
) -> NetGapReport:
    """
    Carry the gap S(x) = d(x, C1) + d(x, C2) >= delta|x| from an eps-net to the
    whole space: S(x) >= delta|x1| - 2eps for the net witness x1 of x, and
    S(x) >= (delta/2)|x| once |x| >= 2eps(2 + delta)/delta.
    """
    net = np.unique(np.asarray(net, dtype=int))
    first = np.asarray(first, dtype=int)
    second = np.asarray(second, dtype=int)
    if len(first) == 0 or len(second) == 0:
        raise PreconditionError("both separated sets must be nonempty")
    if np.intersect1d(first, second).size:
        raise PreconditionError("separated sets must be disjoint")
    if not (np.isin(first, net).all() and np.isin(second, net).all()):
        raise PreconditionError("separated sets must lie in the net")
    if not is_epsilon_net(space, net, eps):
        raise PreconditionError(f"subset is not an {eps}-net")

    S = space.distance_to(first) + space.distance_to(second)
    norms = space.norms
    if delta is None:
        live = net[norms[net] > 0]
        delta = float((S[live] / norms[live]).min()) if len(live) else float("inf")
    witness = net[np.argmin(space.dist[:, net], axis=1)]
    threshold = 2.0 * eps * (2.0 + delta) / delta if delta > 0 else float("inf")
    live = norms > 0
    gap = float((S[live] / norms[live]).min()) if live.any() else float("inf")

    report = NetGapReport(delta, threshold, gap)
    if np.isfinite(delta):
        report.certificates.add(check_points("net-witness-gap", delta * norms[witness] - 2.0 * eps, S))
        report.certificates.add(
            check_points("net-gap-transfer", 0.5 * delta * norms, S, mask=norms >= threshold)
        )
    return report
