"""
Finite pointed metric spaces.

A space is an ordered tuple of string ids, a full distance matrix and a
basepoint; the norm of a point is its distance to the basepoint. Matrices are
frozen after construction so spaces can be shared freely between threads.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import cdist

from core import certificates
from core.errors import (
    DisconnectedGraphError,
    InstanceFormatError,
    InvalidMetricError,
    PreconditionError,
)
from utils.logger import AppLogger

logger = AppLogger(name="MetricCore").get_logger()

IndexLike = Union[Sequence[int], np.ndarray]


@dataclass(frozen=True, eq=False)
class PointedMetricSpace:
    points: Tuple[str, ...]
    dist: np.ndarray
    basepoint: str
    coordinates: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        matrix = np.array(self.dist, dtype=float)
        matrix.setflags(write=False)
        object.__setattr__(self, "dist", matrix)
        object.__setattr__(self, "points", tuple(str(p) for p in self.points))
        object.__setattr__(self, "basepoint", str(self.basepoint))
        if self.coordinates is not None:
            coords = np.array(self.coordinates, dtype=float)
            coords.setflags(write=False)
            object.__setattr__(self, "coordinates", coords)

    # construction

    @classmethod
    def from_matrix(
        cls,
        points: Sequence,
        matrix,
        basepoint,
        check: bool = True,
        tol: Optional[float] = None,
    ) -> "PointedMetricSpace":
        report = validate_space(matrix, basepoint, points=points, tol=tol)
        if check and not report.metric_ok:
            raise InvalidMetricError(
                f"triangle inequality fails by {report.worst_triangle_violation:.3e} "
                f"at {report.worst_triple}"
            )
        return cls(tuple(points), np.asarray(matrix, dtype=float), basepoint)

    @classmethod
    def from_coordinates(cls, points: Sequence, coordinates, basepoint) -> "PointedMetricSpace":
        coords = np.asarray(coordinates, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.shape[0] != len(points):
            raise InstanceFormatError(
                f"{len(points)} points but {coords.shape[0]} coordinate rows"
            )
        if str(basepoint) not in {str(p) for p in points}:
            raise PreconditionError(f"basepoint {basepoint!r} is not a point of the space")
        return cls(tuple(points), cdist(coords, coords), basepoint, coordinates=coords)

    # lookups

    @property
    def n(self) -> int:
        return len(self.points)

    @cached_property
    def _index(self) -> Dict[str, int]:
        return {p: i for i, p in enumerate(self.points)}

    @property
    def base_index(self) -> int:
        return self._index[self.basepoint]

    def index_of(self, point) -> int:
        try:
            return self._index[str(point)]
        except KeyError:
            raise InstanceFormatError(f"unknown point id {point!r}") from None

    def indices_of(self, ids: Iterable) -> np.ndarray:
        return np.array([self.index_of(p) for p in ids], dtype=int)

    def ids(self, indices: IndexLike) -> List[str]:
        return [self.points[int(i)] for i in indices]

    @cached_property
    def norms(self) -> np.ndarray:
        out = np.array(self.dist[self.base_index], dtype=float)
        out.setflags(write=False)
        return out

    def norm(self, point) -> float:
        return float(self.norms[self.index_of(point)])

    def diameter(self, indices: Optional[IndexLike] = None) -> float:
        if indices is None:
            return float(self.dist.max()) if self.n else 0.0
        idx = np.asarray(indices, dtype=int)
        if len(idx) == 0:
            return 0.0
        return float(self.dist[np.ix_(idx, idx)].max())

    def distance_to(self, indices: IndexLike) -> np.ndarray:
        """d(x, A) for every x; +inf when A is empty."""
        idx = np.asarray(indices, dtype=int)
        if len(idx) == 0:
            return np.full(self.n, np.inf)
        return self.dist[:, idx].min(axis=1)

    def set_distance(self, a: IndexLike, b: IndexLike) -> float:
        a = np.asarray(a, dtype=int)
        b = np.asarray(b, dtype=int)
        if len(a) == 0 or len(b) == 0:
            return float("inf")
        return float(self.dist[np.ix_(a, b)].min())

    def subspace(self, indices: IndexLike) -> "PointedMetricSpace":
        idx = np.unique(np.asarray(indices, dtype=int))
        if self.base_index not in set(idx.tolist()):
            raise PreconditionError("a pointed subspace must contain the basepoint")
        coords = None if self.coordinates is None else self.coordinates[idx]
        return PointedMetricSpace(
            tuple(self.points[i] for i in idx),
            self.dist[np.ix_(idx, idx)],
            self.basepoint,
            coordinates=coords,
        )

    def scaled(self, factor: float) -> "PointedMetricSpace":
        coords = None if self.coordinates is None else self.coordinates * factor
        return PointedMetricSpace(self.points, self.dist * factor, self.basepoint, coords)

    def to_dict(self) -> Dict:
        return {
            "points": list(self.points),
            "basepoint": self.basepoint,
            "matrix": self.dist.tolist(),
        }


@dataclass
class ValidationReport:
    metric_ok: bool
    worst_triangle_violation: float
    worst_triple: Optional[Tuple[int, int, int]]
    min_positive_distance: float
    coincident_pairs: int
    n_points: int
    diameter: float

    def is_epsilon_discrete(self, eps: float) -> bool:
        if self.n_points < 2:
            return True
        return self.coincident_pairs == 0 and self.min_positive_distance >= eps

    def to_dict(self) -> Dict:
        return {
            "metric_ok": self.metric_ok,
            "worst_triangle_violation": self.worst_triangle_violation,
            "worst_triple": list(self.worst_triple) if self.worst_triple else None,
            "min_positive_distance": self.min_positive_distance,
            "coincident_pairs": self.coincident_pairs,
            "n_points": self.n_points,
            "diameter": self.diameter,
        }


def validate_space(matrix, basepoint, points=None, tol: Optional[float] = None) -> ValidationReport:
    tol = certificates.tolerance() if tol is None else tol
    D = np.asarray(matrix, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidMetricError(f"distance matrix must be square, got shape {D.shape}")
    n = D.shape[0]
    ids = [str(p) for p in points] if points is not None else [str(i) for i in range(n)]
    if len(ids) != n:
        raise InstanceFormatError(f"{len(ids)} point ids for a {n}x{n} matrix")
    if len(set(ids)) != n:
        raise InstanceFormatError("point ids must be unique")
    if str(basepoint) not in ids:
        raise PreconditionError(f"basepoint {basepoint!r} is not a point of the space")
    if not np.all(np.isfinite(D)):
        raise InvalidMetricError("distance matrix has non-finite entries")
    if (D < 0).any():
        raise InvalidMetricError(f"negative distance {D.min():.3e}")
    scale = max(1.0, float(D.max()) if n else 1.0)
    if np.abs(D - D.T).max(initial=0.0) > tol * scale:
        raise InvalidMetricError("distance matrix is not symmetric")
    if np.abs(np.diag(D)).max(initial=0.0) > tol * scale:
        raise InvalidMetricError("distance matrix has a nonzero diagonal")

    worst = 0.0
    worst_triple = None
    for j in range(n):
        # d(i,k) - d(i,j) - d(j,k) for all i, k
        excess = D - (D[:, j][:, None] + D[j, :][None, :])
        flat = int(np.argmax(excess))
        if excess.flat[flat] > worst:
            worst = float(excess.flat[flat])
            i, k = divmod(flat, n)
            worst_triple = (i, j, k)

    off = ~np.eye(n, dtype=bool)
    off_vals = D[off]
    positive = off_vals[off_vals > 0]
    min_pos = float(positive.min()) if positive.size else float("inf")
    coincident = int((off_vals <= 0).sum() // 2)

    return ValidationReport(
        metric_ok=worst <= tol * scale,
        worst_triangle_violation=worst,
        worst_triple=worst_triple,
        min_positive_distance=min_pos,
        coincident_pairs=coincident,
        n_points=n,
        diameter=float(D.max()) if n else 0.0,
    )


def metric_closure(edges, points=None, basepoint=None) -> PointedMetricSpace:
    """All-pairs shortest-path metric of a weighted undirected graph."""
    edges = list(edges)
    if points is None:
        seen: Dict[str, None] = {}
        for u, v, _ in edges:
            seen.setdefault(str(u), None)
            seen.setdefault(str(v), None)
        points = list(seen)
    points = [str(p) for p in points]
    if not points:
        raise InstanceFormatError("graph has no vertices")
    index = {p: i for i, p in enumerate(points)}
    basepoint = points[0] if basepoint is None else str(basepoint)
    if basepoint not in index:
        raise PreconditionError(f"basepoint {basepoint!r} is not a vertex")

    weights: Dict[Tuple[int, int], float] = {}
    for u, v, w in edges:
        try:
            a, b = index[str(u)], index[str(v)]
        except KeyError as e:
            raise InstanceFormatError(f"edge references unknown vertex {e}") from None
        w = float(w)
        if not w > 0:
            raise PreconditionError(f"edge ({u}, {v}) has non-positive weight {w}")
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        weights[key] = min(w, weights.get(key, np.inf))

    n = len(points)
    if weights:
        rows, cols = zip(*weights.keys())
        graph = csr_matrix((list(weights.values()), (rows, cols)), shape=(n, n))
    else:
        graph = csr_matrix((n, n))
    D = shortest_path(graph, method="D", directed=False)
    if not np.all(np.isfinite(D)):
        unreachable = int((~np.isfinite(D[index[basepoint]])).sum())
        raise DisconnectedGraphError(
            f"graph is disconnected: {unreachable} vertices unreachable from {basepoint!r}"
        )
    D = np.minimum(D, D.T)
    logger.debug(f"Metric closure over {n} vertices and {len(weights)} edges")
    return PointedMetricSpace(tuple(points), D, basepoint)


@dataclass
class Annulus:
    lower: float
    upper: float
    members: Tuple[str, ...]
    indices: np.ndarray

    def __len__(self):
        return len(self.members)

    def to_dict(self) -> Dict:
        return {"lower": self.lower, "upper": self.upper, "members": list(self.members)}


def annulus_mask(norms: np.ndarray, r: float, s: float) -> np.ndarray:
    return (norms >= r) & (norms < s)


def annulus(space: PointedMetricSpace, r: float, s: float = float("inf")) -> Annulus:
    if r < 0:
        raise PreconditionError(f"annulus lower radius must be nonnegative, got {r}")
    if r > s:
        raise PreconditionError(f"annulus radii out of order: r={r} > s={s}")
    idx = np.flatnonzero(annulus_mask(space.norms, r, s))
    return Annulus(float(r), float(s), tuple(space.ids(idx)), idx)


def greedy_net(space: PointedMetricSpace, eps: float) -> PointedMetricSpace:
    """Basepoint first, then stored order: keep x when d(x, net) >= eps."""
    if not eps > 0:
        raise PreconditionError(f"net radius must be positive, got {eps}")
    base = space.base_index
    order = [base] + [i for i in range(space.n) if i != base]
    to_net = np.full(space.n, np.inf)
    chosen: List[int] = []
    for i in order:
        if to_net[i] >= eps:
            chosen.append(i)
            to_net = np.minimum(to_net, space.dist[i])
    logger.debug(f"eps-net at eps={eps}: kept {len(chosen)} of {space.n} points")
    return space.subspace(sorted(chosen))


def is_epsilon_net(space: PointedMetricSpace, net_indices: IndexLike, eps: float) -> bool:
    return bool((space.distance_to(net_indices) < eps).all())


def is_epsilon_discrete(space: PointedMetricSpace, eps: float, indices: Optional[IndexLike] = None) -> bool:
    idx = np.arange(space.n) if indices is None else np.asarray(indices, dtype=int)
    if len(idx) < 2:
        return True
    sub = space.dist[np.ix_(idx, idx)]
    return bool(sub[~np.eye(len(idx), dtype=bool)].min() >= eps)


def scale_connected(space: PointedMetricSpace, M: float) -> bool:
    if not M > 0:
        raise PreconditionError(f"scale must be positive, got {M}")
    if space.n <= 1:
        return True
    adjacency = csr_matrix(space.dist <= M)
    count, _ = connected_components(adjacency, directed=False)
    return count == 1
