"""
Open cones over the base sets S^m, the simplex Delta^m and its boundary.

Simplices use barycentric coordinates (vertices are standard basis vectors),
so partition-of-unity vectors are simplex points as they stand.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional

import numpy as np

from core import certificates
from core.errors import PreconditionError
from core.maps import MetricMap, NormPreservingMap
from core.pairwise import max_ratio_values, vector_distances
from utils.logger import AppLogger

logger = AppLogger(name="Cones").get_logger()


class BaseKind(Enum):
    SPHERE = "sphere"
    SIMPLEX = "simplex"
    SIMPLEX_BOUNDARY = "simplex-boundary"


@dataclass(frozen=True)
class BaseSet:
    """S^m in R^{m+1}, Delta^m in R^{m+1}, or the boundary of Delta^{m+1} in R^{m+2}."""

    kind: BaseKind
    dim: int

    def __post_init__(self):
        if self.dim < 0:
            raise PreconditionError(f"base set dimension must be nonnegative, got {self.dim}")

    @property
    def ambient_dim(self) -> int:
        return self.dim + 2 if self.kind is BaseKind.SIMPLEX_BOUNDARY else self.dim + 1

    def contains(self, k, tol: Optional[float] = None) -> bool:
        tol = certificates.tolerance() if tol is None else tol
        k = np.asarray(k, dtype=float)
        if k.shape != (self.ambient_dim,):
            return False
        if self.kind is BaseKind.SPHERE:
            return abs(np.linalg.norm(k) - 1.0) <= tol
        in_simplex = bool(k.min() >= -tol and abs(k.sum() - 1.0) <= tol)
        if self.kind is BaseKind.SIMPLEX:
            return in_simplex
        return in_simplex and bool(k.min() <= tol)

    def normalize(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.kind is BaseKind.SPHERE:
            return v / np.linalg.norm(v, axis=-1, keepdims=True)
        v = np.clip(v, 0.0, None)
        return v / v.sum(axis=-1, keepdims=True)

    def reference_point(self) -> np.ndarray:
        if self.kind is BaseKind.SIMPLEX:
            return np.full(self.ambient_dim, 1.0 / self.ambient_dim)
        e1 = np.zeros(self.ambient_dim)
        e1[0] = 1.0
        return e1

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        n = self.ambient_dim
        if self.kind is BaseKind.SPHERE:
            return self.normalize(rng.standard_normal((count, n)))
        pts = rng.dirichlet(np.ones(n), size=count)
        if self.kind is BaseKind.SIMPLEX_BOUNDARY:
            pts[np.arange(count), rng.integers(0, n, size=count)] = 0.0
            pts = pts / pts.sum(axis=1, keepdims=True)
        return pts


@dataclass
class ConePoint:
    t: float
    k: np.ndarray

    def __post_init__(self):
        if self.t < 0:
            raise PreconditionError(f"cone radius must be nonnegative, got {self.t}")
        self.t = float(self.t)
        self.k = np.asarray(self.k, dtype=float)

    @property
    def is_apex(self) -> bool:
        return self.t == 0.0

    def vector(self) -> np.ndarray:
        return self.t * self.k

    def to_dict(self) -> Dict:
        return {"t": self.t, "k": self.k.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "ConePoint":
        return cls(float(data["t"]), np.asarray(data["k"], dtype=float))


@dataclass
class BaseMap:
    """
    Map K -> L between base sets, either as a function or as a table of
    sample points and images looked up within tolerance.
    """

    domain: BaseSet
    target: BaseSet
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    samples: Optional[np.ndarray] = None
    images: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.fn is None and (self.samples is None or self.images is None):
            raise PreconditionError("a base map needs a function or a sample table")

    @classmethod
    def tabulate(cls, domain: BaseSet, target: BaseSet, samples, images) -> "BaseMap":
        return cls(domain, target, samples=np.asarray(samples, dtype=float), images=np.asarray(images, dtype=float))

    @classmethod
    def identity(cls, base: BaseSet) -> "BaseMap":
        return cls(base, base, fn=lambda k: np.array(k, dtype=float))

    def __call__(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.fn is not None:
            return np.asarray(self.fn(k), dtype=float)
        gaps = vector_distances(k[None, :], self.samples)[0]
        hit = int(np.argmin(gaps))
        if gaps[hit] > certificates.tolerance():
            raise PreconditionError("base map is not defined at the requested point")
        return self.images[hit]


def cone_transport(f: BaseMap, p: ConePoint) -> ConePoint:
    """t*k -> t*f(k); the apex goes to the apex."""
    if p.is_apex:
        return ConePoint(0.0, f.target.reference_point())
    if not f.domain.contains(p.k):
        raise PreconditionError("cone point direction is not in the domain base set")
    image = f(p.k)
    if not f.target.contains(image):
        raise PreconditionError("base map sends a point outside the target base set")
    return ConePoint(p.t, image)


def transport_norm_preserving(fp: MetricMap, f: BaseMap) -> NormPreservingMap:
    """Push f'(x) = |x| k(x) through f, keeping |x| and renormalizing f(k) to unit length."""
    norms = fp.norms
    out = np.zeros((fp.size, f.target.ambient_dim))
    live = norms > 0
    for i in np.flatnonzero(live):
        image = cone_transport(f, ConePoint(norms[i], fp.values[i] / norms[i])).k
        out[i] = norms[i] * image / np.linalg.norm(image)
    return NormPreservingMap(fp.space, fp.support, out)


def _projector(n: int) -> np.ndarray:
    """Orthonormal basis (n x n-1) of the plane sum(x) = 0."""
    basis = np.ones((n, n - 1))
    basis[np.arange(n - 1), np.arange(n - 1)] = -(n - 1)
    Q, _ = np.linalg.qr(basis)
    return Q


@dataclass
class SphereSimplexHomeo:
    """
    Radial projection through the barycenter b of Delta^{m+1}: S^m sits in the
    plane sum = 0 via an orthonormal basis Q, and u pushes b + t*Qx out to the
    first face it meets.
    """

    m: int
    Q: np.ndarray = field(init=False, repr=False)
    barycenter: np.ndarray = field(init=False, repr=False)
    lip_u: Optional[float] = None
    lip_v: Optional[float] = None

    def __post_init__(self):
        if self.m < 0:
            raise PreconditionError(f"sphere dimension must be nonnegative, got {self.m}")
        n = self.m + 2
        self.Q = _projector(n)
        self.barycenter = np.full(n, 1.0 / n)

    @property
    def sphere(self) -> BaseSet:
        return BaseSet(BaseKind.SPHERE, self.m)

    @property
    def boundary(self) -> BaseSet:
        return BaseSet(BaseKind.SIMPLEX_BOUNDARY, self.m)

    @property
    def distortion(self) -> Optional[float]:
        if self.lip_u is None or self.lip_v is None:
            return None
        return max(self.lip_u, self.lip_v)

    def u(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        w = x @ self.Q.T
        n = self.m + 2
        reach = 1.0 / (n * np.max(-w, axis=1))
        p = self.barycenter + w * reach[:, None]
        p[np.arange(len(p)), np.argmin(p, axis=1)] = 0.0
        p = np.clip(p, 0.0, None)
        return p[0] if single else p

    def v(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        y = (np.atleast_2d(p) - self.barycenter) @ self.Q
        y = y / np.linalg.norm(y, axis=1, keepdims=True)
        return y[0] if single else y

    def u_map(self) -> BaseMap:
        return BaseMap(self.sphere, self.boundary, fn=self.u)

    def measure(self, rng: Optional[np.random.Generator] = None, samples: int = 142) -> "SphereSimplexHomeo":
        if self.m == 0:
            pts = np.array([[1.0], [-1.0]])
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            pts = self.sphere.sample(rng, samples)
        images = self.u(pts)
        self.lip_u = max_ratio_values(images, vector_distances(pts, pts))
        self.lip_v = max_ratio_values(pts, vector_distances(images, images))
        return self

    def to_dict(self) -> Dict:
        return {"m": self.m, "lip_u": self.lip_u, "lip_v": self.lip_v, "distortion": self.distortion}


def sphere_simplex_homeo(m: int, rng: Optional[np.random.Generator] = None, samples: int = 142) -> SphereSimplexHomeo:
    return SphereSimplexHomeo(m).measure(rng, samples)


@dataclass
class TransportMeasurement:
    domain: BaseKind
    target: BaseKind
    lip_base: float
    lip_cone: float
    constant: float
    samples: int

    def to_dict(self) -> Dict:
        return {
            "domain": self.domain.value,
            "target": self.target.value,
            "lip_base": self.lip_base,
            "lip_cone": self.lip_cone,
            "constant": self.constant,
            "samples": self.samples,
        }


def measure_transport_lipschitz(
    f: BaseMap,
    rng: np.random.Generator,
    samples: int = 1000,
    t_max: float = 1.0,
) -> TransportMeasurement:
    """Empirical Lip of t*k -> t*f(k) on sampled cone points, relative to Lip(f) on their bases."""
    ks = f.domain.sample(rng, samples)
    ts = rng.uniform(0.0, t_max, size=samples)
    images = np.array([f(k) for k in ks])
    lip_base = max_ratio_values(images, vector_distances(ks, ks))
    cone_pts = ts[:, None] * ks
    cone_imgs = ts[:, None] * images
    lip_cone = max_ratio_values(cone_imgs, vector_distances(cone_pts, cone_pts))
    constant = lip_cone / lip_base if lip_base > 0 else (0.0 if lip_cone == 0 else float("inf"))
    logger.info(
        f"Cone transport {f.domain.kind.value}->{f.target.kind.value}: "
        f"Lip(f)={lip_base:.4g}, Lip(cone)={lip_cone:.4g}"
    )
    return TransportMeasurement(f.domain.kind, f.target.kind, lip_base, lip_cone, constant, samples)
