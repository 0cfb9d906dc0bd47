"""
Seeded instance generators. The seed fully determines every emitted byte.
"""

from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from app.loaders import SPACE_SUFFIX
from core.errors import PreconditionError
from utils.file_utils import dump_json
from utils.logger import AppLogger

logger = AppLogger(name="Generators").get_logger()

KINDS = (
    "integer-path",
    "grid-2d",
    "random-point-cloud",
    "remark46",
    "colored-interval-cover",
    "restricted-cone-map",
)


def path_space(N: int, start: int = 0) -> Dict:
    """The integers {start..N} on the line, pointed at start."""
    span = range(start, N + 1)
    return {"points": [str(i) for i in span], "basepoint": str(start), "coordinates": [[float(i)] for i in span]}


def grid_space(side: int) -> Dict:
    points, coords = [], []
    for i in range(side):
        for j in range(side):
            points.append(f"{i}:{j}")
            coords.append([float(i), float(j)])
    return {"points": points, "basepoint": "0:0", "coordinates": coords}


def cloud_space(rng: np.random.Generator, n: int, dim: int, scale: float) -> Dict:
    """n points uniform in [-scale, scale]^dim; the first sits at the origin and is the basepoint."""
    coords = rng.uniform(-scale, scale, size=(n, dim))
    coords[0] = 0.0
    return {"points": [f"p{i}" for i in range(n)], "basepoint": "p0", "coordinates": coords.tolist()}


def spiked_circle_values(N: int) -> Dict[str, List[float]]:
    """
    Circle-valued map on {1..N}: odd points go to the pole (1, 0); the
    point 2n sits at chord distance 1/sqrt(n) from the pole.
    """
    values = {}
    for x in range(1, N + 1):
        n = x // 2
        if x % 2:
            values[str(x)] = [1.0, 0.0]
        else:
            theta = 2.0 * np.arcsin(1.0 / (2.0 * np.sqrt(n)))
            values[str(x)] = [float(np.cos(theta)), float(np.sin(theta))]
    return values


def interval_cover(N: int, r: float) -> Dict:
    """U_j = [2rj, 2rj + 5r) on {0..N}, colored j mod 3 + 1: same colors are r apart, mesh below 5r."""
    if N < 5 * r:
        raise PreconditionError(f"need N >= 5r for a proper cover, got N={N}, r={r}")
    sets, colors = {}, {}
    j = 0
    while 2 * r * j <= N:
        lo, hi = 2 * r * j, 2 * r * j + 5 * r
        name = f"U{j}"
        sets[name] = [str(x) for x in range(int(np.ceil(lo)), N + 1) if x < hi]
        colors[name] = j % 3 + 1
        j += 1
    return {"sets": sets, "colors": colors, "r": float(r), "C": 5.0}


def twisted_cone_values(coords: np.ndarray, twist: int) -> np.ndarray:
    """|x| (cos(twist * theta), sin(twist * theta)) for planar x; Lipschitz with constant at most twist."""
    rho = np.linalg.norm(coords, axis=1)
    theta = np.arctan2(coords[:, 1], coords[:, 0])
    return np.column_stack([rho * np.cos(twist * theta), rho * np.sin(twist * theta)])


def _write(out_dir: Path, name: str, data: Dict) -> Path:
    return dump_json(data, out_dir / name)


def _integer_path(out_dir, rng, N: int = 16, **_) -> List[Path]:
    return [_write(out_dir, f"integer-path{SPACE_SUFFIX}", path_space(N))]


def _grid_2d(out_dir, rng, side: int = 8, **_) -> List[Path]:
    return [_write(out_dir, f"grid-2d{SPACE_SUFFIX}", grid_space(side))]


def _random_point_cloud(out_dir, rng, n: int = 64, dim: int = 2, scale: float = 10.0, **_) -> List[Path]:
    return [_write(out_dir, f"random-point-cloud{SPACE_SUFFIX}", cloud_space(rng, n, dim, scale))]


def _remark46(out_dir, rng, N: int = 4096, **_) -> List[Path]:
    space = _write(out_dir, f"remark46{SPACE_SUFFIX}", path_space(N, start=1))
    data = {"space": space.name, "kind": "sphere", "target_dim": 2, "values": spiked_circle_values(N)}
    return [space, _write(out_dir, "remark46.map.json", data)]


def _colored_interval_cover(out_dir, rng, N: int = 100, r: float = 8.0, **_) -> List[Path]:
    space = _write(out_dir, f"colored-interval-cover{SPACE_SUFFIX}", path_space(N))
    data = {"space": space.name, **interval_cover(N, r)}
    return [space, _write(out_dir, "colored-interval-cover.cover.json", data)]


def _restricted_cone_map(
    out_dir, rng, n: int = 60, scale: float = 10.0, fraction: float = 0.5, twist: int = 2, **_
) -> List[Path]:
    space_data = cloud_space(rng, n, 2, scale)
    coords = np.asarray(space_data["coordinates"])
    values = twisted_cone_values(coords, twist)
    keep = np.sort(rng.choice(n, size=max(1, int(round(fraction * n))), replace=False))
    space = _write(out_dir, f"restricted-cone-map{SPACE_SUFFIX}", space_data)
    data = {
        "space": space.name,
        "kind": "norm-preserving",
        "target_dim": 2,
        "values": {space_data["points"][i]: values[i].tolist() for i in keep},
        "meta": {"twist": twist, "global_lipschitz_bound": float(twist)},
    }
    return [space, _write(out_dir, "restricted-cone-map.map.json", data)]


GENERATORS: Dict[str, Callable[..., List[Path]]] = {
    "integer-path": _integer_path,
    "grid-2d": _grid_2d,
    "random-point-cloud": _random_point_cloud,
    "remark46": _remark46,
    "colored-interval-cover": _colored_interval_cover,
    "restricted-cone-map": _restricted_cone_map,
}


def generate_instance(kind: str, seed: int, out_dir: Union[str, Path], params: Optional[Dict] = None) -> List[Path]:
    if kind not in GENERATORS:
        raise PreconditionError(f"unknown instance kind {kind!r}; expected one of {', '.join(KINDS)}")
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    logger.info(f"Generating {kind} (seed={seed}) into {out_dir}")
    return GENERATORS[kind](out_dir, rng, **(params or {}))
