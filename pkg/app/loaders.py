from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import orjson

from core.cover_shrink import ColoredCover
from core.errors import InstanceFormatError
from core.maps import MetricMap, NormPreservingMap, SphereMap
from core.metric_core import PointedMetricSpace, metric_closure
from core.partitions import Cover
from core.sublinear import PiecewiseLinearFunction
from utils.file_utils import digest_bytes, list_instance_files, resolve_reference
from utils.logger import AppLogger

logger = AppLogger(name="Loaders").get_logger()

MAP_KINDS = {"plain": MetricMap, "sphere": SphereMap, "norm-preserving": NormPreservingMap}
SPACE_SUFFIX = ".space.json"


def _require(data: Dict, *keys: str, where: str = "instance") -> None:
    if not isinstance(data, dict):
        raise InstanceFormatError(f"{where} must be a JSON object")
    missing = [k for k in keys if k not in data]
    if missing:
        raise InstanceFormatError(f"{where} is missing {', '.join(missing)}")


def space_from_dict(data: Dict) -> PointedMetricSpace:
    _require(data, "points", where="space")
    points = [str(p) for p in data["points"]]
    basepoint = data.get("basepoint", points[0] if points else None)
    if "matrix" in data:
        return PointedMetricSpace.from_matrix(points, np.asarray(data["matrix"], dtype=float), basepoint)
    if "edges" in data:
        edges = data["edges"]
        if any(len(e) != 3 for e in edges):
            raise InstanceFormatError("edges must be [id, id, weight] triples")
        return metric_closure(edges, points=points or None, basepoint=basepoint)
    if "coordinates" in data:
        return PointedMetricSpace.from_coordinates(points, data["coordinates"], basepoint)
    raise InstanceFormatError("space needs one of matrix, edges or coordinates")


def function_from_dict(data: Dict) -> PiecewiseLinearFunction:
    _require(data, "breakpoints", where="function")
    return PiecewiseLinearFunction.from_dict(data)


def samples_from_dict(data) -> Tuple[np.ndarray, np.ndarray]:
    """Either {"t": [...], "a": [...]} or {"samples": [[t, a], ...]} (a bare list also works)."""
    if isinstance(data, dict) and "t" in data:
        _require(data, "t", "a", where="samples")
        return np.asarray(data["t"], dtype=float), np.asarray(data["a"], dtype=float)
    rows = data["samples"] if isinstance(data, dict) and "samples" in data else data
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InstanceFormatError("samples must be [t, a] pairs")
    return arr[:, 0], arr[:, 1]


class InstanceLoader:
    """
    Reads instance files, resolving space references relative to the file that
    names them. Every file read is digested so reports can echo their inputs,
    and each space file is parsed once, so maps that share a space file share
    one space object.
    """

    def __init__(self):
        self.digests: Dict[str, str] = {}
        self._spaces: Dict[Path, PointedMetricSpace] = {}

    def read(self, path: Union[str, Path]) -> Any:
        path = Path(path).resolve()
        payload = path.read_bytes()
        self.digests[str(path)] = digest_bytes(payload)
        try:
            return orjson.loads(payload)
        except orjson.JSONDecodeError as e:
            raise InstanceFormatError(f"{path.name} is not valid JSON: {e}") from None

    def space(self, path: Union[str, Path]) -> PointedMetricSpace:
        path = Path(path).resolve()
        if path not in self._spaces:
            self._spaces[path] = space_from_dict(self.read(path))
            logger.info(f"Loaded space {path.name} with {self._spaces[path].n} points")
        return self._spaces[path]

    def _space_field(self, data: Dict, path: Path, override: Optional[PointedMetricSpace]) -> PointedMetricSpace:
        if override is not None:
            return override
        _require(data, "space", where=path.name)
        ref = data["space"]
        if isinstance(ref, dict):
            return space_from_dict(ref)
        return self.space(resolve_reference(str(ref), path))

    def map(self, path, kind: Optional[str] = None, space: Optional[PointedMetricSpace] = None) -> MetricMap:
        path = Path(path).resolve()
        data = self.read(path)
        _require(data, "values", where=path.name)
        space = self._space_field(data, path, space)
        kind = kind or data.get("kind", "sphere")
        if kind not in MAP_KINDS:
            raise InstanceFormatError(f"unknown map kind {kind!r}")
        values = data["values"]
        if not isinstance(values, dict):
            raise InstanceFormatError("map values must be an object {id: [floats]}")
        support = space.indices_of(values.keys())
        rows = [np.atleast_1d(np.asarray(v, dtype=float)) for v in values.values()]
        dim = int(data.get("target_dim", len(rows[0]) if rows else 1))
        if any(len(r) != dim for r in rows):
            raise InstanceFormatError(f"every value must have {dim} coordinates")
        array = np.vstack(rows) if rows else np.zeros((0, dim))
        return MAP_KINDS[kind](space, support, array)

    def cover(self, path) -> Cover:
        path = Path(path).resolve()
        data = self.read(path)
        _require(data, "sets", where=path.name)
        return Cover.from_sets(self._space_field(data, path, None), data["sets"])

    def colored_cover(self, path) -> ColoredCover:
        path = Path(path).resolve()
        data = self.read(path)
        _require(data, "sets", "colors", "r", "C", where=path.name)
        space = self._space_field(data, path, None)
        return ColoredCover.from_sets(space, data["sets"], data["colors"], float(data["r"]), float(data["C"]))

    def function(self, path) -> PiecewiseLinearFunction:
        return function_from_dict(self.read(path))

    def samples(self, path) -> Tuple[np.ndarray, np.ndarray]:
        return samples_from_dict(self.read(path))

    def family(self, directory, kind: str = "sphere") -> List[MetricMap]:
        directory = Path(directory)
        if not directory.is_dir():
            raise InstanceFormatError(f"{directory} is not a directory")
        files = [p for p in list_instance_files(directory) if not p.name.endswith(SPACE_SUFFIX)]
        maps = [self.map(p, kind=kind) for p in files]
        if not maps:
            raise InstanceFormatError(f"no map files found in {directory}")
        return maps
