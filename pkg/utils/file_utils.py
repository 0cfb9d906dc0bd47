import csv
import dataclasses
import hashlib
import math
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Union

import numpy as np
import orjson

from utils.logger import AppLogger

logger = AppLogger(name="FileUtils").get_logger()

PathLike = Union[str, Path]


def to_jsonable(obj: Any) -> Any:
    """Convert results into plain JSON values; non-finite floats become strings."""
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        }
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(data: Any) -> bytes:
    return orjson.dumps(to_jsonable(data), option=orjson.OPT_INDENT_2)


def dump_json(data: Any, path: PathLike) -> Path:
    path = Path(path).resolve()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_json(data))
    logger.info(f"Saved {path}")
    return path


def digest_bytes(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def digest_file(path: PathLike) -> str:
    return digest_bytes(Path(path).read_bytes())


def resolve_reference(ref: str, relative_to: PathLike) -> Path:
    """Resolve a file reference relative to the directory of the referring file."""
    ref_path = Path(ref)
    if ref_path.is_absolute():
        return ref_path
    return (Path(relative_to).parent / ref_path).resolve()


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path).resolve()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([to_jsonable(v) for v in row])
    logger.info(f"Saved CSV projection to {path}")
    return path


def list_instance_files(directory: PathLike, suffix: str = ".json") -> List[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix == suffix)
