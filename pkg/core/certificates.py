from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from core.errors import CertificateViolation
from core.pairwise import iter_blocks, upper_mask
from utils.logger import AppLogger

logger = AppLogger(name="Certificates").get_logger()

DEFAULT_TOLERANCE = 1e-9

_tolerance = DEFAULT_TOLERANCE

BlockFn = Callable[[int, int], Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]]


def set_tolerance(tol: float) -> None:
    global _tolerance
    _tolerance = float(tol)


def tolerance() -> float:
    return _tolerance


@dataclass
class InequalityCheck:
    """Outcome of checking lhs <= rhs over a finite family of pairs or points."""

    name: str
    checked: int = 0
    violations: int = 0
    worst_excess: float = float("-inf")
    worst_at: Optional[Tuple[int, ...]] = None
    theorem: bool = True

    @property
    def holds(self) -> bool:
        return self.violations == 0

    def require(self) -> "InequalityCheck":
        if not self.holds:
            raise CertificateViolation(
                self.name,
                self.worst_excess,
                f"{self.violations}/{self.checked} failures, worst at {self.worst_at}",
            )
        return self

    def merge(self, other: "InequalityCheck") -> "InequalityCheck":
        merged = InequalityCheck(self.name, theorem=self.theorem)
        merged.checked = self.checked + other.checked
        merged.violations = self.violations + other.violations
        if other.worst_excess > self.worst_excess:
            merged.worst_excess, merged.worst_at = other.worst_excess, other.worst_at
        else:
            merged.worst_excess, merged.worst_at = self.worst_excess, self.worst_at
        return merged

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "holds": self.holds,
            "checked": self.checked,
            "violations": self.violations,
            "worst_excess": self.worst_excess if self.checked else 0.0,
            "worst_at": list(self.worst_at) if self.worst_at is not None else None,
            "theorem": self.theorem,
        }


def violation_mask(lhs: np.ndarray, rhs: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    tol = _tolerance if tol is None else tol
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    with np.errstate(invalid="ignore"):
        scale = tol * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
        over = (lhs - rhs) > scale
    # inf > tol*inf is False above
    over |= np.isposinf(lhs) & np.isfinite(rhs)
    return over


def _excess(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        ex = np.asarray(lhs, dtype=float) - np.asarray(rhs, dtype=float)
    return np.where(np.isnan(ex), -np.inf, ex)


def check_points(
    name: str,
    lhs: np.ndarray,
    rhs: np.ndarray,
    mask: Optional[np.ndarray] = None,
    index: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    theorem: bool = True,
) -> InequalityCheck:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lhs.shape)
    keep = np.ones(lhs.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    check = InequalityCheck(name, theorem=theorem)
    check.checked = int(keep.sum())
    if check.checked == 0:
        return check
    bad = violation_mask(lhs, rhs, tol) & keep
    check.violations = int(bad.sum())
    ex = np.where(keep, _excess(lhs, rhs), -np.inf)
    at = int(np.argmax(ex))
    check.worst_excess = float(ex[at])
    check.worst_at = (int(index[at]) if index is not None else at,)
    return check


def check_pairs(
    name: str,
    n: int,
    block_fn: BlockFn,
    index: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    theorem: bool = True,
) -> InequalityCheck:
    """
    Check lhs <= rhs over unordered pairs i < j of n points.

    `block_fn(start, stop)` returns (lhs, rhs, mask) arrays shaped
    (stop - start, n); mask may be None. `index` maps local positions to the
    ids reported in `worst_at`.
    """
    check = InequalityCheck(name, theorem=theorem)
    for start, stop in iter_blocks(n):
        lhs, rhs, mask = block_fn(start, stop)
        keep = upper_mask(start, stop, n)
        if mask is not None:
            keep &= mask
        count = int(keep.sum())
        if count == 0:
            continue
        check.checked += count
        bad = violation_mask(lhs, rhs, tol) & keep
        check.violations += int(bad.sum())
        ex = np.where(keep, _excess(lhs, rhs), -np.inf)
        flat = int(np.argmax(ex))
        i, j = divmod(flat, n)
        if ex[i, j] > check.worst_excess:
            check.worst_excess = float(ex[i, j])
            pair = (start + i, j)
            check.worst_at = tuple(int(index[p]) for p in pair) if index is not None else pair
    if check.violations:
        logger.warning(f"{name}: {check.violations} of {check.checked} pairs violate the bound")
    return check


@dataclass
class CertificateSet:
    """Named collection of checks attached to a result."""

    checks: List[InequalityCheck] = field(default_factory=list)

    def add(self, check: InequalityCheck) -> InequalityCheck:
        self.checks.append(check)
        return check

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.checks if c.theorem)

    def require(self) -> "CertificateSet":
        for c in self.checks:
            if c.theorem:
                c.require()
        return self

    def to_dict(self) -> List[Dict]:
        return [c.to_dict() for c in self.checks]
