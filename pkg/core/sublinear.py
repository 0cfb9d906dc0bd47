from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from core.errors import InstanceFormatError, PreconditionError
from utils.logger import AppLogger

logger = AppLogger(name="Sublinear").get_logger()


@dataclass(eq=False)
class PiecewiseLinearFunction:
    """
    Continuous piecewise-linear s: [0, inf) -> [0, inf).

    Constant left of the first breakpoint, linear between breakpoints, and a
    ray of slope `tail_slope` after the last one.
    """

    breakpoints: np.ndarray
    tail_slope: float = 0.0

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.ndim != 2 or bp.shape[1] != 2 or bp.shape[0] == 0:
            raise InstanceFormatError("breakpoints must be a nonempty list of [t, value] pairs")
        t, v = bp[:, 0], bp[:, 1]
        if (t < 0).any():
            raise PreconditionError("breakpoint abscissae must be nonnegative")
        if (np.diff(t) <= 0).any():
            raise PreconditionError("breakpoint abscissae must be strictly increasing")
        if (v < 0).any():
            raise PreconditionError("function values must be nonnegative")
        if self.tail_slope < 0:
            raise PreconditionError("tail slope must be nonnegative")
        bp.setflags(write=False)
        self.breakpoints = bp
        self.tail_slope = float(self.tail_slope)

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], ts: Sequence[float], tail_slope: float = 0.0):
        ts = np.asarray(ts, dtype=float)
        return cls(np.column_stack([ts, fn(ts)]), tail_slope)

    @classmethod
    def from_dict(cls, data: Dict) -> "PiecewiseLinearFunction":
        try:
            return cls(np.asarray(data["breakpoints"], dtype=float), float(data.get("tail_slope", 0.0)))
        except KeyError as e:
            raise InstanceFormatError(f"function JSON missing key {e}") from None

    @property
    def ts(self) -> np.ndarray:
        return self.breakpoints[:, 0]

    @property
    def values(self) -> np.ndarray:
        return self.breakpoints[:, 1]

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.ts)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.ts, self.values)
        beyond = t > self.ts[-1]
        if np.any(beyond):
            out = np.where(beyond, self.values[-1] + self.tail_slope * (t - self.ts[-1]), out)
        return out if out.ndim else float(out)

    def sup_ratio_beyond(self, R: float) -> float:
        """sup of s(r)/r over r >= R."""
        if R <= 0:
            return float("inf") if self.values.max() > 0 or self.tail_slope > 0 else 0.0
        candidates = [self(R) / R]
        tail = self.ts >= R
        candidates.extend((self.values[tail] / self.ts[tail]).tolist())
        # s(r)/r is monotone on every segment and on the ray, tending to the tail slope
        candidates.append(self.tail_slope)
        return float(max(candidates))

    def with_tail_slope(self, slope: float) -> "PiecewiseLinearFunction":
        return PiecewiseLinearFunction(self.breakpoints.copy(), slope)

    def to_dict(self) -> Dict:
        return {"breakpoints": self.breakpoints.tolist(), "tail_slope": self.tail_slope}


@dataclass
class SublinearWitness:
    slope_sequence: List[float]
    tail_slope: float
    verdict: bool
    witness_slope: Optional[float] = None

    def to_dict(self) -> Dict:
        out = {
            "verdict": self.verdict,
            "slope_sequence": self.slope_sequence,
            "tail_slope": self.tail_slope,
        }
        if self.witness_slope is not None:
            out["witness"] = {"linear_slope": self.witness_slope}
        return out


def is_asymptotically_sublinear(s: PiecewiseLinearFunction) -> SublinearWitness:
    """
    A piecewise-linear function is eventually below every linear r -> a*r
    (a > 0) iff its final ray is flat; a ray of slope sigma > 0 stays above
    r -> sigma*r/2, which is returned as the witness.
    """
    sigma = s.tail_slope
    verdict = sigma == 0.0
    return SublinearWitness(
        slope_sequence=s.slopes.tolist(),
        tail_slope=sigma,
        verdict=verdict,
        witness_slope=None if verdict else sigma / 2.0,
    )


class FitCase(Enum):
    NONINCREASING = "nonincreasing"
    CHORD = "chord"


@dataclass
class SublinearFit:
    function: PiecewiseLinearFunction
    selected: List[int]
    case: FitCase
    rejected: List[int] = field(default_factory=list)
    rule: str = "greedy-first-lower-chord"

    def to_dict(self) -> Dict:
        return {
            "function": self.function.to_dict(),
            "selected": self.selected,
            "rejected": self.rejected,
            "case": self.case.value,
            "selection_rule": self.rule,
            "witness": is_asymptotically_sublinear(self.function).to_dict(),
        }


def _nonincreasing_chain(values: np.ndarray) -> List[int]:
    peak = int(np.argmax(values))
    chosen = list(range(peak + 1))
    current = values[peak]
    for k in range(peak + 1, len(values)):
        if values[k] <= current:
            chosen.append(k)
            current = values[k]
    return chosen


def _decreasing_chords(ts: np.ndarray, values: np.ndarray) -> List[int]:
    chosen = [0]
    previous = np.inf
    current = 0
    for k in range(1, len(values)):
        slope = (values[k] - values[current]) / (ts[k] - ts[current])
        if 0 < slope < previous:
            chosen.append(k)
            previous = slope
            current = k
    return chosen


def fit_sublinear_through(ts: Sequence[float], coeffs: Sequence[float]) -> SublinearFit:
    """
    Piecewise-linear s with s(t_k) = a_k * t_k on a selected subsequence.

    When the targets a_k * t_k stop setting new records, s follows a
    nonincreasing chain after the first maximum. Otherwise s climbs through
    samples whose chord slopes strictly decrease, taking the first sample
    that lowers the slope each time. Both end in a flat ray.
    """
    ts = np.asarray(ts, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    if ts.shape != coeffs.shape or ts.ndim != 1:
        raise InstanceFormatError("samples need matching t and a sequences")
    if len(ts) < 2:
        raise PreconditionError("at least two samples are required")
    if (np.diff(ts) <= 0).any():
        raise PreconditionError("sample abscissae must be strictly increasing")
    if (ts < 0).any():
        raise PreconditionError("sample abscissae must be nonnegative")
    if (coeffs <= 0).any():
        raise PreconditionError("sample coefficients must be positive")

    targets = coeffs * ts
    if targets[-1] > targets[:-1].max():
        case = FitCase.CHORD
        chosen = _decreasing_chords(ts, targets)
    else:
        case = FitCase.NONINCREASING
        chosen = _nonincreasing_chain(targets)

    rejected = [k for k in range(len(ts)) if k not in set(chosen)]
    if rejected:
        logger.info(f"Sublinear fit ({case.value}) skipped samples {rejected}")
    function = PiecewiseLinearFunction(np.column_stack([ts[chosen], targets[chosen]]), 0.0)
    return SublinearFit(function, chosen, case, rejected)
