"""
Row-blocked pair kernels.

Every O(n^2) quantity in the toolkit goes through `iter_blocks`, so memory
stays at O(n * block) and reductions run in a fixed order.
"""

from typing import Callable, Iterator, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

DEFAULT_BLOCK_ROWS = 256

_block_rows = DEFAULT_BLOCK_ROWS

# (row positions, column positions) -> distance block
PairFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def set_block_rows(rows: int) -> None:
    global _block_rows
    _block_rows = max(1, int(rows))


def block_rows() -> int:
    return _block_rows


def iter_blocks(n: int, rows: Optional[int] = None) -> Iterator[Tuple[int, int]]:
    step = rows or _block_rows
    for start in range(0, n, step):
        yield start, min(n, start + step)


def vector_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances between the rows of a and b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    return cdist(a, b)


def ratio_block(numer: np.ndarray, denom: np.ndarray) -> np.ndarray:
    """numer/denom with 0/0 -> 0 and x/0 -> inf for x > 0."""
    out = np.zeros(np.shape(numer), dtype=float)
    positive = denom > 0
    np.divide(numer, denom, out=out, where=positive)
    out[(~positive) & (numer > 0)] = np.inf
    return out


def upper_mask(start: int, stop: int, n: int) -> np.ndarray:
    """Mask selecting the pairs (i, j) with j > i for rows start..stop."""
    rows = np.arange(start, stop)[:, None]
    cols = np.arange(n)[None, :]
    return cols > rows


def max_ratio(image_fn: PairFn, domain_fn: PairFn, n: int) -> Tuple[float, Optional[Tuple[int, int]]]:
    """
    Largest image/domain distance ratio over the pairs of n positions.

    Both callables receive arrays of positions in 0..n-1. Returns the ratio
    and the realizing pair of positions.
    """
    if n < 2:
        return 0.0, None
    cols = np.arange(n)
    best = 0.0
    best_pair = None
    for start, stop in iter_blocks(n):
        rows = cols[start:stop]
        ratio = ratio_block(image_fn(rows, cols), domain_fn(rows, cols))
        ratio[~upper_mask(start, stop, n)] = 0.0
        flat = int(np.argmax(ratio))
        i, j = divmod(flat, n)
        if ratio[i, j] > best:
            best = float(ratio[i, j])
            best_pair = (start + i, j)
    return best, best_pair


def max_ratio_values(values: np.ndarray, dist: np.ndarray, index: Optional[np.ndarray] = None) -> float:
    """Lipschitz constant of the vectors `values` over the points `index` of `dist`."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    idx = np.arange(len(vals)) if index is None else np.asarray(index, dtype=int)
    lip, _ = max_ratio(
        lambda r, c: vector_distances(vals[r], vals[c]),
        lambda r, c: dist[np.ix_(idx[r], idx[c])],
        len(idx),
    )
    return lip
