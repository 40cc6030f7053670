"""Sliding-window maxima and h-local maximizers."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _trailing_max(x, w):
    # out[l] = max(x[l-w+1 .. l]) via a monotone deque
    n = x.shape[0]
    out = np.empty(n)
    dq = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    for l in range(n):
        while tail > head and x[dq[tail - 1]] <= x[l]:
            tail -= 1
        dq[tail] = l
        tail += 1
        if dq[head] <= l - w:
            head += 1
        out[l] = x[dq[head]]
    return out


@njit(cache=True)
def _local_max_mask(x, h):
    n = x.shape[0]
    mask = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return mask
    left_incl = _trailing_max(x, h + 1)
    left_strict = _trailing_max(x, h)
    rev = _trailing_max(x[::-1].copy(), h + 1)[::-1]
    ninf = -np.inf
    for l in range(n):
        v = x[l]
        if v == ninf:
            continue
        if v < left_incl[l] or v < rev[l]:
            continue
        # ties inside the window resolve to the leftmost index
        if l >= 1 and not v > left_strict[l - 1]:
            continue
        mask[l] = True
    return mask


def local_max_indices(values: np.ndarray, h: int) -> np.ndarray:
    """Indices ``l`` with ``values[l] >= values[k]`` for all ``|k - l| <= h``.

    Plateaus collapse to their smallest index; NaN entries never qualify.
    """
    x = np.asarray(values, dtype=float).copy()
    x[~np.isfinite(x)] = -np.inf
    return np.flatnonzero(_local_max_mask(x, int(h)))
