"""Agreement between segmentations."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import InvalidFractions

__all__ = ["rand_index", "segment_labels"]


def _boundaries(fractions: Sequence[float], n: int) -> np.ndarray:
    f = np.asarray(list(fractions), dtype=float)
    if f.size and (np.any(~np.isfinite(f)) or np.any(f <= 0) or np.any(f >= 1) or np.any(np.diff(f) <= 0)):
        raise InvalidFractions(f"changepoint fractions must be strictly increasing in (0, 1): {list(fractions)}")
    return np.floor(f * n).astype(np.int64)


def segment_labels(fractions: Sequence[float], n: int) -> np.ndarray:
    """Segment index of each point ``1 .. n``; point ``x`` lies after cut ``c`` when ``x > floor(c n)``."""
    b = _boundaries(fractions, n)
    return np.searchsorted(b, np.arange(1, n + 1), side="left")


def _pairs(x: np.ndarray) -> float:
    x = x.astype(float)
    return float(np.sum(x * (x - 1) / 2))


def rand_index(true_cps: Sequence[float], est_cps: Sequence[float], n: int) -> float:
    """Rand index of the two segmentations of ``{1, ..., n}``.

    Both partitions are into intervals, so the contingency table has at most
    ``len(true) + len(est) + 1`` non-empty cells and is built from the merged
    cut points.
    """
    if n < 2:
        raise InvalidFractions("need n >= 2 points")
    a = _boundaries(true_cps, n)
    b = _boundaries(est_cps, n)
    cuts = np.unique(np.concatenate(([0], a, b, [n])))
    cells = np.diff(cuts)
    cells = cells[cells > 0]
    sizes_a = np.diff(np.concatenate(([0], a, [n])))
    sizes_b = np.diff(np.concatenate(([0], b, [n])))
    total = n * (n - 1) / 2
    same_both = _pairs(cells)
    agree = total + 2 * same_both - _pairs(sizes_a) - _pairs(sizes_b)
    return float(agree / total) if total else math.nan
