"""Single-changepoint likelihood-ratio scan.

For each candidate split ``m`` the statistic

    -2 log Lambda_m = 2 [l_(0,m](d_(0,m]) + l_(m,n](d_(m,n]) - l_(0,n](d_n)]

compares the best split fit with the pooled fit.  Its supremum over
``m in [floor(n gamma), floor(n (1-gamma))]`` is tested against the
``sup_bridge`` null table and its argmax estimates the changepoint.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSegment, InvalidArgs
from .likelihood import (
    DEFAULT_BOUNDS,
    DEFAULT_TOL,
    FitSeries,
    SegmentFit,
    TransitionHistogram,
    fit_segment,
    fit_series_at,
    scan_grid,
)
from .null_dist import SUP_BRIDGE, NullQuantileTable

__all__ = ["LRScan", "ScanResult", "lr_scan", "lr_test", "default_stride"]

log = logging.getLogger(__name__)

COARSE_POINTS = 10_000
FINE_SWITCH_N = 100_000


@dataclass(frozen=True, eq=False)
class LRScan:
    """Statistic series of the likelihood-ratio scan.

    ``stats`` holds NaN where a prefix or suffix fit was degenerate.
    """

    n: int
    gamma: float
    steps: np.ndarray
    stats: np.ndarray
    fits: FitSeries
    full_fit: SegmentFit

    @property
    def t(self) -> np.ndarray:
        return self.steps / self.n

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.stats)

    @property
    def argmax_index(self) -> int:
        if not self.valid.any():
            raise DegenerateSegment("no valid split in the scan range")
        return int(np.nanargmax(self.stats))

    @property
    def sup_statistic(self) -> float:
        return float(self.stats[self.argmax_index])

    @property
    def argmax_step(self) -> int:
        return int(self.steps[self.argmax_index])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "t", "stat"])
        for m, s in zip(self.steps, self.stats):
            w.writerow([int(m), repr(float(m) / self.n), repr(float(s))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Outcome of the sup likelihood-ratio test."""

    gamma: float
    alpha: float
    n: int
    sup_statistic: float
    argmax_step: int
    t_hat: float
    critical_value: float
    p_value: float
    reject: bool
    full_fit: SegmentFit
    left_fit: SegmentFit
    right_fit: SegmentFit
    scan: LRScan = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "method": "lr",
            "n": self.n,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "sup_statistic": self.sup_statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": self.reject,
            "argmax_step": self.argmax_step,
            "t_hat": self.t_hat,
            "full_fit": self.full_fit.to_dict(),
            "left_fit": self.left_fit.to_dict(),
            "right_fit": self.right_fit.to_dict(),
        }


def default_stride(n: int) -> int:
    return 1 if n <= FINE_SWITCH_N else max(1, n // COARSE_POINTS)


def _stats_from_fits(fits: FitSeries, full_ll: float) -> np.ndarray:
    stats = 2.0 * (fits.loglik[0] + fits.loglik[1] - full_ll)
    stats = np.where(fits.valid, np.maximum(stats, 0.0), np.nan)
    return stats


def lr_scan(
    trace,
    gamma: float = 0.1,
    stride: int | None = None,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    tol: float = DEFAULT_TOL,
    warm: bool = True,
    refine: bool | None = None,
) -> LRScan:
    """Compute ``-2 log Lambda_m`` over the scan range.

    With ``stride=None`` a full stride-1 scan is used up to ``n = 1e5``.  For
    larger traces a coarse pass at stride ``n / 1e4`` is followed by a stride-1
    pass within two coarse strides of the coarse argmax (``refine``).
    """
    n = trace.n
    if stride is None:
        stride = default_stride(n)
        if refine is None:
            refine = stride > 1
    refine = bool(refine) and stride > 1
    full_hist = TransitionHistogram.from_degrees(trace.pre_degrees)
    full_fit = fit_segment(full_hist, bounds, tol=tol, min_length=1)
    grid = scan_grid(n, gamma, stride)
    if grid.size == 0:
        raise InvalidArgs("empty scan range")
    fits = fit_series_at(trace, grid, bounds, tol, warm, full_fit.delta_hat)
    stats = _stats_from_fits(fits, full_fit.loglik)

    if refine and np.isfinite(stats).any():
        centre = int(grid[int(np.nanargmax(stats))])
        lo = max(int(grid[0]), centre - 2 * stride)
        hi = min(int(grid[-1]), centre + 2 * stride)
        fine = np.union1d(grid, np.arange(lo, hi + 1, dtype=np.int64))
        fits = fit_series_at(trace, fine, bounds, tol, warm, full_fit.delta_hat)
        stats = _stats_from_fits(fits, full_fit.loglik)
        grid = fine

    bad = int((~np.isfinite(stats)).sum())
    if bad:
        log.warning("%d of %d split points had degenerate fits and were excluded", bad, stats.size)
    return LRScan(n=n, gamma=gamma, steps=grid, stats=stats, fits=fits, full_fit=full_fit)


def lr_test(
    trace,
    gamma: float,
    alpha: float,
    quantiles: NullQuantileTable,
    stride: int | None = None,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    tol: float = DEFAULT_TOL,
) -> ScanResult:
    """Sup likelihood-ratio test for a single changepoint.

    Rejects when the sup statistic exceeds the ``1 - alpha`` quantile of the
    table; the changepoint estimate is the smallest maximizing ``m`` over ``n``.
    """
    if not (0.0 < alpha < 1.0):
        raise InvalidArgs(f"alpha must lie in (0, 1), got {alpha}")
    quantiles.check(SUP_BRIDGE, gamma)
    scan = lr_scan(trace, gamma, stride, bounds, tol)
    j = scan.argmax_index
    sup = float(scan.stats[j])
    crit = quantiles.critical_value(alpha)
    return ScanResult(
        gamma=gamma,
        alpha=alpha,
        n=trace.n,
        sup_statistic=sup,
        argmax_step=int(scan.steps[j]),
        t_hat=float(scan.steps[j]) / trace.n,
        critical_value=crit,
        p_value=quantiles.p_value(sup),
        reject=bool(sup > crit),
        full_fit=scan.full_fit,
        left_fit=scan.fits.left(j),
        right_fit=scan.fits.right(j),
        scan=scan,
    )
