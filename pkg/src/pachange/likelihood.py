"""Segment likelihood, score and hessian for the offset parameter.

Over a segment of attachment events the log-likelihood of offset ``lam`` is

    l(lam) = sum_k log(d_k + lam) - sum_k log(k - 1) - m log(2 + lam)

where ``d_k`` is the pre-attachment degree at step ``k`` and ``m`` the number
of events.  It depends on the events only through the histogram of ``d_k``,
so every routine here works on a :class:`TransitionHistogram` and costs
O(max degree) regardless of the segment length.  The ``log(k - 1)`` term does
not involve ``lam`` and is carried as an opaque constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DegenerateSegment, DomainError, InvalidArgs, SegmentTooShort

__all__ = [
    "DEFAULT_BOUNDS",
    "MIN_SEGMENT_LENGTH",
    "TransitionHistogram",
    "SegmentFit",
    "FitSeries",
    "segment_loglik",
    "score",
    "hessian",
    "fit_segment",
    "prefix_fit_series",
]

DEFAULT_BOUNDS = (-0.95, 25.0)
MIN_SEGMENT_LENGTH = 50
DEFAULT_TOL = 1e-10

# fit status codes shared with the numba kernels
OK, BOUNDS_HIT, DEGENERATE, NOT_CONVERGED, EMPTY = 0, 1, 2, 3, 4


class TransitionHistogram:
    """Counts ``c_i`` of events whose pre-attachment degree equals ``i``.

    Stored densely: ``counts[i]`` for ``i = 0 .. max_degree``; ``counts[0]`` is
    always zero for well-formed traces.
    """

    __slots__ = ("counts", "step_count")

    def __init__(self, counts: np.ndarray | None = None, step_count: int | None = None):
        if counts is None:
            counts = np.zeros(2, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64).copy()
        if counts.ndim != 1:
            raise InvalidArgs("counts must be one-dimensional")
        if np.any(counts < 0):
            raise InvalidArgs("counts must be non-negative")
        total = int(counts.sum())
        if step_count is not None and step_count != total:
            raise InvalidArgs(f"step_count {step_count} != sum of counts {total}")
        self.counts = counts
        self.step_count = total

    @classmethod
    def from_degrees(cls, degrees: np.ndarray, max_degree: int | None = None) -> "TransitionHistogram":
        degrees = np.asarray(degrees, dtype=np.int64)
        minlength = 2 if max_degree is None else max_degree + 1
        if degrees.size == 0:
            return cls(np.zeros(minlength, dtype=np.int64))
        if degrees.min() < 1:
            raise InvalidArgs("pre-attachment degrees must be >= 1")
        return cls(np.bincount(degrees, minlength=minlength))

    @classmethod
    def from_mapping(cls, mapping: dict[int, int]) -> "TransitionHistogram":
        size = max(mapping, default=1) + 1
        counts = np.zeros(max(size, 2), dtype=np.int64)
        for i, c in mapping.items():
            counts[i] += c
        return cls(counts)

    def _grow(self, i: int) -> None:
        if i >= self.counts.shape[0]:
            new = np.zeros(max(i + 1, 2 * self.counts.shape[0]), dtype=np.int64)
            new[: self.counts.shape[0]] = self.counts
            self.counts = new

    def increment(self, i: int, by: int = 1) -> None:
        self._grow(i)
        self.counts[i] += by
        self.step_count += by

    def decrement(self, i: int, by: int = 1) -> None:
        if i >= self.counts.shape[0] or self.counts[i] < by:
            raise InvalidArgs(f"bin {i} would become negative")
        self.counts[i] -= by
        self.step_count -= by

    def as_dict(self) -> dict[int, int]:
        nz = np.flatnonzero(self.counts)
        return {int(i): int(self.counts[i]) for i in nz}

    @property
    def values(self) -> np.ndarray:
        return np.arange(self.counts.shape[0], dtype=np.float64)

    @property
    def min_degree(self) -> int | None:
        nz = np.flatnonzero(self.counts)
        return int(nz[0]) if nz.size else None

    @property
    def is_degenerate(self) -> bool:
        """All mass at degree 2, where the score vanishes identically."""
        return self.step_count > 0 and self.counts.shape[0] > 2 and self.counts[2] == self.step_count

    def __add__(self, other: "TransitionHistogram") -> "TransitionHistogram":
        size = max(self.counts.shape[0], other.counts.shape[0])
        out = np.zeros(size, dtype=np.int64)
        out[: self.counts.shape[0]] += self.counts
        out[: other.counts.shape[0]] += other.counts
        return TransitionHistogram(out)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransitionHistogram):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __repr__(self) -> str:
        return f"TransitionHistogram(m={self.step_count}, {self.as_dict()!r})"


@dataclass(frozen=True)
class SegmentFit:
    """Maximum likelihood fit of the offset over one segment."""

    delta_hat: float
    score_at_root: float
    observed_information: float
    iterations: int
    converged: bool
    bounds_hit: bool
    step_count: int = 0
    loglik: float = float("nan")

    def wald_ci(self, level: float = 0.95) -> tuple[float, float]:
        """Wald interval ``delta_hat +/- z / sqrt(observed information)``."""
        from scipy.stats import norm

        if not self.observed_information > 0:
            return (float("nan"), float("nan"))
        half = norm.ppf(0.5 + level / 2) / math.sqrt(self.observed_information)
        return (self.delta_hat - half, self.delta_hat + half)

    def to_dict(self) -> dict:
        lo, hi = self.wald_ci()
        return {
            "delta_hat": self.delta_hat,
            "ci_low": lo,
            "ci_high": hi,
            "observed_information": self.observed_information,
            "score_at_root": self.score_at_root,
            "iterations": self.iterations,
            "converged": self.converged,
            "bounds_hit": self.bounds_hit,
            "step_count": self.step_count,
        }


# --------------------------------------------------------------------------
# numba kernels over dense histograms


@njit(cache=True)
def _score_hess(counts, vals, m, lam):
    # counts[j] events at degree vals[j]; dense histograms pass vals = arange
    s = 0.0
    h = 0.0
    for j in range(counts.shape[0]):
        c = counts[j]
        if c != 0:
            inv = 1.0 / (vals[j] + lam)
            s += c * inv
            h -= c * inv * inv
    inv2 = 1.0 / (2.0 + lam)
    s -= m * inv2
    h += m * inv2 * inv2
    return s, h


@njit(cache=True)
def _loglik(counts, vals, m, lam):
    # lambda-dependent part only: sum_i c_i log(i + lam) - m log(2 + lam)
    acc = 0.0
    for j in range(counts.shape[0]):
        c = counts[j]
        if c != 0:
            acc += c * math.log(vals[j] + lam)
    return acc - m * math.log(2.0 + lam)


@njit(cache=True)
def _is_flat(counts, vals):
    for j in range(counts.shape[0]):
        if counts[j] != 0 and vals[j] != 2.0:
            return False
    return True


@njit(cache=True)
def _fit_core(counts, vals, m, lo, hi, x0, tol_rel, max_iter):
    """Safeguarded Newton on the score.

    Returns (delta, score, hessian, iterations, status).
    """
    if m <= 0:
        return math.nan, math.nan, math.nan, 0, EMPTY
    if _is_flat(counts, vals):
        return math.nan, 0.0, 0.0, 0, DEGENERATE
    tol = tol_rel * m
    it = 0

    # unguarded Newton from a warm start; bail out to the bracket on trouble
    if not math.isnan(x0) and lo < x0 < hi:
        x = x0
        while it < max_iter:
            s, h = _score_hess(counts, vals, m, x)
            it += 1
            if abs(s) < tol:
                return x, s, h, it, OK
            if not h < 0.0:
                break
            xn = x - s / h
            if not (lo < xn < hi):
                break
            if abs(xn - x) < 1e-12:
                s, h = _score_hess(counts, vals, m, xn)
                return xn, s, h, it, OK
            x = xn

    s_lo, h_lo = _score_hess(counts, vals, m, lo)
    s_hi, h_hi = _score_hess(counts, vals, m, hi)
    it += 2
    if not (s_lo > 0.0 and s_hi < 0.0):
        if abs(s_lo) < tol and not s_hi > 0.0:
            return lo, s_lo, h_lo, it, OK
        if abs(s_hi) < tol and not s_lo < 0.0:
            return hi, s_hi, h_hi, it, OK
        # no interior maximum: take the better endpoint
        if _loglik(counts, vals, m, lo) >= _loglik(counts, vals, m, hi):
            return lo, s_lo, h_lo, it, BOUNDS_HIT
        return hi, s_hi, h_hi, it, BOUNDS_HIT

    a = lo
    b = hi
    if not math.isnan(x0) and lo < x0 < hi:
        x = x0
    else:
        x = 0.5 * (a + b)
        if x > 5.0:
            x = 1.0
    dx_old = b - a
    dx = dx_old
    while it < max_iter:
        s, h = _score_hess(counts, vals, m, x)
        it += 1
        if abs(s) < tol:
            return x, s, h, it, OK
        if s > 0.0:
            a = x
        else:
            b = x
        newton_ok = h < 0.0
        if newton_ok:
            xn = x - s / h
            newton_ok = a < xn < b and abs(xn - x) < 0.5 * abs(dx_old)
        dx_old = dx
        if newton_ok:
            dx = xn - x
            x = xn
        else:
            dx = 0.5 * (b - a)
            x = a + dx
        if abs(dx) < 1e-12 or (b - a) < 1e-12:
            s, h = _score_hess(counts, vals, m, x)
            return x, s, h, it, OK
    s, h = _score_hess(counts, vals, m, x)
    return x, s, h, it, NOT_CONVERGED


# --------------------------------------------------------------------------
# public API


def _check_domain(hist: TransitionHistogram, lam: float) -> None:
    if not lam > -1.0:
        raise DomainError(f"offset must exceed -1, got {lam}")
    dmin = hist.min_degree
    if dmin is not None and not lam > -dmin:
        raise DomainError(f"log({dmin} + {lam}) undefined")


def segment_loglik(hist: TransitionHistogram, log_k_sum: float, lam: float) -> float:
    """Segment log-likelihood ``sum_i c_i log(i+lam) - log_k_sum - m log(2+lam)``."""
    _check_domain(hist, lam)
    return float(_loglik(hist.counts, hist.values, hist.step_count, float(lam))) - log_k_sum


def score(hist: TransitionHistogram, lam: float) -> float:
    """``sum_i c_i / (i + lam) - m / (2 + lam)``."""
    _check_domain(hist, lam)
    return float(_score_hess(hist.counts, hist.values, hist.step_count, float(lam))[0])


def hessian(hist: TransitionHistogram, lam: float) -> float:
    """``-sum_i c_i / (i + lam)^2 + m / (2 + lam)^2``."""
    _check_domain(hist, lam)
    return float(_score_hess(hist.counts, hist.values, hist.step_count, float(lam))[1])


def _make_fit(counts, vals, m, delta, s, h, it, status) -> SegmentFit:
    ll = float(_loglik(counts, vals, m, delta)) if status in (OK, BOUNDS_HIT, NOT_CONVERGED) else math.nan
    return SegmentFit(
        delta_hat=float(delta),
        score_at_root=float(s),
        observed_information=float(-h),
        iterations=int(it),
        converged=status == OK,
        bounds_hit=status == BOUNDS_HIT,
        step_count=int(m),
        loglik=ll,
    )


def fit_segment(
    hist: TransitionHistogram,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    warm_start: float | None = None,
    tol: float = DEFAULT_TOL,
    min_length: int = MIN_SEGMENT_LENGTH,
    max_iter: int = 200,
) -> SegmentFit:
    """MLE of the offset over a segment.

    Newton's method on the score, kept inside a sign-bracketing interval by
    bisection.  When the score does not change sign on ``bounds`` the better
    endpoint is returned with ``bounds_hit`` set.

    Raises
    ------
    SegmentTooShort
        Fewer than ``min_length`` events.
    DegenerateSegment
        Every event hit a degree-2 node, so the likelihood is flat.
    """
    lo, hi = bounds
    if not (-1.0 < lo < hi):
        raise InvalidArgs(f"bounds must satisfy -1 < lo < hi, got {bounds}")
    m = hist.step_count
    if m < max(min_length, 1):
        raise SegmentTooShort(f"segment has {m} events, need at least {min_length}")
    x0 = math.nan if warm_start is None else float(warm_start)
    vals = hist.values
    delta, s, h, it, status = _fit_core(hist.counts, vals, m, float(lo), float(hi), x0, tol, max_iter)
    if status == DEGENERATE:
        raise DegenerateSegment("all pre-attachment degrees equal 2; score is identically zero")
    return _make_fit(hist.counts, vals, m, delta, s, h, it, status)


# --------------------------------------------------------------------------
# prefix / suffix series


@njit(cache=True)
def _prefix_suffix_kernel(pre, vals, splits, lo, hi, tol, warm, x0, max_iter):
    # pre holds compact bin indices into vals
    n_ev = pre.shape[0]
    left = np.zeros(vals.shape[0], dtype=np.int64)
    right = np.zeros(vals.shape[0], dtype=np.int64)
    for e in range(n_ev):
        right[pre[e]] += 1
    g = splits.shape[0]
    out_d = np.empty((2, g))
    out_s = np.empty((2, g))
    out_h = np.empty((2, g))
    out_ll = np.empty((2, g))
    out_it = np.empty((2, g), dtype=np.int64)
    out_st = np.empty((2, g), dtype=np.int64)
    idx = 0
    prev_l = x0
    prev_r = x0
    for j in range(g):
        while idx < splits[j]:
            d = pre[idx]
            left[d] += 1
            right[d] -= 1
            idx += 1
        m_l = idx
        m_r = n_ev - idx
        for side in range(2):
            if side == 0:
                hist = left
                m = m_l
                start = prev_l if warm else math.nan
            else:
                hist = right
                m = m_r
                start = prev_r if warm else math.nan
            d_, s_, h_, it_, st_ = _fit_core(hist, vals, m, lo, hi, start, tol, max_iter)
            out_d[side, j] = d_
            out_s[side, j] = s_
            out_h[side, j] = h_
            out_it[side, j] = it_
            out_st[side, j] = st_
            if st_ == OK or st_ == BOUNDS_HIT or st_ == NOT_CONVERGED:
                out_ll[side, j] = _loglik(hist, vals, m, d_)
                if side == 0:
                    prev_l = d_
                else:
                    prev_r = d_
            else:
                out_ll[side, j] = math.nan
    return out_d, out_s, out_h, out_ll, out_it, out_st


@dataclass(frozen=True)
class FitSeries:
    """Fits of the prefix ``(0, m]`` and suffix ``(m, n]`` for a grid of ``m``.

    Arrays are indexed by grid position; row 0 is the prefix, row 1 the suffix.
    """

    steps: np.ndarray
    delta: np.ndarray
    score: np.ndarray
    hessian: np.ndarray
    loglik: np.ndarray
    iterations: np.ndarray
    status: np.ndarray
    event_splits: np.ndarray
    n_events: int

    def __len__(self) -> int:
        return int(self.steps.shape[0])

    def _fit(self, side: int, j: int) -> SegmentFit:
        st = int(self.status[side, j])
        m = int(self.event_splits[j]) if side == 0 else self.n_events - int(self.event_splits[j])
        return SegmentFit(
            delta_hat=float(self.delta[side, j]),
            score_at_root=float(self.score[side, j]),
            observed_information=float(-self.hessian[side, j]),
            iterations=int(self.iterations[side, j]),
            converged=st == OK,
            bounds_hit=st == BOUNDS_HIT,
            step_count=m,
            loglik=float(self.loglik[side, j]),
        )

    def left(self, j: int) -> SegmentFit:
        return self._fit(0, j)

    def right(self, j: int) -> SegmentFit:
        return self._fit(1, j)

    @property
    def valid(self) -> np.ndarray:
        ok = (self.status == OK) | (self.status == BOUNDS_HIT)
        return ok[0] & ok[1]


def compact_degrees(pre_degrees: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct degrees (as floats) and each event's index into them."""
    if pre_degrees.size == 0:
        return np.zeros(1), np.zeros(0, dtype=np.int64)
    vals, inv = np.unique(pre_degrees, return_inverse=True)
    return vals.astype(np.float64), np.ascontiguousarray(inv, dtype=np.int64)


def scan_grid(n: int, gamma: float, stride: int = 1) -> np.ndarray:
    """Candidate split steps ``m`` in ``[floor(n gamma), floor(n (1 - gamma))]``."""
    if not (0.0 < gamma < 0.5):
        raise InvalidArgs(f"gamma must lie in (0, 1/2), got {gamma}")
    if stride < 1:
        raise InvalidArgs("stride must be >= 1")
    lo = int(math.floor(n * gamma))
    hi = int(math.floor(n * (1.0 - gamma)))
    return np.arange(lo, hi + 1, stride, dtype=np.int64)


def fit_series_at(
    trace,
    steps: np.ndarray,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    tol: float = DEFAULT_TOL,
    warm: bool = True,
    warm_start: float | None = None,
    max_iter: int = 200,
) -> FitSeries:
    """Prefix and suffix fits at explicit split steps (sorted ascending)."""
    steps = np.asarray(steps, dtype=np.int64)
    if steps.size > 1 and np.any(np.diff(steps) <= 0):
        raise InvalidArgs("split steps must be strictly increasing")
    if steps.size and (steps[0] < 0 or steps[-1] > trace.n):
        raise InvalidArgs("split steps outside the trace")
    seed = trace.seed.size
    splits = np.maximum(steps - seed, 0).astype(np.int64)
    vals, pre = compact_degrees(trace.pre_degrees)
    x0 = math.nan if warm_start is None else float(warm_start)
    d, s, h, ll, it, st = _prefix_suffix_kernel(
        pre, vals, splits, float(bounds[0]), float(bounds[1]), tol, warm, x0, max_iter
    )
    return FitSeries(steps, d, s, h, ll, it, st, splits, int(pre.shape[0]))


def prefix_fit_series(
    trace,
    gamma: float,
    stride: int = 1,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    tol: float = DEFAULT_TOL,
    warm: bool = True,
) -> FitSeries:
    """Fits of ``delta_(0,m]`` and ``delta_(m,n]`` for ``m`` on the scan grid.

    Prefix and suffix histograms are updated one event at a time and each fit
    is warm-started from the previous grid point, which keeps the sweep
    linear in ``n`` up to the O(max degree) cost of a Newton step.
    """
    full = TransitionHistogram.from_degrees(trace.pre_degrees)
    start = None
    if warm:
        try:
            start = fit_segment(full, bounds, tol=tol, min_length=1).delta_hat
        except DegenerateSegment:
            start = None
    return fit_series_at(trace, scan_grid(trace.n, gamma, stride), bounds, tol, warm, start)
