"""Multiple changepoints: window scan with local maxima, and score-based
binary segmentation.

The window statistic at step ``k`` swaps the two half-window MLEs,

    -2 log Lambda_k(h) = 2 [l_L(d_L) - l_L(d_R) + l_R(d_R) - l_R(d_L)],

with ``L = (k-h, k]`` and ``R = (k, k+h]``.  Its h-local maxima are compared
with the pooled s-local maxima of the limiting process.

The score statistic needs a single fit per segment,

    S_m = -u_(a,m](d)^2 (1/u'_(a,m](d) + 1/u'_(m,b](d)),

evaluated at the segment MLE ``d``, and drives a plain binary segmentation.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from ._peaks import local_max_indices
from .errors import DegenerateSegment, InvalidArgs, InvalidP, SegmentTooShort, WindowTooSmall
from .graph_engine import transition_histogram
from .likelihood import (
    BOUNDS_HIT,
    DEFAULT_BOUNDS,
    DEFAULT_TOL,
    NOT_CONVERGED,
    OK,
    SegmentFit,
    TransitionHistogram,
    _fit_core,
    _loglik,
    compact_degrees,
    fit_segment,
)
from .null_dist import LOCAL_MAX_X, SUP_BRIDGE, NullQuantileTable

__all__ = [
    "WindowScan",
    "ScoreScan",
    "SegNode",
    "ChangepointReport",
    "window_scan",
    "local_maximizers",
    "sara_detect",
    "score_scan",
    "binary_segmentation",
    "holm_adjust",
    "segment_fits",
]

log = logging.getLogger(__name__)

MIN_LEN_FLOOR = 100
DEFAULT_MIN_LEN = 1000


# --------------------------------------------------------------------------
# shared report


@dataclass
class ChangepointReport:
    """Detected changepoints with their tests and per-segment fits."""

    method: str
    n: int
    changepoints: list[int]
    statistics: list[float]
    p_values: list[float]
    p_values_holm: list[float]
    segment_fits: list[SegmentFit]
    tests: list[dict] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    @property
    def fractions(self) -> list[float]:
        return [c / self.n for c in self.changepoints]

    @property
    def n_changepoints(self) -> int:
        return len(self.changepoints)

    def holm_changepoints(self, alpha: float) -> list[int]:
        return [c for c, p in zip(self.changepoints, self.p_values_holm) if p <= alpha]

    def to_dict(self) -> dict:
        bounds = [0, *self.changepoints, self.n]
        segs = []
        for (a, b), f in zip(zip(bounds, bounds[1:]), self.segment_fits):
            segs.append({"start": a, "end": b, **(f.to_dict() if f is not None else {})})
        return {
            "method": self.method,
            "n": self.n,
            "settings": self.settings,
            "changepoints": list(map(int, self.changepoints)),
            "fractions": self.fractions,
            "statistics": self.statistics,
            "p_values": self.p_values,
            "p_values_holm": self.p_values_holm,
            "segments": segs,
            "tests": self.tests,
        }


def holm_adjust(p_values: Sequence[float]) -> list[float]:
    """Holm step-down adjusted p-values, returned in the input order."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return []
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise InvalidP(f"p-values must lie in [0, 1]: {p_values}")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = np.minimum(1.0, (m - np.arange(m)) * p[order])
    adj = np.maximum.accumulate(scaled)
    out = np.empty(m)
    out[order] = adj
    return out.tolist()


def segment_fits(
    trace, changepoints: Sequence[int], bounds: tuple[float, float] = DEFAULT_BOUNDS
) -> list[SegmentFit | None]:
    """MLE on each segment between consecutive changepoints.

    Segments without a usable fit (too short or degenerate) give ``None``.
    """
    edges = [trace.seed.size, *sorted(int(c) for c in changepoints), trace.n]
    out = []
    for a, b in zip(edges, edges[1:]):
        try:
            out.append(fit_segment(transition_histogram(trace, a, b), bounds, min_length=1))
        except (DegenerateSegment, SegmentTooShort, Exception) as exc:  # noqa: BLE001
            log.debug("segment (%d, %d] not fitted: %s", a, b, exc)
            out.append(None)
    return out


# --------------------------------------------------------------------------
# window scan


@njit(cache=True)
def _window_kernel(pre, vals, n_seed, ks, h, lo, hi, tol, max_iter, mode):
    nb = vals.shape[0]
    left = np.zeros(nb, dtype=np.int64)
    right = np.zeros(nb, dtype=np.int64)
    both = np.zeros(nb, dtype=np.int64)
    n_ev = pre.shape[0]
    la = 0
    lb = 0
    ra = 0
    rb = 0
    g = ks.shape[0]
    stats = np.empty(g)
    d_l = np.empty(g)
    d_r = np.empty(g)
    prev_l = math.nan
    prev_r = math.nan
    prev_w = math.nan
    for j in range(g):
        k = ks[j]
        ta = max(k - h - n_seed, 0)
        tb = min(max(k - n_seed, 0), n_ev)
        tc = min(max(k + h - n_seed, 0), n_ev)
        # left window events [ta, tb), right [tb, tc)
        while lb < tb:
            left[pre[lb]] += 1
            lb += 1
        while la < ta:
            left[pre[la]] -= 1
            la += 1
        while rb < tc:
            right[pre[rb]] += 1
            rb += 1
        while ra < tb:
            right[pre[ra]] -= 1
            ra += 1
        m_l = lb - la
        m_r = rb - ra
        dl, sl, hl, itl, stl = _fit_core(left, vals, m_l, lo, hi, prev_l, tol, max_iter)
        dr, sr, hr, itr, str_ = _fit_core(right, vals, m_r, lo, hi, prev_r, tol, max_iter)
        good_l = stl == OK or stl == BOUNDS_HIT or stl == NOT_CONVERGED
        good_r = str_ == OK or str_ == BOUNDS_HIT or str_ == NOT_CONVERGED
        d_l[j] = dl
        d_r[j] = dr
        if not (good_l and good_r):
            stats[j] = math.nan
            continue
        prev_l = dl
        prev_r = dr
        ll_ll = _loglik(left, vals, m_l, dl)
        ll_rr = _loglik(right, vals, m_r, dr)
        if mode == 0:
            ll_lr = _loglik(left, vals, m_l, dr)
            ll_rl = _loglik(right, vals, m_r, dl)
            st = 2.0 * (ll_ll - ll_lr + ll_rr - ll_rl)
        else:
            for b in range(nb):
                both[b] = left[b] + right[b]
            dw, sw, hw, itw, stw = _fit_core(both, vals, m_l + m_r, lo, hi, prev_w, tol, max_iter)
            if not (stw == OK or stw == BOUNDS_HIT or stw == NOT_CONVERGED):
                stats[j] = math.nan
                continue
            prev_w = dw
            st = 2.0 * (ll_ll + ll_rr - _loglik(both, vals, m_l + m_r, dw))
        stats[j] = st if st > 0.0 else 0.0
    return stats, d_l, d_r


@dataclass(frozen=True, eq=False)
class WindowScan:
    """Window statistic ``-2 log Lambda_k(h)`` at steps ``k``."""

    n: int
    h: int
    steps: np.ndarray
    stats: np.ndarray
    delta_left: np.ndarray
    delta_right: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "stat"])
        for k, s in zip(self.steps, self.stats):
            w.writerow([int(k), repr(float(s))])
        return buf.getvalue()


def window_scan(
    trace,
    h_n: int,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    tol: float = DEFAULT_TOL,
    stride: int = 1,
    pooled: bool = False,
    max_iter: int = 200,
) -> WindowScan:
    """Rolling window statistic for ``k = h_n + 1 .. n - h_n - 1``.

    ``pooled=True`` replaces the crossed ratio by the direct three-fit ratio
    against the pooled window MLE; kept for comparison only.
    """
    n = trace.n
    h_n = int(h_n)
    if h_n < 1 or h_n + 1 > n - h_n - 1:
        raise WindowTooSmall(f"window h_n={h_n} leaves no admissible k for n={n}")
    ks = np.arange(h_n + 1, n - h_n, stride, dtype=np.int64)
    vals, pre = compact_degrees(trace.pre_degrees)
    stats, dl, dr = _window_kernel(
        pre, vals, trace.seed.size, ks, h_n, float(bounds[0]), float(bounds[1]), tol, max_iter, 1 if pooled else 0
    )
    bad = int(np.isnan(stats).sum())
    if bad:
        log.warning("%d window positions had degenerate fits", bad)
    return WindowScan(n, h_n, ks, stats, dl, dr)


def local_maximizers(series: Sequence[float], h: int) -> list[int]:
    """Positions ``l`` whose value dominates every value within distance ``h``.

    Ties on a plateau resolve to the smallest position.
    """
    if h < 1:
        raise InvalidArgs("h must be >= 1")
    return local_max_indices(np.asarray(series, dtype=float), h).tolist()


def sara_detect(
    trace,
    h_n: int,
    alpha: float,
    quantiles: NullQuantileTable,
    h: int | None = None,
    holm: bool = False,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    scan: WindowScan | None = None,
) -> ChangepointReport:
    """Screening and ranking with the window statistic.

    Every ``h``-local maximizer (default ``h = h_n``) is a candidate; it is
    accepted when its statistic exceeds the ``1 - alpha`` quantile of the
    pooled local maxima of the limit process with ``s = h_n / n``.  With
    ``holm=True`` acceptance uses Holm-adjusted p-values instead.
    """
    s = h_n / trace.n
    quantiles.check(LOCAL_MAX_X, s, rtol=1e-3)
    scan = window_scan(trace, h_n, bounds) if scan is None else scan
    idx = local_maximizers(scan.stats, h_n if h is None else h)
    crit = quantiles.critical_value(alpha)
    values = scan.stats[idx]
    pvals = quantiles.p_values(values).tolist()
    adj = holm_adjust(pvals)
    tests = []
    accepted = []
    for i, v, p, pa in zip(idx, values, pvals, adj):
        k = int(scan.steps[i])
        rej = bool(pa <= alpha) if holm else bool(v > crit)
        tests.append({"step": k, "statistic": float(v), "p_value": p, "p_value_holm": pa, "reject": rej})
        if rej:
            accepted.append((k, float(v), p, pa))
    cps = [a[0] for a in accepted]
    return ChangepointReport(
        method="window",
        n=trace.n,
        changepoints=cps,
        statistics=[a[1] for a in accepted],
        p_values=[a[2] for a in accepted],
        p_values_holm=[a[3] for a in accepted],
        segment_fits=segment_fits(trace, cps, bounds),
        tests=tests,
        settings={"h_n": h_n, "s": s, "alpha": alpha, "critical_value": crit, "holm": holm},
    )


# --------------------------------------------------------------------------
# score statistic and binary segmentation


@dataclass(frozen=True, eq=False)
class ScoreScan:
    """Score statistic over a segment ``(start, end]``."""

    start: int
    end: int
    steps: np.ndarray
    stats: np.ndarray
    fit: SegmentFit

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.stats)

    def argmax(self) -> int:
        if not self.valid.any():
            raise DegenerateSegment("no valid split in the score scan")
        return int(np.nanargmax(self.stats))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "stat"])
        for m, s in zip(self.steps, self.stats):
            w.writerow([int(m), repr(float(s))])
        return buf.getvalue()


def score_scan(
    trace,
    gamma: float = 0.1,
    start: int | None = None,
    end: int | None = None,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    tol: float = DEFAULT_TOL,
    min_length: int = 50,
) -> ScoreScan:
    """Score statistic ``S_m`` for splits of the segment ``(start, end]``.

    One MLE fit on the whole segment, then prefix sums of the per-event score
    and hessian contributions at that fixed value.
    """
    if not (0.0 < gamma < 0.5):
        raise InvalidArgs(f"gamma must lie in (0, 1/2), got {gamma}")
    seed = trace.seed.size
    a = seed if start is None else int(start)
    b = trace.n if end is None else int(end)
    if not (0 <= a < b <= trace.n):
        raise InvalidArgs(f"invalid segment ({a}, {b}]")
    ev = trace.pre_degrees[trace.events_between(a, b)]
    fit = fit_segment(TransitionHistogram.from_degrees(ev), bounds, tol=tol, min_length=min_length)
    d = fit.delta_hat
    inv = 1.0 / (ev + d)
    inv2 = 1.0 / (2.0 + d)
    u = np.concatenate(([0.0], np.cumsum(inv - inv2)))
    hcum = np.concatenate(([0.0], np.cumsum(inv2 * inv2 - inv * inv)))
    length = b - a
    steps = np.arange(a + int(math.floor(length * gamma)), a + int(math.floor(length * (1 - gamma))) + 1, dtype=np.int64)
    # events with step in (a, m]
    e_a = max(a - seed, 0)
    idx = np.maximum(steps - seed, 0) - e_a
    idx = np.clip(idx, 0, ev.shape[0])
    u_l = u[idx]
    h_l = hcum[idx]
    h_r = hcum[-1] - h_l
    with np.errstate(divide="ignore", invalid="ignore"):
        stats = -u_l * u_l * (1.0 / h_l + 1.0 / h_r)
    stats = np.where((h_l != 0) & (h_r != 0) & np.isfinite(stats), stats, np.nan)
    return ScoreScan(a, b, steps, stats, fit)


@dataclass
class SegNode:
    """One test performed by binary segmentation."""

    start: int
    end: int
    sup_statistic: float = float("nan")
    p_value: float = float("nan")
    reject: bool = False
    changepoint: int | None = None
    reason: str = ""
    children: list["SegNode"] = field(default_factory=list)

    @property
    def tested(self) -> bool:
        return math.isfinite(self.sup_statistic)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def leaves(self) -> list["SegNode"]:
        return [nd for nd in self.walk() if not nd.children]

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "sup_statistic": None if not self.tested else self.sup_statistic,
            "p_value": None if not self.tested else self.p_value,
            "reject": self.reject,
            "changepoint": self.changepoint,
            "reason": self.reason,
            "children": [c.to_dict() for c in self.children],
        }


def binary_segmentation(
    trace,
    gamma: float,
    alpha: float,
    quantiles: NullQuantileTable,
    min_len: int = DEFAULT_MIN_LEN,
    holm: bool = False,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
) -> tuple[SegNode, ChangepointReport]:
    """Recursive score-test segmentation.

    A segment is split at the argmax of ``S_m`` when the sup exceeds the
    ``1 - alpha`` quantile of the sup-bridge table; both halves are then
    processed the same way.  Segments shorter than ``min_len`` steps are left
    alone.  Holm-adjusted p-values are reported over all tests performed;
    with ``holm=True`` only changepoints surviving the adjustment are kept.
    """
    if min_len < MIN_LEN_FLOOR:
        raise InvalidArgs(f"min_len must be at least {MIN_LEN_FLOOR}")
    quantiles.check(SUP_BRIDGE, gamma)
    crit = quantiles.critical_value(alpha)
    root = SegNode(trace.seed.size, trace.n)
    stack = [root]
    while stack:
        node = stack.pop()
        if node.end - node.start < min_len:
            node.reason = "too short"
            continue
        try:
            sc = score_scan(trace, gamma, node.start, node.end, bounds)
            j = sc.argmax()
        except (DegenerateSegment, SegmentTooShort) as exc:
            node.reason = f"not testable: {exc}"
            continue
        node.sup_statistic = float(sc.stats[j])
        node.p_value = quantiles.p_value(node.sup_statistic)
        node.reject = node.sup_statistic > crit
        if node.reject:
            m = int(sc.steps[j])
            node.changepoint = m
            node.children = [SegNode(node.start, m), SegNode(m, node.end)]
            stack.extend(reversed(node.children))

    tested = [nd for nd in root.walk() if nd.tested]
    adj = holm_adjust([nd.p_value for nd in tested])
    holm_of = {id(nd): a for nd, a in zip(tested, adj)}
    chosen = [nd for nd in tested if nd.reject and (not holm or holm_of[id(nd)] <= alpha)]
    chosen.sort(key=lambda nd: nd.changepoint)
    cps = [nd.changepoint for nd in chosen]
    report = ChangepointReport(
        method="score",
        n=trace.n,
        changepoints=cps,
        statistics=[nd.sup_statistic for nd in chosen],
        p_values=[nd.p_value for nd in chosen],
        p_values_holm=[holm_of[id(nd)] for nd in chosen],
        segment_fits=segment_fits(trace, cps, bounds),
        tests=[
            {
                "start": nd.start,
                "end": nd.end,
                "statistic": nd.sup_statistic,
                "p_value": nd.p_value,
                "p_value_holm": holm_of[id(nd)],
                "reject": nd.reject,
                "changepoint": nd.changepoint,
            }
            for nd in tested
        ],
        settings={"gamma": gamma, "alpha": alpha, "critical_value": crit, "min_len": min_len, "holm": holm},
    )
    return root, report
