"""Nonparametric changepoint estimate from drift of the empirical degree law.

With ``h_n = log log n`` and ``b_n = n^(1/log log n)`` the estimate is

    T_n = inf{ t >= 1/h_n : sum_i 2^-i |N_(i+1)(nt)/(nt) - N_(i+1)(n/h_n)/(n/h_n)| > 1/b_n },

the first time the geometric-weighted distance to the reference law at time
``1/h_n`` exceeds ``1/b_n``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidArgs, OutOfRange

__all__ = [
    "NPConfig",
    "NoDetection",
    "NO_DETECTION",
    "NPSeries",
    "np_distance",
    "np_series",
    "np_estimate",
]

log = logging.getLogger(__name__)

DEFAULT_MAX_DEGREE = 64


class NoDetection:
    """The threshold was never crossed; the infimum is empty."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NO_DETECTION"

    def __bool__(self) -> bool:
        return False


NO_DETECTION = NoDetection()


@dataclass(frozen=True)
class NPConfig:
    """Tuning of the estimate; ``None`` selects the default for the trace's ``n``.

    ``max_degree`` is the number of tracked terms: degrees ``1 .. max_degree``.
    """

    h_n: float | None = None
    b_n: float | None = None
    max_degree: int = DEFAULT_MAX_DEGREE
    stride: int = 1

    def resolve(self, n: int) -> tuple[float, float]:
        if n < 16:
            raise InvalidArgs(f"n={n} too small for the default tuning")
        llog = math.log(math.log(n))
        h = llog if self.h_n is None else float(self.h_n)
        b = n ** (1.0 / llog) if self.b_n is None else float(self.b_n)
        if not h > 1.0:
            raise InvalidArgs(f"h_n must exceed 1 so that 1/h_n < 1, got {h}")
        if not b > 0.0:
            raise InvalidArgs(f"b_n must be positive, got {b}")
        if h >= n or b >= n:
            log.warning("h_n=%g, b_n=%g not small relative to n=%d", h, b, n)
        if self.max_degree < 1 or self.stride < 1:
            raise InvalidArgs("max_degree and stride must be >= 1")
        return h, b


@njit(cache=True)
def _sweep(nodes, sources, seed_degrees, n_nodes, n_seed, ks, k_ref, x_ref, max_deg):
    """Distance at each step in ``ks`` (sorted, all >= k_ref) to the law at ``k_ref``."""
    deg = np.zeros(n_nodes, dtype=np.int64)
    cnt = np.zeros(max_deg + 2, dtype=np.int64)
    top = max_deg + 1
    for v in range(seed_degrees.shape[0]):
        d = seed_degrees[v]
        deg[v] = d
        cnt[min(d, top)] += 1
    ref = np.zeros(max_deg + 2)
    out = np.empty(ks.shape[0])
    e = 0
    k = n_seed
    j = 0
    have_ref = False
    while True:
        if not have_ref and k == k_ref:
            for i in range(max_deg + 2):
                ref[i] = cnt[i] / x_ref
            have_ref = True
        while have_ref and j < ks.shape[0] and ks[j] == k:
            acc = 0.0
            w = 1.0
            for i in range(max_deg):
                acc += w * abs(cnt[i + 1] / k - ref[i + 1])
                w *= 0.5
            out[j] = acc
            j += 1
        if j >= ks.shape[0] or e >= nodes.shape[0]:
            break
        v = nodes[e]
        d = deg[v]
        if d == 0:
            d = 1
        else:
            cnt[min(d, top)] -= 1
        deg[v] = d + 1
        cnt[min(d + 1, top)] += 1
        u = sources[e]
        d = deg[u]
        if d > 0:
            cnt[min(d, top)] -= 1
        deg[u] = d + 1
        cnt[min(d + 1, top)] += 1
        e += 1
        k += 1
    return out


def _check_step(trace, k: int) -> None:
    if not (max(trace.seed.size, 1) <= k <= trace.n):
        raise OutOfRange(f"step {k} outside [{max(trace.seed.size, 1)}, {trace.n}]")


def _distances(trace, ks: np.ndarray, k_ref: int, x_ref: float, max_degree: int) -> np.ndarray:
    ks = np.ascontiguousarray(ks, dtype=np.int64)
    return _sweep(
        trace.nodes,
        trace.sources,
        trace.seed.degrees,
        trace.final_degrees.shape[0],
        trace.seed.size,
        ks,
        int(k_ref),
        float(x_ref),
        int(max_degree),
    )


def np_distance(trace, t: float, t_ref: float, max_degree: int = DEFAULT_MAX_DEGREE) -> float:
    """Geometric-weighted l1 distance between degree laws at fractions ``t`` and ``t_ref``.

    Counts at step ``floor(n t)`` are normalized by ``n t``.
    """
    n = trace.n
    if not (0.0 < t <= 1.0 and 0.0 < t_ref <= 1.0):
        raise OutOfRange("fractions must lie in (0, 1]")
    k, k_ref = _step_of(n, t), _step_of(n, t_ref)
    _check_step(trace, k)
    _check_step(trace, k_ref)
    return _direct_distance(trace, k, n * t, k_ref, n * t_ref, max_degree)


def _step_of(n: int, t: float) -> int:
    # absorb rounding so that t = k / n maps back to k
    return int(math.floor(n * t + 1e-9 * max(1.0, n * t)))


def _direct_distance(trace, k, x, k_ref, x_ref, max_degree) -> float:
    a = _law(trace, k, x, max_degree)
    b = _law(trace, k_ref, x_ref, max_degree)
    w = 0.5 ** np.arange(max_degree)
    return float(np.dot(w, np.abs(a - b)))


def _law(trace, k, x, max_degree) -> np.ndarray:
    deg = trace.replay_degrees(k)
    c = np.bincount(deg[deg > 0], minlength=max_degree + 1)[1 : max_degree + 1]
    return c / x


@dataclass(frozen=True, eq=False)
class NPSeries:
    """Distance series against the reference time, with the threshold."""

    n: int
    steps: np.ndarray
    distance: np.ndarray
    threshold: float
    h_n: float
    b_n: float

    @property
    def t(self) -> np.ndarray:
        return self.steps / self.n

    def first_crossing(self) -> float | NoDetection:
        hit = np.flatnonzero(self.distance > self.threshold)
        if hit.size == 0:
            return NO_DETECTION
        return float(self.steps[hit[0]]) / self.n

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "distance", "threshold"])
        for t, d in zip(self.t, self.distance):
            w.writerow([repr(float(t)), repr(float(d)), repr(self.threshold)])
        return buf.getvalue()


def np_series(trace, config: NPConfig = NPConfig()) -> NPSeries:
    """Distance at every scanned step ``k >= n/h_n`` to the law at ``floor(n/h_n)``."""
    n = trace.n
    h, b = config.resolve(n)
    x_ref = n / h
    k_ref = int(math.floor(x_ref))
    _check_step(trace, k_ref)
    k0 = max(int(math.ceil(x_ref)), k_ref)
    ks = np.arange(k0, n + 1, config.stride, dtype=np.int64)
    dist = _distances(trace, ks, k_ref, x_ref, config.max_degree)
    return NPSeries(n=n, steps=ks, distance=dist, threshold=1.0 / b, h_n=h, b_n=b)


def np_estimate(trace, config: NPConfig = NPConfig()) -> float | NoDetection:
    """First scanned fraction where the distance exceeds ``1/b_n``, else ``NO_DETECTION``."""
    return np_series(trace, config).first_crossing()
