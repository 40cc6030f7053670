"""Limit laws of preferential attachment degree sequences.

Everything here is a deterministic numerical evaluation of known limits:

* the stationary degree law of PA(delta) and its tail,
* linear birth processes with immigration (negative binomial marginals),
* the limiting degree law after a changepoint, built from the two above,
* Fisher information and limiting score functions, with and without a
  changepoint.

The functions double as oracles for the simulation and estimation code.
Gamma ratios are always formed through ``gammaln`` differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import InvalidArgs, InvalidOffset, QuadratureFailed, TruncationNotConverged

__all__ = [
    "limit_pmf",
    "limit_tail",
    "BIParams",
    "bi_pmf",
    "bi_tail",
    "CPLimitParams",
    "cp_limit_pmf",
    "cp_limit_tail",
    "cp_limit_arrays",
    "recur_identity_residual",
    "fisher_info",
    "limit_score",
    "cp_fisher",
    "cp_limit_score",
    "adaptive_simpson",
]


def _check_offset(delta: float) -> None:
    if not delta > -1.0:
        raise InvalidOffset(f"offset must exceed -1, got {delta}")


def _log_limit_tail(i, delta):
    return gammaln(3 + 2 * delta) + gammaln(i + 1 + delta) - gammaln(1 + delta) - gammaln(i + 3 + 2 * delta)


def limit_pmf(i, delta: float):
    """Stationary probability that a node has degree ``i`` under PA(delta).

    ``(2+d) G(3+2d) G(i+d) / (G(1+d) G(i+3+2d))``; accepts array ``i``.
    """
    _check_offset(delta)
    i = np.asarray(i, dtype=float)
    if np.any(i < 1):
        raise InvalidArgs("degree must be >= 1")
    out = np.exp(
        math.log(2 + delta) + gammaln(3 + 2 * delta) + gammaln(i + delta) - gammaln(1 + delta) - gammaln(i + 3 + 2 * delta)
    )
    return float(out) if out.ndim == 0 else out


def limit_tail(i, delta: float):
    """Stationary probability that a node has degree greater than ``i``."""
    _check_offset(delta)
    i = np.asarray(i, dtype=float)
    if np.any(i < 0):
        raise InvalidArgs("degree must be >= 0")
    out = np.exp(_log_limit_tail(i, delta))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# birth processes with immigration


@dataclass(frozen=True)
class BIParams:
    """Birth process started from ``initial_count`` with immigration rate.

    The jump rate out of state ``j`` is ``j + immigration``.  Negative
    immigration is allowed as long as every rate stays positive, which the
    changepoint law needs for ``2 * delta2`` with ``delta2 < 0``.
    """

    initial_count: int
    immigration: float
    t: float

    def __post_init__(self) -> None:
        if int(self.initial_count) != self.initial_count or self.initial_count < 1:
            raise InvalidArgs(f"initial count must be a positive integer, got {self.initial_count}")
        if not self.initial_count + self.immigration > 0:
            raise InvalidArgs("initial_count + immigration must be positive")
        if not self.t >= 0:
            raise InvalidArgs(f"elapsed time must be >= 0, got {self.t}")


def _bi_log_pmf(i, theta, t, j):
    """Vectorised log P(xi^i_theta(t) = j) for ``t > 0`` and ``j >= i``."""
    k = j - i
    return (
        gammaln(j + theta)
        - gammaln(k + 1)
        - gammaln(i + theta)
        - (i + theta) * t
        + k * math.log(-math.expm1(-t))
    )


def bi_pmf(params: BIParams, j) -> float:
    """``P(xi(t) = j)``: negative binomial with ``i + theta`` successes, ``p = e^-t``."""
    i, theta, t = params.initial_count, params.immigration, params.t
    j = np.asarray(j)
    if t == 0.0:
        out = (j == i).astype(float)
    else:
        jj = np.maximum(j, i).astype(float)
        out = np.where(j >= i, np.exp(_bi_log_pmf(i, theta, t, jj)), 0.0)
    return float(out) if out.ndim == 0 else out


def bi_tail(params: BIParams, j: int) -> float:
    """``P(xi(t) > j)`` as one minus the finite pmf sum over ``i..j``."""
    i = params.initial_count
    if j < i:
        return 1.0
    if params.t == 0.0:
        return 0.0
    terms = bi_pmf(params, np.arange(i, j + 1))
    return max(0.0, 1.0 - math.fsum(np.atleast_1d(terms)))


# --------------------------------------------------------------------------
# degree law after a changepoint


@dataclass(frozen=True)
class CPLimitParams:
    """Parameters of the limiting degree law of PA(t*; delta1, delta2) at time t."""

    t_star: float
    delta1: float
    delta2: float
    t: float = 1.0
    i_max: int = 2000
    tol: float = 1e-9

    def __post_init__(self) -> None:
        if not (0.0 < self.t_star < 1.0):
            raise InvalidArgs(f"t_star must lie in (0, 1), got {self.t_star}")
        _check_offset(self.delta1)
        _check_offset(self.delta2)
        if not (self.t_star <= self.t <= 1.0):
            raise InvalidArgs(f"t must lie in [t_star, 1], got {self.t}")
        if self.tol <= 0 or self.i_max < 16:
            raise InvalidArgs("need tol > 0 and i_max >= 16")

    @property
    def tau(self) -> float:
        """Embedding time elapsed since the changepoint."""
        return math.log(self.t / self.t_star) / (2.0 + self.delta2)

    @property
    def weight(self) -> float:
        """Share of nodes born before the changepoint, ``t*/t``."""
        return self.t_star / self.t

    def at(self, t: float) -> "CPLimitParams":
        return replace(self, t=t)


def cp_limit_pmf(params: CPLimitParams, i: int) -> float:
    """Limiting proportion of degree-``i`` nodes at time ``t`` after a change.

    ``p_i(d2) P(xi^3_{2 d2}(tau) > i + 2) + (t*/t) sum_{j<=i} p_j(d1) P(xi^j_{d2}(tau) = i)``
    """
    if i < 1:
        raise InvalidArgs("degree must be >= 1")
    d1, d2, tau, w = params.delta1, params.delta2, params.tau, params.weight
    young = limit_pmf(i, d2) * bi_tail(BIParams(3, 2 * d2, tau), i + 2)
    js = np.arange(1, i + 1)
    old = math.fsum(np.atleast_1d(limit_pmf(js, d1) * _bi_pmf_many(js, d2, tau, i)))
    return young + w * old


def cp_limit_tail(params: CPLimitParams, i: int) -> float:
    """Limiting proportion of nodes with degree above ``i`` after a change."""
    if i < 1:
        raise InvalidArgs("degree must be >= 1")
    d1, d2, tau, w = params.delta1, params.delta2, params.tau, params.weight
    first = limit_tail(i, d2) * bi_tail(BIParams(3, 2 * d2, tau), i + 2)
    second = bi_tail(BIParams(1, d2, tau), i)
    mixed = math.fsum(limit_pmf(j, d1) * bi_tail(BIParams(j, d2, tau), i) for j in range(1, i + 1))
    return first - w * second + w * mixed + w * limit_tail(i, d1)


def _bi_pmf_many(js: np.ndarray, theta: float, t: float, target: int) -> np.ndarray:
    """``P(xi^j_theta(t) = target)`` for a vector of starting counts ``j``."""
    js = np.asarray(js, dtype=float)
    if t == 0.0:
        return (js == target).astype(float)
    return np.where(js <= target, np.exp(_bi_log_pmf(js, theta, t, float(target))), 0.0)


def cp_limit_arrays(params: CPLimitParams, i_max: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(pmf, tail)`` of the changepoint law for degrees ``1 .. i_max``.

    Builds all terms in O(i_max^2) vectorised work.  The tail of the pre-change
    component is taken as one minus the running sum of its pmf.
    """
    i_max = params.i_max if i_max is None else i_max
    d1, d2, tau, w = params.delta1, params.delta2, params.tau, params.weight
    i = np.arange(1, i_max + 1)

    # young nodes: survival of xi^3_{2 d2} beyond i + 2, and of xi^1_{d2} beyond i
    if tau == 0.0:
        a = np.zeros(i_max)
        b = np.zeros(i_max)
        r = limit_pmf(i, d1)
    else:
        j3 = np.arange(3, i_max + 3, dtype=float)
        a = np.maximum(0.0, 1.0 - np.cumsum(np.exp(_bi_log_pmf(3, 2 * d2, tau, j3))))
        b = np.maximum(0.0, 1.0 - np.cumsum(np.exp(_bi_log_pmf(1, d2, tau, i.astype(float)))))
        p1 = limit_pmf(i, d1)
        log_q = math.log(-math.expm1(-tau))
        r = np.empty(i_max)
        lg_j = gammaln(i + d2)
        for m in range(1, i_max + 1):
            js = i[:m]
            lp = gammaln(m + d2) - gammaln(m - js + 1) - lg_j[:m] - (js + d2) * tau + (m - js) * log_q
            r[m - 1] = np.dot(p1[:m], np.exp(lp))
    q = np.maximum(0.0, 1.0 - np.cumsum(r))
    pmf = limit_pmf(i, d2) * a + w * r
    tail = limit_tail(i, d2) * a - w * b + w * q
    return pmf, tail


# --------------------------------------------------------------------------
# quadrature


def adaptive_simpson(
    f: Callable[[float], float], a: float, b: float, tol: float = 1e-9, max_depth: int = 40
) -> float:
    """Adaptive Simpson rule with Richardson correction."""
    if a == b:
        return 0.0

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        diff = left + right - whole
        if abs(diff) <= 15 * tol:
            return left + right + diff / 15.0
        if depth <= 0:
            raise QuadratureFailed(f"no convergence on [{a}, {b}]")
        return recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1) + recurse(m, b, fm, frm, fb, right, tol / 2, depth - 1)

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def recur_identity_residual(params: CPLimitParams, s: float, t: float, i: int, tol: float = 1e-9) -> float:
    """LHS minus RHS of the integral identity linking the pmf and tail.

    ``(i+d2)/(2+d2) int_s^t p*_i(u) du  -  (t p*_{>i}(t) - s p*_{>i}(s))``
    """
    if not (params.t_star <= s <= t <= 1.0):
        raise InvalidArgs("need t_star <= s <= t <= 1")
    if s == t:
        return 0.0
    integral = adaptive_simpson(lambda u: cp_limit_pmf(params.at(u), i), s, t, tol=tol)
    lhs = (i + params.delta2) / (2 + params.delta2) * integral
    rhs = t * cp_limit_tail(params.at(t), i) - s * cp_limit_tail(params.at(s), i)
    return lhs - rhs


# --------------------------------------------------------------------------
# information and limiting scores


_STATIONARY_CUT = 20000


def _stationary_sum(lam: float, delta: float, power: int, cut: int = _STATIONARY_CUT) -> tuple[float, float]:
    """``sum_{i>=1} p_{>i}(delta) / (i + lam)^power`` and an error estimate.

    Direct summation to ``cut`` plus the midpoint Euler-Maclaurin tail
    ``int_{cut+1/2}^inf f + f'(cut+1/2)/24`` of the smooth extension.
    """
    i = np.arange(1, cut + 1, dtype=float)
    head = math.fsum(np.exp(_log_limit_tail(i, delta)) / (i + lam) ** power)

    def f(x):
        return math.exp(_log_limit_tail(x, delta)) / (x + lam) ** power

    x0 = cut + 0.5
    integral, err = integrate.quad(f, x0, np.inf, epsabs=1e-16, epsrel=1e-12, limit=200)
    h = 1e-3 * x0
    fprime = (f(x0 + h) - f(x0 - h)) / (2 * h)
    tail = integral + fprime / 24.0
    return head + tail, abs(fprime) / 24.0 * 1e-2 + err


def _check_lambda(lam: float) -> None:
    if not lam > -1.0:
        raise InvalidOffset(f"lambda must exceed -1, got {lam}")


def fisher_info(lam: float, delta: float, tol: float = 1e-10) -> float:
    """``I(lam; delta) = sum_i p_{>i}(delta)/(i+lam)^2 - 1/(2+lam)^2``."""
    _check_offset(delta)
    _check_lambda(lam)
    total, err = _stationary_sum(lam, delta, 2)
    if err > tol:
        raise TruncationNotConverged(f"tail error {err:.3g} exceeds {tol:.3g}")
    return total - 1.0 / (2.0 + lam) ** 2


def limit_score(lam: float, delta: float, tol: float = 1e-10) -> float:
    """``U(lam; delta) = sum_i p_{>i}(delta)/(i+lam) - 1/(2+lam)``."""
    _check_offset(delta)
    _check_lambda(lam)
    total, err = _stationary_sum(lam, delta, 1)
    if err > tol:
        raise TruncationNotConverged(f"tail error {err:.3g} exceeds {tol:.3g}")
    return total - 1.0 / (2.0 + lam)


def _power_tail_sum(tail: np.ndarray, lam: float, power: int, cut: int) -> float:
    """``sum_{i<=cut} g_i/(i+lam)^p`` plus a power-law extrapolation past ``cut``.

    The decay exponent is read off ``g`` at ``cut/2`` and ``cut``.
    """
    g = tail[:cut]
    i = np.arange(1, cut + 1, dtype=float)
    head = math.fsum(g / (i + lam) ** power)
    g_hi, g_mid = g[cut - 1], g[cut // 2 - 1]
    if g_hi <= 0.0 or g_mid <= 0.0:
        return head
    a = math.log(g_mid / g_hi) / math.log(cut / (cut // 2))
    c = g_hi * cut**a
    integral, _ = integrate.quad(lambda x: c * x**-a / (x + lam) ** power, cut + 0.5, np.inf, epsabs=1e-16, epsrel=1e-12)
    return head + integral


def _cp_sum(params: CPLimitParams, lam: float, power: int) -> float:
    _check_lambda(lam)
    _, tail = cp_limit_arrays(params)
    full = _power_tail_sum(tail, lam, power, params.i_max)
    half = _power_tail_sum(tail, lam, power, params.i_max // 2)
    if abs(full - half) > params.tol * max(1.0, abs(full)) * 1e3:
        raise TruncationNotConverged(
            f"changepoint series not converged: {full!r} vs {half!r} at i_max={params.i_max}"
        )
    return full


def cp_fisher(params: CPLimitParams, lam: float) -> float:
    """``I*_t(lam) = t (sum_i p*_{>i}(t)/(i+lam)^2 - 1/(2+lam)^2)``."""
    return params.t * (_cp_sum(params, lam, 2) - 1.0 / (2.0 + lam) ** 2)


def cp_limit_score(params: CPLimitParams, lam: float) -> float:
    """``U*_t(lam) = t (sum_i p*_{>i}(t)/(i+lam) - 1/(2+lam))``."""
    return params.t * (_cp_sum(params, lam, 1) - 1.0 / (2.0 + lam))
