"""Simulation of affine preferential attachment networks with changepoints.

A network is grown one edge per step.  At step ``k`` a new node attaches to an
existing node ``v`` chosen with probability proportional to ``w(D_v(k-1))``
where ``w(d) = (d + offset) ** exponent``.  The affine model uses
``exponent == 1``; the sublinear robustness variant uses ``offset == 1`` and
``exponent == b``.

Only the attachment events (chosen node and its degree just before the
attachment) are recorded.  They are the sufficient statistic for every
likelihood computation in this package, and replaying them from the seed
reconstructs the degree sequence at any intermediate time.

Step indexing follows the usual convention that the graph at time ``k`` has
``k`` edges.  The seed graph occupies steps ``1..seed.size`` and event ``e``
(0-based) happens at step ``seed.size + 1 + e``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import InvalidFractions, InvalidOffset, NTooSmall, OutOfRange
from .likelihood import TransitionHistogram

__all__ = [
    "SeedConvention",
    "AttachmentRegime",
    "NetworkTrace",
    "DegreeHistogram",
    "simulate",
    "simulate_with_uniforms",
    "degree_histogram_at",
    "transition_histogram",
    "sliding_high_degree_proportion",
]


class SeedConvention(enum.Enum):
    """Initial graph before the first attachment event."""

    #: Two nodes joined by two parallel edges; ``G(2)`` with degrees (2, 2).
    TWO_NODES_DOUBLE_EDGE = "two_nodes_double_edge"
    #: A single node carrying a self-loop; ``G(1)`` with degree 2.
    SELF_LOOP_NODE = "self_loop_node"
    #: No seed at all.  Used for traces built from observed edgelists.
    EMPTY = "empty"

    @property
    def size(self) -> int:
        """Number of edges (equivalently steps) in the seed graph."""
        return {"two_nodes_double_edge": 2, "self_loop_node": 1, "empty": 0}[self.value]

    @property
    def degrees(self) -> np.ndarray:
        return {
            "two_nodes_double_edge": np.array([2, 2], dtype=np.int64),
            "self_loop_node": np.array([2], dtype=np.int64),
            "empty": np.zeros(0, dtype=np.int64),
        }[self.value]

    @classmethod
    def parse(cls, value: "str | SeedConvention") -> "SeedConvention":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"two": "two_nodes_double_edge", "self_loop": "self_loop_node", "selfloop": "self_loop_node"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class AttachmentRegime:
    """Piecewise-constant attachment function.

    Regime ``r`` has weight ``w_r(d) = (d + offsets[r]) ** exponents[r]`` and is
    active for steps ``floor(n * change_fractions[r-1]) < k <= floor(n *
    change_fractions[r])``.
    """

    change_fractions: tuple[float, ...] = ()
    offsets: tuple[float, ...] = (0.0,)
    exponents: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "change_fractions", tuple(float(t) for t in self.change_fractions))
        object.__setattr__(self, "offsets", tuple(float(d) for d in self.offsets))
        exps = self.exponents
        if exps is None:
            exps = (1.0,) * len(self.offsets)
        object.__setattr__(self, "exponents", tuple(float(b) for b in exps))

        fr = self.change_fractions
        if any(not (0.0 < t < 1.0) for t in fr) or any(b <= a for a, b in zip(fr, fr[1:])):
            raise InvalidFractions(f"change fractions must be strictly increasing in (0, 1), got {fr}")
        if len(self.offsets) != len(fr) + 1:
            raise InvalidFractions(
                f"need {len(fr) + 1} offsets for {len(fr)} changepoints, got {len(self.offsets)}"
            )
        if len(self.exponents) != len(self.offsets):
            raise InvalidFractions("exponents and offsets must have the same length")
        for d in self.offsets:
            if not d > -1.0 or not math.isfinite(d):
                raise InvalidOffset(f"offset must exceed -1, got {d}")
        for b in self.exponents:
            if not (0.0 < b <= 1.0):
                raise InvalidOffset(f"attachment exponent must lie in (0, 1], got {b}")

    @classmethod
    def constant(cls, delta: float) -> "AttachmentRegime":
        return cls((), (delta,))

    @classmethod
    def single(cls, t_star: float, delta1: float, delta2: float) -> "AttachmentRegime":
        return cls((t_star,), (delta1, delta2))

    @classmethod
    def sublinear(cls, t_star: float, b: float) -> "AttachmentRegime":
        """Linear ``d + 1`` attachment switching to ``(d + 1) ** b`` at ``t_star``."""
        return cls((t_star,), (1.0, 1.0), (1.0, b))

    @classmethod
    def parse(cls, text: str) -> "AttachmentRegime":
        """Parse ``"0.6:0,0.5"`` (fractions before the colon, offsets after).

        A bare ``"1.0"`` is a constant regime.  An optional ``"^1,0.5"`` suffix
        gives the exponents.
        """
        text = text.strip()
        exps = None
        if "^" in text:
            text, exp_txt = text.split("^", 1)
            exps = tuple(float(x) for x in exp_txt.split(","))
        if ":" in text:
            fr_txt, off_txt = text.split(":", 1)
            fr = tuple(float(x) for x in fr_txt.split(",") if x.strip())
        else:
            fr, off_txt = (), text
        offs = tuple(float(x) for x in off_txt.split(","))
        return cls(fr, offs, exps)

    @property
    def is_affine(self) -> bool:
        return all(b == 1.0 for b in self.exponents)

    def switch_steps(self, n: int) -> list[int]:
        """Last step of each regime but the final one, ``floor(n * t_j)``."""
        return [int(math.floor(n * t)) for t in self.change_fractions]

    def offset_at_step(self, k: int, n: int) -> tuple[float, float]:
        """(offset, exponent) in force when step ``k`` is generated."""
        r = sum(1 for s in self.switch_steps(n) if k > s)
        return self.offsets[r], self.exponents[r]

    def to_dict(self) -> dict:
        return {
            "change_fractions": list(self.change_fractions),
            "offsets": list(self.offsets),
            "exponents": list(self.exponents),
        }

    def __str__(self) -> str:
        s = ",".join(repr(t) for t in self.change_fractions) + ":" + ",".join(repr(d) for d in self.offsets)
        if not self.is_affine:
            s += "^" + ",".join(repr(b) for b in self.exponents)
        return s


@dataclass(frozen=True, eq=False)
class NetworkTrace:
    """Recorded attachment events of a growing network.

    ``nodes[e]`` is the node chosen at event ``e`` and ``pre_degrees[e]`` its
    degree just before the attachment.  ``sources[e]`` is the node that brings
    the new edge; for simulated traces it is always a newly born node.
    """

    n: int
    seed: SeedConvention
    nodes: np.ndarray
    pre_degrees: np.ndarray
    sources: np.ndarray
    final_degrees: np.ndarray
    regime: AttachmentRegime | None = None
    timestamps: np.ndarray | None = None
    node_labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        for name in ("nodes", "pre_degrees", "sources", "final_degrees"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.n_events != self.n - self.seed.size:
            raise ValueError("event count inconsistent with n and seed size")

    @property
    def n_events(self) -> int:
        return int(self.pre_degrees.shape[0])

    @property
    def seed_size(self) -> int:
        return self.seed.size

    def event_index(self, step: int) -> int:
        """0-based event index of step ``step``."""
        return step - self.seed.size - 1

    def step_of(self, event: int) -> int:
        return event + self.seed.size + 1

    def events_between(self, s: int, t: int) -> slice:
        """Slice of events with step in ``(s, t]``."""
        lo = max(s, self.seed.size) - self.seed.size
        hi = max(t, self.seed.size) - self.seed.size
        return slice(lo, hi)

    def replay_degrees(self, k: int | None = None) -> np.ndarray:
        """Degrees of all nodes at step ``k`` (0 for nodes not yet present)."""
        k = self.n if k is None else k
        if not (self.seed.size <= k <= self.n):
            raise OutOfRange(f"step {k} outside [{self.seed.size}, {self.n}]")
        n_nodes = self.final_degrees.shape[0]
        return _replay(self.nodes, self.sources, self.seed.degrees, n_nodes, k - self.seed.size)

    def __len__(self) -> int:
        return self.n_events


@dataclass(frozen=True)
class DegreeHistogram:
    """Degree counts ``N_i`` of the graph at step ``total_steps``."""

    counts: np.ndarray
    total_nodes: int
    total_steps: int

    def n_eq(self, i: int) -> int:
        return int(self.counts[i]) if 0 <= i < self.counts.shape[0] else 0

    def n_gt(self, i: int) -> int:
        return int(self.counts[i + 1 :].sum()) if i + 1 < self.counts.shape[0] else 0

    def tail_counts(self) -> np.ndarray:
        """``N_{>i}`` for ``i = 0 .. max_degree``."""
        c = self.counts
        return (c.sum() - np.cumsum(c)).astype(np.int64)

    @property
    def degree_sum(self) -> int:
        return int(np.dot(np.arange(self.counts.shape[0]), self.counts))

    def proportions(self, i_max: int) -> np.ndarray:
        """``N_i / k`` for ``i = 1 .. i_max``."""
        out = np.zeros(i_max, dtype=float)
        m = min(i_max, self.counts.shape[0] - 1)
        out[:m] = self.counts[1 : m + 1] / self.total_steps
        return out


# --------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _fenwick_build(tree, weights, count):
    size = tree.shape[0] - 1
    for i in range(1, size + 1):
        tree[i] = 0.0
    for i in range(1, size + 1):
        if i <= count:
            tree[i] += weights[i - 1]
        j = i + (i & -i)
        if j <= size:
            tree[j] += tree[i]


@njit(cache=True)
def _fenwick_add(tree, idx, delta):
    size = tree.shape[0] - 1
    i = idx + 1
    while i <= size:
        tree[i] += delta
        i += i & -i


@njit(cache=True)
def _fenwick_find(tree, target, top):
    # smallest 0-based index whose inclusive prefix sum exceeds target
    size = tree.shape[0] - 1
    pos = 0
    step = top
    rem = target
    while step > 0:
        nxt = pos + step
        if nxt <= size and tree[nxt] <= rem:
            pos = nxt
            rem -= tree[nxt]
        step >>= 1
    return pos


@njit(cache=True)
def _weight(d, off, ex):
    if ex == 1.0:
        return d + off
    return (d + off) ** ex


@njit(cache=True)
def _simulate_kernel(seed_degrees, n_events, switch_events, offsets, exponents, uniforms):
    n_seed = seed_degrees.shape[0]
    cap = n_seed + n_events
    if cap == 0:
        cap = 1
    deg = np.zeros(cap, dtype=np.int64)
    weights = np.zeros(cap, dtype=np.float64)
    tree = np.zeros(cap + 1, dtype=np.float64)
    top = 1
    while top * 2 <= cap:
        top *= 2

    nodes = np.empty(n_events, dtype=np.int64)
    pre = np.empty(n_events, dtype=np.int64)

    alive = n_seed
    regime = 0
    while regime < switch_events.shape[0] and switch_events[regime] <= 0:
        regime += 1
    off = offsets[regime]
    ex = exponents[regime]
    for v in range(n_seed):
        deg[v] = seed_degrees[v]
        weights[v] = _weight(deg[v], off, ex)
    _fenwick_build(tree, weights, alive)
    total = 0.0
    for v in range(alive):
        total += weights[v]

    for e in range(n_events):
        switched = False
        while regime < switch_events.shape[0] and switch_events[regime] <= e:
            regime += 1
            switched = True
        if switched:
            off = offsets[regime]
            ex = exponents[regime]
            total = 0.0
            for v in range(alive):
                weights[v] = _weight(deg[v], off, ex)
                total += weights[v]
            _fenwick_build(tree, weights, alive)

        v = _fenwick_find(tree, uniforms[e] * total, top)
        if v >= alive:
            v = alive - 1
        d = deg[v]
        nodes[e] = v
        pre[e] = d
        w_new = _weight(d + 1, off, ex)
        _fenwick_add(tree, v, w_new - weights[v])
        total += w_new - weights[v]
        weights[v] = w_new
        deg[v] = d + 1

        w1 = _weight(1, off, ex)
        weights[alive] = w1
        deg[alive] = 1
        _fenwick_add(tree, alive, w1)
        total += w1
        alive += 1
    return nodes, pre, deg[: n_seed + n_events]


@njit(cache=True)
def _replay(nodes, sources, seed_degrees, n_nodes, n_events):
    deg = np.zeros(n_nodes, dtype=np.int64)
    for v in range(seed_degrees.shape[0]):
        deg[v] = seed_degrees[v]
    for e in range(n_events):
        v = nodes[e]
        if deg[v] == 0:
            # unseen target enters with degree 1 (node-birth convention)
            deg[v] = 1
        deg[v] += 1
        deg[sources[e]] += 1
    return deg


# --------------------------------------------------------------------------


def simulate_with_uniforms(
    n: int,
    regime: AttachmentRegime,
    seed: SeedConvention | str,
    uniforms: np.ndarray,
) -> NetworkTrace:
    """Simulate using an explicit stream of uniforms, one per attachment event.

    The generator in :func:`simulate` draws exactly this stream from PCG64, so
    any externally produced sequence (for example a counting stream in tests)
    reproduces the sampler step by step.
    """
    seed = SeedConvention.parse(seed)
    if seed is SeedConvention.EMPTY:
        raise ValueError("simulation requires a non-empty seed graph")
    if n < seed.size:
        raise NTooSmall(f"n={n} smaller than seed size {seed.size}")
    n_events = n - seed.size
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if uniforms.shape[0] < n_events:
        raise ValueError(f"need {n_events} uniforms, got {uniforms.shape[0]}")
    # event index at which regime r+1 takes over: step floor(n t) + 1
    switch_events = np.array([s - seed.size for s in regime.switch_steps(n)], dtype=np.int64)
    nodes, pre, deg = _simulate_kernel(
        seed.degrees,
        n_events,
        switch_events,
        np.array(regime.offsets, dtype=np.float64),
        np.array(regime.exponents, dtype=np.float64),
        uniforms[:n_events],
    )
    n_seed = seed.degrees.shape[0]
    sources = np.arange(n_seed, n_seed + n_events, dtype=np.int64)
    return NetworkTrace(n=n, seed=seed, nodes=nodes, pre_degrees=pre, sources=sources, final_degrees=deg, regime=regime)


def simulate(
    n: int,
    regime: AttachmentRegime,
    seed: SeedConvention | str = SeedConvention.SELF_LOOP_NODE,
    rng_seed: int | np.random.SeedSequence | None = 0,
) -> NetworkTrace:
    """Grow a network to ``n`` edges under ``regime``.

    Parameters
    ----------
    n : int
        Total number of edges (steps) including the seed.
    regime : AttachmentRegime
        Offsets, exponents and changepoint fractions.
    seed : SeedConvention
        Initial graph.  Defaults to a single node with a self-loop.
    rng_seed : int or SeedSequence
        Seed for a PCG64 generator; one uniform is consumed per event.
    """
    seed = SeedConvention.parse(seed)
    if n < seed.size:
        raise NTooSmall(f"n={n} smaller than seed size {seed.size}")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    uniforms = rng.random(n - seed.size)
    return simulate_with_uniforms(n, regime, seed, uniforms)


def degree_histogram_at(trace: NetworkTrace, k: int) -> DegreeHistogram:
    """Exact degree counts of ``G(k)`` by replaying the first events."""
    deg = trace.replay_degrees(k)
    present = deg[deg > 0]
    counts = np.bincount(present, minlength=2).astype(np.int64)
    return DegreeHistogram(counts=counts, total_nodes=int(present.shape[0]), total_steps=int(k))


def transition_histogram(trace: NetworkTrace, s_idx: int, t_idx: int) -> TransitionHistogram:
    """Counts of pre-attachment degrees over steps ``(s_idx, t_idx]``."""
    if not (trace.seed.size <= s_idx < t_idx <= trace.n):
        raise OutOfRange(f"need {trace.seed.size} <= s < t <= {trace.n}, got ({s_idx}, {t_idx}]")
    return TransitionHistogram.from_degrees(trace.pre_degrees[trace.events_between(s_idx, t_idx)])


def sliding_high_degree_proportion(
    trace: NetworkTrace, degree_threshold: int = 100, window: int = 200
) -> tuple[np.ndarray, np.ndarray]:
    """Share of attachment events hitting nodes of degree above a threshold.

    For every event step ``k`` the share is taken over the events with steps in
    ``[k - window/2, k + window/2]``, truncated at both ends of the trace.

    Returns
    -------
    steps, proportions : ndarray
    """
    if window < 1 or window % 2:
        raise OutOfRange(f"window must be a positive even integer, got {window}")
    if degree_threshold < 1:
        raise OutOfRange(f"threshold must be >= 1, got {degree_threshold}")
    m = trace.n_events
    steps = np.arange(trace.seed.size + 1, trace.n + 1, dtype=np.int64)
    if m == 0:
        return steps, np.zeros(0)
    hits = np.concatenate(([0], np.cumsum(trace.pre_degrees > degree_threshold)))
    half = window // 2
    idx = np.arange(m)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, m - 1) + 1
    return steps, (hits[hi] - hits[lo]) / (hi - lo)
