"""Monte-Carlo null distributions of the changepoint scan statistics.

Two limiting functionals are tabulated:

``sup_bridge``
    ``sup_{gamma <= t <= 1-gamma} B(t)^2 / (t (1 - t))`` for a Brownian bridge
    ``B``; the null law of both the likelihood-ratio and the score scan.
``local_max_x``
    values of ``X(t) = (2/s) (W(t+s) + W(t-s) - 2 W(t))^2`` at its s-local
    maximizers, pooled over paths; the null law of every window-scan peak.

Both are simulated on a uniform grid, so the sup is biased slightly low.
Tables are cached on disk keyed by a hash of their settings.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._peaks import local_max_indices
from .errors import CacheCorrupt, InvalidArgs, QuantileTableMismatch

__all__ = [
    "NullQuantileTable",
    "simulate_sup_bridge",
    "simulate_local_max_x",
    "cache_load_or_build",
    "default_cache_dir",
    "SUP_BRIDGE",
    "LOCAL_MAX_X",
]

log = logging.getLogger(__name__)

SUP_BRIDGE = "sup_bridge"
LOCAL_MAX_X = "local_max_x"
CACHE_VERSION = 1
CACHE_ENV = "PACHANGE_CACHE_DIR"


@dataclass(frozen=True, eq=False)
class NullQuantileTable:
    """Sorted Monte-Carlo sample of a limiting null functional."""

    law: str
    param: float
    sample: np.ndarray
    settings: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        s = np.sort(np.asarray(self.sample, dtype=float))
        s.setflags(write=False)
        object.__setattr__(self, "sample", s)

    def quantile(self, level: float) -> float:
        """Linear interpolation between order statistics."""
        if not (0.0 <= level <= 1.0):
            raise InvalidArgs(f"quantile level must lie in [0, 1], got {level}")
        return float(np.quantile(self.sample, level))

    def critical_value(self, alpha: float) -> float:
        return self.quantile(1.0 - alpha)

    def p_value(self, x: float) -> float:
        """``(1 + #{sample >= x}) / (N + 1)``."""
        n = self.sample.shape[0]
        ge = n - int(np.searchsorted(self.sample, x, side="left"))
        return (1 + ge) / (n + 1)

    def p_values(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        n = self.sample.shape[0]
        ge = n - np.searchsorted(self.sample, xs, side="left")
        return (1 + ge) / (n + 1)

    def check(self, law: str, param: float, rtol: float = 1e-9) -> None:
        """Raise unless the table was built for ``law`` at ``param``."""
        if self.law != law or abs(self.param - param) > rtol * max(1.0, abs(param)):
            raise QuantileTableMismatch(
                f"table is {self.law}({self.param}) but {law}({param}) is required"
            )

    @property
    def cache_key(self) -> str:
        return settings_key(self.law, self.param, self.settings)


def settings_key(law: str, param: float, settings: dict) -> str:
    payload = json.dumps(
        {"law": law, "param": float(param), "version": CACHE_VERSION, **{k: settings[k] for k in sorted(settings)}},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _check_common(paths: int, grid_points: int) -> None:
    if paths < 1000:
        raise InvalidArgs(f"need at least 1000 paths, got {paths}")
    if grid_points < 1000:
        raise InvalidArgs(f"need at least 1000 grid points, got {grid_points}")


def _brownian_chunk(rng: np.random.Generator, n_paths: int, grid_points: int) -> np.ndarray:
    """Brownian motion on ``j / G``, ``j = 0..G``; shape ``(n_paths, G + 1)``."""
    w = np.empty((n_paths, grid_points + 1))
    w[:, 0] = 0.0
    z = rng.standard_normal((n_paths, grid_points))
    z *= 1.0 / np.sqrt(grid_points)
    np.cumsum(z, axis=1, out=w[:, 1:])
    return w


def bridge_paths(rng: np.random.Generator, n_paths: int, grid_points: int) -> np.ndarray:
    """Brownian bridge ``W(t) - t W(1)`` on the grid; endpoint is exactly zero."""
    w = _brownian_chunk(rng, n_paths, grid_points)
    t = np.arange(grid_points + 1) / grid_points
    b = w - t * w[:, -1:]
    b[:, -1] = 0.0
    return b


def simulate_sup_bridge(
    gamma: float,
    paths: int = 10_000,
    grid_points: int = 5000,
    rng_seed: int = 0,
    chunk: int = 500,
) -> NullQuantileTable:
    """Sample ``sup B^2(t) / (t(1-t))`` over grid points in ``[gamma, 1-gamma]``."""
    if not (0.0 < gamma < 0.5):
        raise InvalidArgs(f"gamma must lie in (0, 1/2), got {gamma}")
    _check_common(paths, grid_points)
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    t = np.arange(grid_points + 1) / grid_points
    keep = (t >= gamma - 1e-12) & (t <= 1 - gamma + 1e-12)
    scale = 1.0 / (t[keep] * (1 - t[keep]))
    out = np.empty(paths)
    done = 0
    while done < paths:
        c = min(chunk, paths - done)
        b = bridge_paths(rng, c, grid_points)[:, keep]
        out[done : done + c] = np.max(b * b * scale, axis=1)
        done += c
    return NullQuantileTable(
        SUP_BRIDGE, float(gamma), out, {"paths": paths, "grid_points": grid_points, "rng_seed": rng_seed}
    )


def local_max_x_values(w: np.ndarray, s: float, grid_points: int) -> np.ndarray:
    """Pooled s-local maxima of ``X`` for a batch of Brownian paths."""
    h = int(round(s * grid_points))
    x = (2.0 / s) * (w[:, 2 * h :] + w[:, : -2 * h] - 2.0 * w[:, h:-h]) ** 2
    vals = []
    for row in x:
        vals.append(row[local_max_indices(row, h)])
    return np.concatenate(vals) if vals else np.zeros(0)


def simulate_local_max_x(
    s: float,
    paths: int = 10_000,
    grid_points: int = 5000,
    rng_seed: int = 0,
    chunk: int = 500,
) -> NullQuantileTable:
    """Sample the values of ``X`` at its s-local maximizers on ``[s, 1-s]``."""
    if not (0.0 < s < 0.5):
        raise InvalidArgs(f"s must lie in (0, 1/2), got {s}")
    _check_common(paths, grid_points)
    if int(round(s * grid_points)) < 1:
        raise InvalidArgs("grid too coarse for the window")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    parts = []
    done = 0
    while done < paths:
        c = min(chunk, paths - done)
        parts.append(local_max_x_values(_brownian_chunk(rng, c, grid_points), s, grid_points))
        done += c
    return NullQuantileTable(
        LOCAL_MAX_X, float(s), np.concatenate(parts), {"paths": paths, "grid_points": grid_points, "rng_seed": rng_seed}
    )


_BUILDERS = {SUP_BRIDGE: simulate_sup_bridge, LOCAL_MAX_X: simulate_local_max_x}


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "pachange"))


def _checksum(sample: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(sample, dtype="<f8").tobytes()).hexdigest()


def save_table(table: NullQuantileTable, path: Path) -> None:
    header = {
        "version": CACHE_VERSION,
        "law": table.law,
        "param": table.param,
        **table.settings,
        "n": int(table.sample.shape[0]),
        "checksum": _checksum(table.sample),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), sample=table.sample.astype("<f8"))
    os.replace(tmp, path)


def load_table(path: Path) -> NullQuantileTable:
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            sample = np.array(z["sample"], dtype=float)
    except Exception as exc:  # truncated or garbled archive
        raise CacheCorrupt(f"unreadable cache file {path}: {exc}") from exc
    if header.get("version") != CACHE_VERSION or _checksum(sample) != header.get("checksum"):
        raise CacheCorrupt(f"checksum mismatch in {path}")
    settings = {k: header[k] for k in ("paths", "grid_points", "rng_seed")}
    return NullQuantileTable(header["law"], float(header["param"]), sample, settings)


def cache_path(law: str, param: float, settings: dict, cache_dir: Path) -> Path:
    key = settings_key(law, param, settings)
    return Path(cache_dir) / f"{law}_{param:g}_{key[:16]}.npz"


def cache_load_or_build(
    law: str,
    param: float,
    paths: int = 10_000,
    grid_points: int = 5000,
    rng_seed: int = 0,
    cache_dir: str | Path | None = None,
) -> NullQuantileTable:
    """Load a cached table with matching settings, or simulate and store one."""
    if law not in _BUILDERS:
        raise InvalidArgs(f"unknown law {law!r}")
    cache_dir = default_cache_dir() if cache_dir is None else Path(cache_dir)
    settings = {"paths": paths, "grid_points": grid_points, "rng_seed": rng_seed}
    path = cache_path(law, param, settings, cache_dir)
    if path.exists():
        try:
            table = load_table(path)
            log.debug("loaded null table %s", path)
            return table
        except CacheCorrupt as exc:
            log.warning("%s; rebuilding", exc)
    log.info("simulating %s(%g) with %d paths on %d grid points", law, param, paths, grid_points)
    table = _BUILDERS[law](param, paths=paths, grid_points=grid_points, rng_seed=rng_seed)
    save_table(table, path)
    return table
