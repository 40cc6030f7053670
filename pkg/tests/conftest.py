from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from pachange.null_dist import LOCAL_MAX_X, SUP_BRIDGE, cache_load_or_build

REPO = Path(__file__).resolve().parents[1]
CACHE_DIR = Path(os.environ.get("PACHANGE_CACHE_DIR", REPO / ".pachange_cache"))

TABLE_PATHS = 100_000
TABLE_GRID = 5000


@pytest.fixture(scope="session")
def cache_dir() -> Path:
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    return CACHE_DIR


@pytest.fixture(scope="session")
def bridge_table(cache_dir):
    """sup B^2/(t(1-t)) on [0.1, 0.9]."""
    return cache_load_or_build(SUP_BRIDGE, 0.1, paths=TABLE_PATHS, grid_points=TABLE_GRID, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def local_max_table(cache_dir):
    """Pooled 0.1-local maxima of X."""
    return cache_load_or_build(LOCAL_MAX_X, 0.1, paths=TABLE_PATHS, grid_points=TABLE_GRID, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def null_sup_samples():
    """sup LR and sup S over [0.1, 0.9] for 200 PA(1) traces with n = 5e4."""
    from pachange.graph_engine import AttachmentRegime, simulate
    from pachange.multi_cp import score_scan
    from pachange.single_cp import lr_scan

    seqs = np.random.SeedSequence(20240501).spawn(200)
    lr, sc = [], []
    for seq in seqs:
        tr = simulate(50_000, AttachmentRegime.constant(1.0), rng_seed=seq)
        lr.append(lr_scan(tr, 0.1).sup_statistic)
        s = score_scan(tr, 0.1)
        sc.append(float(s.stats[s.argmax()]))
    return np.array(lr), np.array(sc)
