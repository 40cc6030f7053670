"""Changepoint detection for preferential attachment networks."""

from __future__ import annotations

from .errors import *  # noqa: F401,F403
from .graph_engine import (
    AttachmentRegime,
    DegreeHistogram,
    NetworkTrace,
    SeedConvention,
    degree_histogram_at,
    simulate,
    simulate_with_uniforms,
    sliding_high_degree_proportion,
    transition_histogram,
)
from .likelihood import SegmentFit, TransitionHistogram, fit_segment, hessian, score, segment_loglik
from .metrics import rand_index
from .multi_cp import (
    ChangepointReport,
    SegNode,
    binary_segmentation,
    holm_adjust,
    local_maximizers,
    sara_detect,
    score_scan,
    window_scan,
)
from .nonparam import NO_DETECTION, NPConfig, NoDetection, np_distance, np_estimate, np_series
from .null_dist import (
    LOCAL_MAX_X,
    SUP_BRIDGE,
    NullQuantileTable,
    cache_load_or_build,
    simulate_local_max_x,
    simulate_sup_bridge,
)
from .single_cp import LRScan, ScanResult, lr_scan, lr_test

__version__ = "0.1.0"
