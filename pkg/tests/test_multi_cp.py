from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pachange.errors import InvalidArgs, InvalidP, QuantileTableMismatch, WindowTooSmall
from pachange.graph_engine import AttachmentRegime, simulate, transition_histogram
from pachange.likelihood import fit_segment, hessian, score, segment_loglik
from pachange.metrics import rand_index
from pachange.multi_cp import (
    binary_segmentation,
    holm_adjust,
    local_maximizers,
    sara_detect,
    score_scan,
    window_scan,
)
from pachange.null_dist import NullQuantileTable, SUP_BRIDGE


def brute_maximizers(x, h):
    out = []
    for l in range(len(x)):
        lo, hi = max(0, l - h), min(len(x), l + h + 1)
        if all(x[l] >= x[k] for k in range(lo, hi)) and all(x[l] > x[k] for k in range(lo, l)):
            out.append(l)
    return out


@pytest.fixture(scope="module")
def three_seg():
    return simulate(100_000, AttachmentRegime.parse("0.2,0.5:1,1.5,1.0"), rng_seed=41)


@pytest.fixture(scope="module")
def trace_1e4():
    return simulate(10_000, AttachmentRegime.single(0.5, 0.0, 1.0), rng_seed=42)


class TestHolm:
    def test_single(self):
        assert holm_adjust([0.03]) == [0.03]

    def test_example(self):
        assert holm_adjust([0.01, 0.02, 0.20]) == pytest.approx([0.03, 0.04, 0.20])

    def test_order_restored(self):
        assert holm_adjust([0.20, 0.01, 0.02]) == pytest.approx([0.20, 0.03, 0.04])

    def test_capped(self):
        assert holm_adjust([0.6, 0.7]) == [1.0, 1.0]

    @pytest.mark.parametrize("bad", [[-0.1], [1.2], [float("nan")]])
    def test_invalid(self, bad):
        with pytest.raises(InvalidP):
            holm_adjust(bad)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
    def test_monotone(self, ps):
        adj = holm_adjust(ps)
        assert all(a >= p for a, p in zip(adj, ps))
        order = np.argsort(ps, kind="stable")
        assert np.all(np.diff(np.asarray(adj)[order]) >= 0)
        assert all(a <= 1 for a in adj)


class TestLocalMaximizers:
    def test_increasing(self):
        assert local_maximizers(np.arange(20.0), 3) == [19]

    def test_constant(self):
        assert local_maximizers(np.ones(15), 4) == [0]

    def test_two_peaks(self):
        h = 5
        x = -np.abs(np.arange(60) - 30.0) - 10
        x[10], x[10 + 3 * h] = 4.0, 3.0
        x[10 + 1 : 10 + 3 * h] = -1.0
        assert local_maximizers(x, h) == [10, 25]

    def test_nan_never_qualifies(self):
        x = np.array([np.nan, 1.0, 0.0, np.nan])
        assert local_maximizers(x, 1) == [1]

    def test_bad_h(self):
        with pytest.raises(InvalidArgs):
            local_maximizers([1.0, 2.0], 0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 6), min_size=1, max_size=80), st.integers(1, 12))
    def test_brute_force(self, xs, h):
        x = np.array(xs, dtype=float)
        assert local_maximizers(x, h) == brute_maximizers(x, h)


class TestWindowScan:
    def test_range_and_sign(self, trace_1e4):
        ws = window_scan(trace_1e4, 1000)
        assert ws.steps[0] == 1001 and ws.steps[-1] == 10_000 - 1000 - 1
        assert np.all(ws.stats[np.isfinite(ws.stats)] >= 0)

    def test_equals_recomputation(self, trace_1e4):
        tr, h = trace_1e4, 1000
        ws = window_scan(tr, h)
        for j in range(0, ws.steps.size, 1):
            k = int(ws.steps[j])
            hl = transition_histogram(tr, k - h, k)
            hr = transition_histogram(tr, k, k + h)
            fl, fr = fit_segment(hl, min_length=1), fit_segment(hr, min_length=1)
            crossed = 2 * (
                segment_loglik(hl, 0, fl.delta_hat)
                - segment_loglik(hl, 0, fr.delta_hat)
                + segment_loglik(hr, 0, fr.delta_hat)
                - segment_loglik(hr, 0, fl.delta_hat)
            )
            assert ws.stats[j] == pytest.approx(max(crossed, 0.0), rel=1e-6, abs=1e-7)

    def test_pooled_variant(self, trace_1e4):
        tr, h = trace_1e4, 800
        ws = window_scan(tr, h, stride=500, pooled=True)
        for j, k in enumerate(ws.steps.tolist()):
            hl, hr = transition_histogram(tr, k - h, k), transition_histogram(tr, k, k + h)
            fl, fr, fw = (fit_segment(x, min_length=1) for x in (hl, hr, hl + hr))
            expected = 2 * (fl.loglik + fr.loglik - fw.loglik)
            assert ws.stats[j] == pytest.approx(expected, rel=1e-6, abs=1e-7)

    def test_window_too_small(self, trace_1e4):
        with pytest.raises(WindowTooSmall):
            window_scan(trace_1e4, 5000)

    def test_two_peaks(self, three_seg):
        ws = window_scan(three_seg, 10_000)
        top = sorted(local_maximizers(ws.stats, 10_000), key=lambda i: -ws.stats[i])[:2]
        peaks = sorted(int(ws.steps[i]) for i in top)
        assert abs(peaks[0] - 20_000) < 3000 and abs(peaks[1] - 50_000) < 3000

    def test_csv(self, trace_1e4):
        text = window_scan(trace_1e4, 1000, stride=4000).to_csv()
        assert text.splitlines()[0] == "k,stat"


class TestSaRa:
    def test_detects(self, three_seg, local_max_table):
        rep = sara_detect(three_seg, 10_000, 0.05, local_max_table)
        assert rep.method == "window"
        assert rand_index([0.2, 0.5], rep.fractions, three_seg.n) >= 0.9
        assert len(rep.segment_fits) == rep.n_changepoints + 1
        assert all(t["p_value_holm"] >= t["p_value"] for t in rep.tests)

    def test_holm_subset(self, three_seg, local_max_table):
        raw = sara_detect(three_seg, 10_000, 0.05, local_max_table)
        adj = sara_detect(three_seg, 10_000, 0.05, local_max_table, holm=True)
        assert set(adj.changepoints) <= set(raw.changepoints)
        assert all(p <= 0.05 for p in adj.p_values_holm)

    def test_table_mismatch(self, trace_1e4, local_max_table):
        with pytest.raises(QuantileTableMismatch):
            sara_detect(trace_1e4, 2000, 0.05, local_max_table)


class TestScoreScan:
    def test_direct_evaluation(self, trace_1e4):
        tr = trace_1e4
        sc = score_scan(tr, 0.1)
        d = sc.fit.delta_hat
        for j in range(0, sc.steps.size, 97):
            m = int(sc.steps[j])
            hl = transition_histogram(tr, tr.seed.size, m)
            hr = transition_histogram(tr, m, tr.n)
            u = score(hl, d)
            expected = -u * u * (1 / hessian(hl, d) + 1 / hessian(hr, d))
            assert sc.stats[j] == pytest.approx(expected, rel=1e-10, abs=1e-10)

    def test_nonnegative(self, trace_1e4):
        sc = score_scan(trace_1e4, 0.1)
        assert np.all(sc.stats[sc.valid] >= -1e-12)

    def test_subsegment(self, trace_1e4):
        sc = score_scan(trace_1e4, 0.2, start=2000, end=7000)
        assert sc.steps[0] == 3000 and sc.steps[-1] == 6000
        assert sc.fit.step_count == 5000

    def test_bad_args(self, trace_1e4):
        with pytest.raises(InvalidArgs):
            score_scan(trace_1e4, 0.0)
        with pytest.raises(InvalidArgs):
            score_scan(trace_1e4, 0.1, start=5000, end=4000)

    def test_speed(self, three_seg):
        import time

        t0 = time.perf_counter()
        score_scan(three_seg, 0.1)
        assert time.perf_counter() - t0 < 2.0

    @pytest.mark.slow
    def test_same_null_law_as_lr(self, null_sup_samples):
        lr, sc = null_sup_samples
        q_lr, q_sc = np.quantile(lr, 0.95), np.quantile(sc, 0.95)
        assert abs(q_sc / q_lr - 1) < 0.15


class TestBinarySegmentation:
    def test_null_single_node(self, bridge_table):
        tr = simulate(20_000, AttachmentRegime.constant(1.0), rng_seed=3)
        root, rep = binary_segmentation(tr, 0.1, 0.05, bridge_table)
        assert rep.changepoints == [] and root.children == []
        assert len(rep.tests) == 1

    def test_two_changes(self, bridge_table):
        tr = simulate(100_000, AttachmentRegime.parse("0.2,0.5:1,1.5,1.2"), rng_seed=44)
        root, rep = binary_segmentation(tr, 0.1, 0.05, bridge_table)
        assert rand_index([0.2, 0.5], rep.fractions, tr.n) >= 0.9
        for node in root.walk():
            if node.children:
                a, b = node.children
                assert (a.start, a.end, b.start, b.end) == (node.start, node.changepoint, node.changepoint, node.end)
            else:
                assert not node.reject or node.end - node.start < 1000
        again = binary_segmentation(tr, 0.1, 0.05, bridge_table)[1]
        assert again.to_dict() == rep.to_dict()

    def test_holm_over_all_tests(self, bridge_table, three_seg):
        _, rep = binary_segmentation(three_seg, 0.1, 0.05, bridge_table)
        raw = [t["p_value"] for t in rep.tests]
        assert [t["p_value_holm"] for t in rep.tests] == pytest.approx(holm_adjust(raw))

    def test_min_len_floor(self, bridge_table, trace_1e4):
        with pytest.raises(InvalidArgs):
            binary_segmentation(trace_1e4, 0.1, 0.05, bridge_table, min_len=10)

    def test_short_segments_are_leaves(self, bridge_table, three_seg):
        root, _ = binary_segmentation(three_seg, 0.1, 0.05, bridge_table, min_len=60_000)
        for node in root.walk():
            if node.end - node.start < 60_000:
                assert node.reason == "too short" and not node.tested

    def test_table_mismatch(self, trace_1e4):
        with pytest.raises(QuantileTableMismatch):
            binary_segmentation(trace_1e4, 0.2, 0.05, NullQuantileTable(SUP_BRIDGE, 0.1, np.ones(3)))
