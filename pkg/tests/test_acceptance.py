"""Acceptance criteria, each printing one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or as part of the full suite;
the lines are written straight to the terminal either way.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from pachange.experiments import ExperimentSpec, run_experiment
from pachange.graph_engine import AttachmentRegime, degree_histogram_at, simulate
from pachange.multi_cp import score_scan, window_scan
from pachange.null_dist import LOCAL_MAX_X, SUP_BRIDGE
from pachange.single_cp import lr_scan
from pachange.theory import (
    CPLimitParams,
    cp_fisher,
    cp_limit_pmf,
    fisher_info,
    limit_pmf,
    limit_score,
    limit_tail,
    recur_identity_residual,
)

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def _report(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {detail}")
        assert ok, detail

    return _report


@pytest.fixture(scope="module")
def tables(bridge_table, local_max_table):
    return {SUP_BRIDGE: bridge_table, LOCAL_MAX_X: local_max_table}


def degree_shares(trace, i_max=20):
    h = degree_histogram_at(trace, trace.n)
    return np.array([h.n_eq(i) for i in range(1, i_max + 1)]) / trace.n


def test_01_degree_law(report):
    simulate(1000, AttachmentRegime.constant(0.0), rng_seed=0)  # compile outside the timing
    worst, slowest = 0.0, 0.0
    for k, delta in enumerate((-0.5, 0.0, 1.0)):
        t0 = time.perf_counter()
        tr = simulate(100_000, AttachmentRegime.constant(delta), rng_seed=1000 + k)
        slowest = max(slowest, time.perf_counter() - t0)
        ref = limit_pmf(np.arange(1, 21), delta)
        worst = max(worst, float(np.max(np.abs(degree_shares(tr) - ref))))
    ok = worst < 0.01 and slowest < 5.0
    report(1, "degree law", ok, f"max error {worst:.4f} (< 0.01), slowest network {slowest:.2f}s (< 5s)")


def test_02_changepoint_degree_law(report):
    tr = simulate(100_000, AttachmentRegime.single(0.5, 0.0, 1.0), rng_seed=2000)
    p = CPLimitParams(0.5, 0.0, 1.0, t=1.0)
    ref = np.array([cp_limit_pmf(p, i) for i in range(1, 21)])
    err = float(np.max(np.abs(degree_shares(tr) - ref)))
    report(2, "changepoint degree law", err < 0.015, f"max error {err:.4f} (< 0.015)")


def test_03_analytic_identities(report):
    i = np.arange(1, 1001)
    eq4 = max(
        float(np.max(np.abs(limit_tail(i, d) - (i + d) * limit_pmf(i, d) / (2 + d)))) for d in (-0.5, 0.0, 1.0, 2.0)
    )
    lemma2 = max(
        abs(recur_identity_residual(CPLimitParams(0.5, d1, d2), 0.6, 0.9, k))
        for d1, d2 in ((0.0, 1.0), (2.0, 0.0))
        for k in (1, 2, 5)
    )
    fisher = abs(fisher_info(0.0, 0.0) - (math.pi**2 / 6 - 1.5))
    score0 = max(abs(limit_score(d, d)) for d in (-0.5, 0.0, 1.0))
    ok = eq4 < 1e-12 and lemma2 < 1e-6 and fisher < 1e-8 and score0 < 1e-8
    report(
        3,
        "analytic identities",
        ok,
        f"tail identity {eq4:.1e}, integral identity {lemma2:.1e}, I(0;0) {fisher:.1e}, U(d;d) {score0:.1e}",
    )


def test_04_null_rejection(report, tables, null_sup_samples):
    spec = ExperimentSpec(n=50_000, replicates=200, regime="0.0", methods=("lr",), rng_seed=4000)
    rate0 = run_experiment(spec, tables).summary["lr"]["rejection"]["rate"]
    lr, _ = null_sup_samples  # 200 PA(1) replicates at n = 5e4
    rate1 = float(np.mean(lr > tables[SUP_BRIDGE].critical_value(0.05)))
    ok = all(0.01 <= r <= 0.10 for r in (rate0, rate1))
    report(4, "null rejection", ok, f"delta=0: {rate0:.3f}, delta=1: {rate1:.3f} (in [0.01, 0.10])")


def test_05_power(report, tables):
    rates = {}
    for k, d2 in enumerate((0.2, -0.2)):
        spec = ExperimentSpec(
            n=50_000, replicates=100, regime=f"0.6:0,{d2}", scenario="single-cp", methods=("lr",), rng_seed=5000 + k
        )
        rates[d2] = run_experiment(spec, tables).summary["lr"]["rejection"]["rate"]
    ok = all(r >= 0.95 for r in rates.values())
    report(5, "power", ok, ", ".join(f"delta2={d:+.1f}: {r:.2f}" for d, r in rates.items()) + " (>= 0.95)")


def test_06_location_affine(report, tables):
    spec = ExperimentSpec(
        n=100_000, replicates=100, regime="0.6:0,0.3", scenario="single-cp", methods=("lr", "nonparam"), rng_seed=6000
    )
    s = run_experiment(spec, tables).summary
    lr, npm = s["lr"]["mae_t_hat"], s["nonparam"]["mae_t_hat"]
    ok = lr <= 0.01 and 0.04 <= npm <= 0.20
    report(6, "location, affine", ok, f"MAE lr {lr:.4f} (<= 0.01), nonparametric {npm:.4f} (in [0.04, 0.20])")


def test_07_location_sublinear(report, tables):
    spec = ExperimentSpec(
        n=100_000,
        replicates=100,
        regime="0.6:1,1^1,0.5",
        scenario="sublinear",
        methods=("lr", "nonparam"),
        rng_seed=7000,
    )
    s = run_experiment(spec, tables).summary
    lr, npm = s["lr"]["mae_t_hat"], s["nonparam"]["mae_t_hat"]
    ok = lr <= 0.005 and npm <= 0.10
    report(7, "location, sublinear", ok, f"MAE lr {lr:.4f} (<= 0.005), nonparametric {npm:.4f} (<= 0.10)")


def test_08_null_positive_rates(report, tables):
    parts = []
    ok = True
    for k, delta in enumerate((-0.5, 0.0, 1.0, 2.0)):
        spec = ExperimentSpec(
            n=100_000, replicates=200, regime=str(delta), methods=("window", "score"), s=0.1, rng_seed=8000 + k
        )
        s = run_experiment(spec, tables).summary
        w, sc = s["window"]["positive_rate"], s["score"]["positive_rate"]
        ok &= 0.02 <= w <= 0.09 and 0.02 <= sc <= 0.09
        parts.append(f"delta={delta:g}: window {w:.3f}, score {sc:.3f}")
    report(8, "null positive rates", ok, "; ".join(parts) + " (in [0.02, 0.09])")


def test_09_multiple_changepoints(report, tables):
    score = run_experiment(
        ExperimentSpec(
            n=100_000, replicates=100, regime="0.2,0.5:1,1.5,1.2", scenario="multi-cp", methods=("score",), rng_seed=9000
        ),
        tables,
    ).summary["score"]
    window = run_experiment(
        ExperimentSpec(
            n=100_000,
            replicates=100,
            regime="0.2,0.5:1,1.5,1.0",
            scenario="multi-cp",
            methods=("window",),
            s=0.1,
            rng_seed=9001,
        ),
        tables,
    ).summary["window"]
    two_s = score["n_changepoints"].get("2", 0) / 100
    two_w = window["n_changepoints"].get("2", 0) / 100
    ok = two_s >= 0.85 and score["mean_rand"] >= 0.90 and two_w >= 0.80 and window["mean_rand"] >= 0.92
    report(
        9,
        "multiple changepoints",
        ok,
        f"score: two found {two_s:.2f} (>= 0.85), Rand {score['mean_rand']:.3f} (>= 0.90); "
        f"window: two found {two_w:.2f} (>= 0.80), Rand {window['mean_rand']:.3f} (>= 0.92)",
    )


def test_10_variance_ordering(report, tables):
    t_star, reps = 0.8, 1000
    parts = []
    ok = True
    for k, (d1, d2) in enumerate(((0.0, 1.0), (2.0, 0.0))):
        p = CPLimitParams(t_star, d1, d2)
        gain = cp_fisher(p.at(1.0), d2) - cp_fisher(p.at(t_star), d2)
        bench = (1 - t_star) * fisher_info(d2, d2)
        cp = ExperimentSpec(
            n=100_000, replicates=reps, regime=f"{t_star}:{d1},{d2}", scenario="single-cp",
            methods=("fit",), fit_from=t_star, rng_seed=10_000 + 2 * k,
        )
        st = ExperimentSpec(
            n=100_000, replicates=reps, regime=str(d2), methods=("fit",), fit_from=t_star, rng_seed=10_001 + 2 * k
        )
        v_cp = run_experiment(cp, tables).summary["fit"]["var"]
        v_st = run_experiment(st, tables).summary["fit"]["var"]
        lower_to_higher = d1 < d2
        numeric_ok = (gain > bench) if lower_to_higher else (gain < bench)
        empirical_ok = (v_cp < v_st) if lower_to_higher else (v_cp > v_st)
        ok &= numeric_ok and empirical_ok
        parts.append(
            f"({d1:g},{d2:g}): information {gain:.4f} vs {bench:.4f}, variance {v_cp:.3e} vs {v_st:.3e} "
            f"(ratio {v_cp / v_st:.2f}, theory {bench / gain:.2f})"
        )
    report(10, "variance ordering", ok, "; ".join(parts))


def test_11_null_cross_check(report, tables, null_sup_samples):
    table = tables[SUP_BRIDGE]
    lo, hi = table.quantile(0.90), table.quantile(0.99)
    lr, sc = null_sup_samples
    q_lr, q_sc = float(np.quantile(lr, 0.95)), float(np.quantile(sc, 0.95))
    ok = lo <= q_lr <= hi and lo <= q_sc <= hi
    report(11, "null cross-check", ok, f"95th pct sup-LR {q_lr:.3f}, sup-S {q_sc:.3f}, band [{lo:.3f}, {hi:.3f}]")


def test_12_performance(report):
    warm = simulate(5000, AttachmentRegime.constant(1.0), rng_seed=0)
    lr_scan(warm, 0.1, stride=1)
    score_scan(warm, 0.1)
    window_scan(warm, 1000)
    tr = simulate(100_000, AttachmentRegime.parse("0.2,0.5:1,1.5,1.0"), rng_seed=12_000)
    timings = {}
    for name, fn in (
        ("lr", lambda: lr_scan(tr, 0.1, stride=1)),
        ("score", lambda: score_scan(tr, 0.1)),
        ("window", lambda: window_scan(tr, 10_000)),
    ):
        t0 = time.perf_counter()
        fn()
        timings[name] = time.perf_counter() - t0
    ok = timings["lr"] < 60 and timings["score"] < 2 and timings["window"] < 60
    report(
        12,
        "performance",
        ok,
        f"lr {timings['lr']:.2f}s (< 60s), score {timings['score']:.3f}s (< 2s), window {timings['window']:.2f}s (< 60s)",
    )
