"""Replicated simulation experiments with table-style summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgs
from .graph_engine import AttachmentRegime, SeedConvention, simulate, transition_histogram
from .likelihood import fit_segment
from .metrics import rand_index
from .multi_cp import binary_segmentation, sara_detect, window_scan
from .nonparam import NO_DETECTION, NPConfig, np_estimate
from .null_dist import LOCAL_MAX_X, SUP_BRIDGE, NullQuantileTable, cache_load_or_build
from .single_cp import lr_test

__all__ = ["ExperimentSpec", "ExperimentResult", "run_experiment", "load_spec", "METHODS", "SCENARIOS"]

log = logging.getLogger(__name__)

METHODS = ("lr", "score", "window", "nonparam", "fit")
SCENARIOS = ("null", "single-cp", "multi-cp", "sublinear")

ROW_COLUMNS = (
    "replicate",
    "lr_sup",
    "lr_p_value",
    "lr_reject",
    "lr_t_hat",
    "score_root_sup",
    "score_root_reject",
    "score_n_tests",
    "score_n_rejecting",
    "score_n_cps",
    "score_cps",
    "score_rand",
    "window_n_maximizers",
    "window_n_rejecting",
    "window_n_cps",
    "window_cps",
    "window_rand",
    "np_t_hat",
    "fit_delta_hat",
    "fit_information",
    "error",
)


@dataclass
class ExperimentSpec:
    """One replicated simulation study.

    ``regime`` uses the ``"fractions:offsets[^exponents]"`` syntax of
    :meth:`AttachmentRegime.parse`.  ``s`` fixes the window ``h_n = floor(n s)``.
    The ``fit`` method estimates the offset on ``(floor(n * fit_from), n]``.
    """

    n: int
    replicates: int
    regime: str
    methods: tuple[str, ...] = ("lr",)
    scenario: str = "null"
    name: str = "experiment"
    gamma: float = 0.1
    alpha: float = 0.05
    s: float = 0.1
    min_len: int = 1000
    holm: bool = False
    seed: str = "SELF_LOOP_NODE"
    rng_seed: int = 0
    fit_from: float | None = None
    null_paths: int = 10_000
    null_grid: int = 5000
    null_seed: int = 0
    cache_dir: str | None = None
    workers: int = 1
    output: str | None = None

    def __post_init__(self) -> None:
        self.methods = tuple(self.methods)
        if self.replicates < 1:
            raise InvalidArgs("replicates must be >= 1")
        if self.scenario not in SCENARIOS:
            raise InvalidArgs(f"scenario must be one of {SCENARIOS}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InvalidArgs(f"unknown methods {bad}; choose from {METHODS}")
        reg = self.parsed_regime
        k = len(reg.change_fractions)
        expected = {"null": k == 0, "single-cp": k == 1, "multi-cp": k >= 2, "sublinear": not reg.is_affine}
        if not expected[self.scenario]:
            raise InvalidArgs(f"regime {self.regime!r} does not fit scenario {self.scenario!r}")
        if not (0 < self.gamma < 0.5 and 0 < self.alpha < 1 and 0 < self.s < 0.5):
            raise InvalidArgs("gamma and s must lie in (0, 1/2), alpha in (0, 1)")
        SeedConvention.parse(self.seed)

    @property
    def parsed_regime(self) -> AttachmentRegime:
        return AttachmentRegime.parse(self.regime)

    @property
    def true_changepoints(self) -> list[float]:
        return list(self.parsed_regime.change_fractions)

    @property
    def h_n(self) -> int:
        return int(math.floor(self.n * self.s))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgs(f"unknown spec keys {sorted(unknown)}")
        return cls(**d)


def load_spec(path: str | Path) -> ExperimentSpec:
    """Read a spec from YAML or JSON."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        import yaml

        data = yaml.safe_load(text)
    return ExperimentSpec.from_dict(data)


def _tables(spec: ExperimentSpec) -> dict[str, NullQuantileTable]:
    out = {}
    common = dict(paths=spec.null_paths, grid_points=spec.null_grid, rng_seed=spec.null_seed, cache_dir=spec.cache_dir)
    if {"lr", "score"} & set(spec.methods):
        out[SUP_BRIDGE] = cache_load_or_build(SUP_BRIDGE, spec.gamma, **common)
    if "window" in spec.methods:
        out[LOCAL_MAX_X] = cache_load_or_build(LOCAL_MAX_X, spec.h_n / spec.n, **common)
    return out


def _join(values: Sequence[int]) -> str:
    return ";".join(str(int(v)) for v in values)


def _replicate(spec: ExperimentSpec, idx: int, seq: np.random.SeedSequence, tables: dict) -> dict:
    row: dict = {"replicate": idx}
    try:
        trace = simulate(spec.n, spec.parsed_regime, spec.seed, rng_seed=seq)
        truth = spec.true_changepoints
        if "lr" in spec.methods:
            r = lr_test(trace, spec.gamma, spec.alpha, tables[SUP_BRIDGE])
            row.update(lr_sup=r.sup_statistic, lr_p_value=r.p_value, lr_reject=r.reject, lr_t_hat=r.t_hat)
        if "score" in spec.methods:
            root, rep = binary_segmentation(
                trace, spec.gamma, spec.alpha, tables[SUP_BRIDGE], min_len=spec.min_len, holm=spec.holm
            )
            cps = rep.changepoints
            row.update(
                score_root_sup=root.sup_statistic,
                score_root_reject=root.reject,
                score_n_tests=len(rep.tests),
                score_n_rejecting=sum(bool(t["reject"]) for t in rep.tests),
                score_n_cps=len(cps),
                score_cps=_join(cps),
                score_rand=rand_index(truth, [c / spec.n for c in cps], spec.n),
            )
        if "window" in spec.methods:
            scan = window_scan(trace, spec.h_n)
            rep = sara_detect(trace, spec.h_n, spec.alpha, tables[LOCAL_MAX_X], holm=spec.holm, scan=scan)
            cps = rep.changepoints
            row.update(
                window_n_maximizers=len(rep.tests),
                window_n_rejecting=sum(t["statistic"] > rep.settings["critical_value"] for t in rep.tests),
                window_n_cps=len(cps),
                window_cps=_join(cps),
                window_rand=rand_index(truth, [c / spec.n for c in cps], spec.n),
            )
        if "nonparam" in spec.methods:
            est = np_estimate(trace, NPConfig())
            row["np_t_hat"] = math.nan if est is NO_DETECTION else est
        if "fit" in spec.methods:
            start = trace.seed.size
            frac = spec.fit_from if spec.fit_from is not None else (truth[0] if truth else None)
            if frac is not None:
                start = max(start, int(math.floor(spec.n * frac)))
            f = fit_segment(transition_histogram(trace, start, spec.n), min_length=1)
            row.update(fit_delta_hat=f.delta_hat, fit_information=f.observed_information)
    except Exception as exc:  # noqa: BLE001 - recorded, not fatal
        log.warning("replicate %d failed: %s", idx, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _worker(args):
    return _replicate(*args)


def _bernoulli(x: np.ndarray) -> dict:
    k = x.size
    p = float(x.mean()) if k else math.nan
    return {"rate": p, "se": math.sqrt(p * (1 - p) / k) if k else math.nan, "count": int(x.sum()), "of": k}


def _hist(counts: Sequence[int]) -> dict[str, int]:
    vals, freq = np.unique(np.asarray(counts, dtype=int), return_counts=True)
    return {str(int(v)): int(f) for v, f in zip(vals, freq)}


def _col(rows: list[dict], key: str) -> np.ndarray:
    return np.array([r[key] for r in rows if key in r and r[key] is not None], dtype=float)


def summarize(spec: ExperimentSpec, rows: list[dict]) -> dict:
    """Aggregate replicate rows into rejection rates, MAEs, count histograms and Rand indices."""
    ok = [r for r in rows if "error" not in r]
    truth = spec.true_changepoints
    out: dict = {"name": spec.name, "replicates": spec.replicates, "failed": len(rows) - len(ok)}
    if "lr" in spec.methods:
        rej = _col(ok, "lr_reject").astype(bool)
        d = {"rejection": _bernoulli(rej)}
        if truth:
            d["mae_t_hat"] = float(np.mean(np.abs(_col(ok, "lr_t_hat") - truth[0])))
        out["lr"] = d
    if "score" in spec.methods:
        n_tests = _col(ok, "score_n_tests")
        out["score"] = {
            "positive_rate": float(_col(ok, "score_n_rejecting").sum() / n_tests.sum()) if n_tests.sum() else math.nan,
            "rejection": _bernoulli(_col(ok, "score_root_reject").astype(bool)),
            "n_changepoints": _hist(_col(ok, "score_n_cps")),
            "mean_rand": float(np.mean(_col(ok, "score_rand"))) if ok else math.nan,
        }
    if "window" in spec.methods:
        n_max = _col(ok, "window_n_maximizers")
        n_rej = _col(ok, "window_n_rejecting")
        out["window"] = {
            "positive_rate": float(n_rej.sum() / n_max.sum()) if n_max.sum() else math.nan,
            "rejection": _bernoulli(_col(ok, "window_n_cps") > 0),
            "n_changepoints": _hist(_col(ok, "window_n_cps")),
            "mean_rand": float(np.mean(_col(ok, "window_rand"))) if ok else math.nan,
        }
    if "nonparam" in spec.methods:
        t = _col(ok, "np_t_hat")
        miss = np.isnan(t)
        d = {"no_detection": int(miss.sum())}
        if truth:
            # no detection counts as an estimate of 1
            d["mae_t_hat"] = float(np.mean(np.abs(np.where(miss, 1.0, t) - truth[0])))
        out["nonparam"] = d
    if "fit" in spec.methods:
        dh = _col(ok, "fit_delta_hat")
        out["fit"] = {
            "mean": float(dh.mean()) if dh.size else math.nan,
            "var": float(dh.var(ddof=1)) if dh.size > 1 else math.nan,
            "count": int(dh.size),
        }
    return out


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list[dict]
    summary: dict = field(default_factory=dict)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=ROW_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in ROW_COLUMNS})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "summary": self.summary}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return v


def run_experiment(spec: ExperimentSpec, tables: dict[str, NullQuantileTable] | None = None) -> ExperimentResult:
    """Run all replicates and summarize.

    Replicate ``i`` simulates from child ``i`` of ``SeedSequence(rng_seed)``, so
    results do not depend on ``workers``.  With ``output`` set, writes
    ``<output>.csv`` (one row per replicate) and ``<output>.json`` (summary).
    """
    tables = _tables(spec) if tables is None else tables
    seqs = np.random.SeedSequence(spec.rng_seed).spawn(spec.replicates)
    jobs = [(spec, i, s, tables) for i, s in enumerate(seqs)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as ex:
            rows = list(ex.map(_worker, jobs, chunksize=max(1, len(jobs) // (4 * spec.workers))))
    else:
        rows = [_worker(j) for j in jobs]
    result = ExperimentResult(spec, rows, summarize(spec, rows))
    if spec.output:
        from .io import dump_json

        base = Path(spec.output)
        base.with_suffix(".csv").write_text(result.rows_csv(), encoding="utf-8")
        dump_json(result.to_dict(), base.with_suffix(".json"))
    return result
