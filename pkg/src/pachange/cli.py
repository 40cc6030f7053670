"""Command-line interface: ``pachange <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .errors import PAChangeError
from .graph_engine import AttachmentRegime, simulate, sliding_high_degree_proportion
from .io import (
    dump_json,
    preprocess_single_action,
    read_edgelist,
    read_trace_csv,
    trace_from_edges,
    write_trace_csv,
)

log = logging.getLogger("pachange")

EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _null_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("null table")
    g.add_argument("--null-paths", type=int, default=10_000)
    g.add_argument("--null-grid", type=int, default=5000)
    g.add_argument("--null-seed", type=int, default=0)
    g.add_argument("--cache-dir", default=None, help="defaults to $PACHANGE_CACHE_DIR or ~/.cache/pachange")


def _table(args, law: str, param: float):
    from .null_dist import cache_load_or_build

    return cache_load_or_build(
        law, param, paths=args.null_paths, grid_points=args.null_grid, rng_seed=args.null_seed, cache_dir=args.cache_dir
    )


def _h_n(args, n: int) -> int:
    if args.h_n is not None:
        return int(args.h_n)
    return int(math.floor(n * args.s))


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    trace = simulate(args.n, AttachmentRegime.parse(args.regime), args.seed_graph, rng_seed=args.seed)
    _emit(write_trace_csv(trace), args.out)
    return 0


def cmd_scan_lr(args) -> int:
    from .null_dist import SUP_BRIDGE
    from .single_cp import lr_test

    trace = read_trace_csv(args.trace)
    res = lr_test(trace, args.gamma, args.alpha, _table(args, SUP_BRIDGE, args.gamma), stride=args.stride)
    if args.series_out:
        Path(args.series_out).write_text(res.scan.to_csv(), encoding="utf-8")
    _emit(dump_json(res.to_dict()), args.out)
    return 0


def cmd_scan_window(args) -> int:
    from .multi_cp import sara_detect, window_scan
    from .null_dist import LOCAL_MAX_X

    trace = read_trace_csv(args.trace)
    h_n = _h_n(args, trace.n)
    scan = window_scan(trace, h_n, pooled=args.pooled)
    rep = sara_detect(trace, h_n, args.alpha, _table(args, LOCAL_MAX_X, h_n / trace.n), holm=args.holm, scan=scan)
    if args.series_out:
        Path(args.series_out).write_text(scan.to_csv(), encoding="utf-8")
    _emit(dump_json(rep.to_dict()), args.out)
    return 0


def cmd_scan_score(args) -> int:
    from .multi_cp import score_scan
    from .null_dist import SUP_BRIDGE

    trace = read_trace_csv(args.trace)
    sc = score_scan(trace, args.gamma)
    table = _table(args, SUP_BRIDGE, args.gamma)
    j = sc.argmax()
    sup = float(sc.stats[j])
    crit = table.critical_value(args.alpha)
    if args.series_out:
        Path(args.series_out).write_text(sc.to_csv(), encoding="utf-8")
    out = {
        "method": "score",
        "n": trace.n,
        "gamma": args.gamma,
        "alpha": args.alpha,
        "sup_statistic": sup,
        "argmax_step": int(sc.steps[j]),
        "t_hat": int(sc.steps[j]) / trace.n,
        "critical_value": crit,
        "p_value": table.p_value(sup),
        "reject": sup > crit,
        "full_fit": sc.fit.to_dict(),
    }
    _emit(dump_json(out), args.out)
    return 0


def cmd_segment(args) -> int:
    from .multi_cp import binary_segmentation
    from .null_dist import SUP_BRIDGE

    trace = read_trace_csv(args.trace)
    root, rep = binary_segmentation(
        trace, args.gamma, args.alpha, _table(args, SUP_BRIDGE, args.gamma), min_len=args.min_len, holm=args.holm
    )
    _emit(dump_json({"report": rep.to_dict(), "tree": root.to_dict()}), args.out)
    return 0


def cmd_nonparam(args) -> int:
    from .nonparam import NO_DETECTION, NPConfig, np_series

    trace = read_trace_csv(args.trace)
    ser = np_series(trace, NPConfig(args.h_n, args.b_n, args.max_degree, args.stride))
    est = ser.first_crossing()
    if args.series_out:
        Path(args.series_out).write_text(ser.to_csv(), encoding="utf-8")
    out = {
        "method": "nonparam",
        "n": trace.n,
        "h_n": ser.h_n,
        "b_n": ser.b_n,
        "threshold": ser.threshold,
        "detected": est is not NO_DETECTION,
        "t_hat": None if est is NO_DETECTION else est,
    }
    _emit(dump_json(out), args.out)
    return 0


def cmd_nullsim(args) -> int:
    import numpy as np

    table = _table(args, args.law, args.param)
    qs = [0.5, 0.9, 0.95, 0.99]
    out = {
        "law": table.law,
        "param": table.param,
        "settings": table.settings,
        "sample_size": int(table.sample.shape[0]),
        "quantiles": {str(q): table.quantile(q) for q in qs},
        "mean": float(np.mean(table.sample)),
    }
    _emit(dump_json(out), args.out)
    return 0


def cmd_experiment(args) -> int:
    from .experiments import load_spec, run_experiment

    spec = load_spec(args.config)
    if args.workers is not None:
        spec.workers = args.workers
    if args.out is not None:
        spec.output = args.out
    res = run_experiment(spec)
    sys.stdout.write(dump_json(res.summary))
    return 0


def cmd_analyze_edgelist(args) -> int:
    from .likelihood import TransitionHistogram, fit_segment
    from .multi_cp import binary_segmentation, sara_detect, window_scan
    from .null_dist import LOCAL_MAX_X, SUP_BRIDGE
    from .single_cp import lr_test

    edges = read_edgelist(args.edgelist, args.format)
    filt = None
    if not args.no_filter:
        edges, filt = preprocess_single_action(edges)
    trace = trace_from_edges(edges)
    out: dict = {"edges": len(edges), "n": trace.n, "filter": filt.to_dict() if filt else None}
    if args.method == "score":
        root, rep = binary_segmentation(
            trace, args.gamma, args.alpha, _table(args, SUP_BRIDGE, args.gamma), min_len=args.min_len, holm=args.holm
        )
        out["report"] = rep.to_dict()
        out["tree"] = root.to_dict()
    elif args.method == "window":
        h_n = _h_n(args, trace.n)
        scan = window_scan(trace, h_n)
        rep = sara_detect(trace, h_n, args.alpha, _table(args, LOCAL_MAX_X, h_n / trace.n), holm=args.holm, scan=scan)
        out["report"] = rep.to_dict()
        if args.series_out:
            Path(args.series_out).write_text(scan.to_csv(), encoding="utf-8")
    else:
        res = lr_test(trace, args.gamma, args.alpha, _table(args, SUP_BRIDGE, args.gamma))
        out["report"] = res.to_dict()
    if args.method in ("score", "window") and trace.timestamps is not None:
        cps = out["report"]["changepoints"]
        out["report"]["changepoint_timestamps"] = [int(trace.timestamps[c - 1]) for c in cps]
    out["overall_fit"] = fit_segment(TransitionHistogram.from_degrees(trace.pre_degrees)).to_dict()
    if args.high_degree_out:
        steps, props = sliding_high_degree_proportion(trace, args.high_degree_threshold, args.high_degree_window)
        lines = ["k,proportion"] + [f"{int(k)},{float(p)!r}" for k, p in zip(steps, props)]
        Path(args.high_degree_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _emit(dump_json(out), args.out)
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pachange", description="Changepoint detection in preferential attachment networks.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--error-json", action="store_true", help="report failures as JSON on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="grow a network and write its trace")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--regime", required=True, help='e.g. "1.0", "0.6:0,0.5", "0.6:1,1^1,0.5"')
    s.add_argument("--seed", type=int, default=0, help="RNG seed")
    s.add_argument("--seed-graph", default="SELF_LOOP_NODE", choices=["SELF_LOOP_NODE", "TWO_NODES_DOUBLE_EDGE"])
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scan-lr", help="sup likelihood-ratio test for one changepoint")
    s.add_argument("trace")
    s.add_argument("--gamma", type=float, default=0.1)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--stride", type=int, default=None)
    s.add_argument("--series-out", default=None)
    s.add_argument("--out", default=None)
    _null_args(s)
    s.set_defaults(func=cmd_scan_lr)

    s = sub.add_parser("scan-window", help="window statistic with local-maximum screening")
    s.add_argument("trace")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--h-n", type=int, default=None)
    g.add_argument("--s", type=float, default=0.1)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--holm", action="store_true")
    s.add_argument("--pooled", action="store_true", help="direct three-fit ratio instead of the crossed one")
    s.add_argument("--series-out", default=None)
    s.add_argument("--out", default=None)
    _null_args(s)
    s.set_defaults(func=cmd_scan_window)

    s = sub.add_parser("scan-score", help="score statistic over the whole trace")
    s.add_argument("trace")
    s.add_argument("--gamma", type=float, default=0.1)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--series-out", default=None)
    s.add_argument("--out", default=None)
    _null_args(s)
    s.set_defaults(func=cmd_scan_score)

    s = sub.add_parser("segment", help="binary segmentation with the score test")
    s.add_argument("trace")
    s.add_argument("--gamma", type=float, default=0.1)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--min-len", type=int, default=1000)
    s.add_argument("--holm", action="store_true")
    s.add_argument("--out", default=None)
    _null_args(s)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("nonparam", help="nonparametric changepoint estimate")
    s.add_argument("trace")
    s.add_argument("--h-n", type=float, default=None)
    s.add_argument("--b-n", type=float, default=None)
    s.add_argument("--max-degree", type=int, default=64)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--series-out", default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_nonparam)

    s = sub.add_parser("nullsim", help="build or load a null quantile table")
    s.add_argument("--law", choices=["sup_bridge", "local_max_x"], required=True)
    s.add_argument("--param", type=float, required=True, help="gamma for sup_bridge, s for local_max_x")
    s.add_argument("--out", default=None)
    _null_args(s)
    s.set_defaults(func=cmd_nullsim)

    s = sub.add_parser("experiment", help="run a replicated study from a YAML or JSON spec")
    s.add_argument("config")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", default=None, help="output base path; writes .csv and .json")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("analyze-edgelist", help="detect changepoints in a temporal edgelist")
    s.add_argument("edgelist")
    s.add_argument("--format", choices=["auto", "csv", "whitespace"], default="auto")
    s.add_argument("--method", choices=["score", "window", "lr"], default="score")
    s.add_argument("--gamma", type=float, default=0.1)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--h-n", type=int, default=None)
    g.add_argument("--s", type=float, default=0.1)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--min-len", type=int, default=1000)
    s.add_argument("--holm", action="store_true")
    s.add_argument("--no-filter", action="store_true", help="keep users with more than one outgoing edge")
    s.add_argument("--series-out", default=None)
    s.add_argument("--high-degree-out", default=None, help="CSV of the sliding high-degree share")
    s.add_argument("--high-degree-threshold", type=int, default=100)
    s.add_argument("--high-degree-window", type=int, default=200)
    s.add_argument("--out", default=None)
    _null_args(s)
    s.set_defaults(func=cmd_analyze_edgelist)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except (PAChangeError, ValueError) as exc:
        return _fail(args, exc, EXIT_DATA)
    except OSError as exc:
        return _fail(args, exc, EXIT_IO)


def _fail(args, exc: Exception, code: int) -> int:
    if args.error_json:
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        lines = getattr(exc, "bad_lines", None)
        if lines:
            payload["bad_lines"] = [{"line": no, "text": txt} for no, txt in lines]
        sys.stderr.write(dump_json(payload))
    else:
        sys.stderr.write(f"pachange: error: {exc}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
