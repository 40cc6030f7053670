"""Edgelist ingestion, trace files and report serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from numba import njit

from .errors import EmptyFile, ParseError
from .graph_engine import AttachmentRegime, NetworkTrace, SeedConvention, _replay

__all__ = [
    "TemporalEdge",
    "EdgeList",
    "FilterReport",
    "read_edgelist",
    "preprocess_single_action",
    "trace_from_edges",
    "write_trace_csv",
    "read_trace_csv",
    "dump_json",
    "to_jsonable",
]

TRACE_COLUMNS = ("event_index", "node", "pre_degree", "source")
MAX_REPORTED_BAD_LINES = 10


@dataclass(frozen=True)
class TemporalEdge:
    source: int
    target: int
    timestamp: int


@dataclass(frozen=True, eq=False)
class EdgeList:
    """Columnar temporal edges, sorted by timestamp (ties keep file order)."""

    src: np.ndarray
    dst: np.ndarray
    ts: np.ndarray

    def __len__(self) -> int:
        return int(self.src.shape[0])

    def __iter__(self) -> Iterator[TemporalEdge]:
        for s, d, t in zip(self.src.tolist(), self.dst.tolist(), self.ts.tolist()):
            yield TemporalEdge(s, d, t)

    def __getitem__(self, i: int) -> TemporalEdge:
        return TemporalEdge(int(self.src[i]), int(self.dst[i]), int(self.ts[i]))

    @classmethod
    def from_edges(cls, edges, sort: bool = True) -> "EdgeList":
        rows = [(e.source, e.target, e.timestamp) if isinstance(e, TemporalEdge) else tuple(e) for e in edges]
        arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
        out = cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())
        return out.sorted() if sort else out

    def sorted(self) -> "EdgeList":
        order = np.argsort(self.ts, kind="stable")
        return EdgeList(self.src[order], self.dst[order], self.ts[order])

    def select(self, mask: np.ndarray) -> "EdgeList":
        return EdgeList(self.src[mask], self.dst[mask], self.ts[mask])


def _split(line: str, fmt: str) -> list[str]:
    if fmt == "csv":
        return [f.strip() for f in next(csv.reader([line]))]
    return line.split()


def _detect_format(path: Path, fmt: str) -> str:
    if fmt != "auto":
        if fmt not in ("csv", "whitespace"):
            raise ValueError(f"unknown edgelist format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "whitespace"


def read_edgelist(path: str | os.PathLike, fmt: str = "auto") -> EdgeList:
    """Read ``src dst ts`` rows; extra columns are ignored.

    Blank lines and ``#`` comments are skipped, as is a header line made only
    of non-numeric fields.  Ids must be non-negative integers and timestamps
    integers.  The result is stably sorted by timestamp.

    Raises
    ------
    ParseError
        If any row is malformed; carries up to ten ``(line_no, text)`` pairs.
    EmptyFile
        If no edges were found.
    """
    path = Path(path)
    fmt = _detect_format(path, fmt)
    src, dst, ts = [], [], []
    bad: list[tuple[int, str]] = []
    n_bad = 0
    seen_data = False
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = _split(line, fmt)
            if not seen_data and fields and not any(_is_int(f) for f in fields):
                seen_data = True
                continue  # header
            seen_data = True
            try:
                if len(fields) < 3:
                    raise ValueError("expected at least 3 columns")
                s, d, t = int(fields[0]), int(fields[1]), int(fields[2])
                if s < 0 or d < 0:
                    raise ValueError("negative id")
            except ValueError:
                n_bad += 1
                if len(bad) < MAX_REPORTED_BAD_LINES:
                    bad.append((no, line))
                continue
            src.append(s)
            dst.append(d)
            ts.append(t)
    if n_bad:
        first = ", ".join(f"line {no}: {txt!r}" for no, txt in bad[:3])
        raise ParseError(f"{n_bad} malformed line(s) in {path}; {first}", bad)
    if not src:
        raise EmptyFile(f"no edges in {path}")
    return EdgeList(np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(ts, dtype=np.int64)).sorted()


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class FilterReport:
    edges_in: int
    edges_out: int
    users: int
    users_retained: int

    @property
    def retained_user_share(self) -> float:
        return self.users_retained / self.users if self.users else math.nan

    @property
    def retained_edge_share(self) -> float:
        return self.edges_out / self.edges_in if self.edges_in else math.nan

    def to_dict(self) -> dict:
        return {
            "edges_in": self.edges_in,
            "edges_out": self.edges_out,
            "users": self.users,
            "users_retained": self.users_retained,
            "retained_user_share": self.retained_user_share,
            "retained_edge_share": self.retained_edge_share,
        }


def preprocess_single_action(edges: EdgeList) -> tuple[EdgeList, FilterReport]:
    """Drop every edge whose source occurs as a source more than once.

    Users removed this way may still appear as targets.
    """
    if not isinstance(edges, EdgeList):
        edges = EdgeList.from_edges(edges)
    uniq, inv, counts = np.unique(edges.src, return_inverse=True, return_counts=True)
    keep = counts[inv] == 1
    out = edges.select(keep)
    rep = FilterReport(len(edges), len(out), int(uniq.shape[0]), int((counts == 1).sum()))
    return out, rep


@njit(cache=True)
def _edge_replay(src, dst, n_nodes):
    deg = np.zeros(n_nodes, dtype=np.int64)
    pre = np.empty(src.shape[0], dtype=np.int64)
    for e in range(src.shape[0]):
        v = dst[e]
        if deg[v] == 0:
            deg[v] = 1
        pre[e] = deg[v]
        deg[v] += 1
        deg[src[e]] += 1
    return pre, deg


def trace_from_edges(edges, drop_self_loops: bool = True) -> NetworkTrace:
    """Replay edges in time order and record each target's pre-attachment degree.

    A target not seen before enters with degree 1.  Node ids are relabelled to
    ``0 .. N-1`` in order of first appearance; the original ids are kept in
    ``node_labels``.  Self-loops carry no attachment information and are
    dropped unless ``drop_self_loops`` is false.
    """
    if not isinstance(edges, EdgeList):
        edges = EdgeList.from_edges(edges)
    if drop_self_loops:
        edges = edges.select(edges.src != edges.dst)
    m = len(edges)
    # first appearance order: per edge, source then target
    both = np.empty(2 * m, dtype=np.int64)
    both[0::2] = edges.src
    both[1::2] = edges.dst
    labels, first, inv = np.unique(both, return_index=True, return_inverse=True)
    rank = np.empty(labels.shape[0], dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(labels.shape[0])
    ids = rank[inv]
    src = np.ascontiguousarray(ids[0::2])
    dst = np.ascontiguousarray(ids[1::2])
    node_labels = np.empty(labels.shape[0], dtype=np.int64)
    node_labels[rank] = labels
    pre, deg = _edge_replay(src, dst, labels.shape[0])
    return NetworkTrace(
        n=m,
        seed=SeedConvention.EMPTY,
        nodes=dst,
        pre_degrees=pre,
        sources=src,
        final_degrees=deg,
        regime=None,
        timestamps=edges.ts.copy(),
        node_labels=node_labels,
    )


# --------------------------------------------------------------------------
# trace files


def write_trace_csv(trace: NetworkTrace, path: str | os.PathLike | None = None) -> str:
    """CSV with ``#`` header lines (n, seed, regime) then ``event_index,node,pre_degree,source``."""
    buf = io.StringIO()
    buf.write(f"# n={trace.n}\n")
    buf.write(f"# seed={trace.seed.name}\n")
    if trace.regime is not None:
        buf.write(f"# regime={trace.regime}\n")
    buf.write(",".join(TRACE_COLUMNS) + "\n")
    body = np.column_stack(
        (np.arange(trace.n_events, dtype=np.int64), trace.nodes, trace.pre_degrees, trace.sources)
    )
    np.savetxt(buf, body, fmt="%d", delimiter=",")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_trace_csv(path: str | os.PathLike) -> NetworkTrace:
    """Inverse of :func:`write_trace_csv`."""
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[int]] = []
    bad: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                if tuple(header[:3]) != TRACE_COLUMNS[:3]:
                    raise ParseError(f"unexpected trace header {header}", [(no, line)])
                continue
            try:
                rows.append([int(x) for x in line.split(",")])
            except ValueError:
                bad.append((no, line))
    if bad:
        raise ParseError(f"{len(bad)} malformed trace row(s)", bad[:MAX_REPORTED_BAD_LINES])
    seed = SeedConvention.parse(meta.get("seed", "SELF_LOOP_NODE"))
    arr = np.array(rows, dtype=np.int64).reshape(-1, len(header) if header else 4)
    n = int(meta.get("n", arr.shape[0] + seed.size))
    nodes, pre = arr[:, 1], arr[:, 2]
    if header is not None and len(header) >= 4:
        sources = arr[:, 3]
    else:
        sources = np.arange(seed.size, seed.size + arr.shape[0], dtype=np.int64)
    n_nodes = int(max(seed.size, (nodes.max() + 1) if nodes.size else 0, (sources.max() + 1) if sources.size else 0))
    deg = _replay(
        np.ascontiguousarray(nodes), np.ascontiguousarray(sources), seed.degrees, n_nodes, arr.shape[0]
    )
    regime = AttachmentRegime.parse(meta["regime"]) if "regime" in meta else None
    return NetworkTrace(
        n=n, seed=seed, nodes=nodes, pre_degrees=pre, sources=sources, final_degrees=deg, regime=regime
    )


# --------------------------------------------------------------------------
# JSON


def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats for JSON output."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, path: str | os.PathLike | None = None) -> str:
    """Serialize with sorted keys; floats use the shortest round-trip repr."""
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
