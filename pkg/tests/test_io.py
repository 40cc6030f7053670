from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pachange.errors import EmptyFile, ParseError
from pachange.graph_engine import AttachmentRegime, SeedConvention, simulate
from pachange.io import (
    EdgeList,
    TemporalEdge,
    dump_json,
    preprocess_single_action,
    read_edgelist,
    read_trace_csv,
    trace_from_edges,
    write_trace_csv,
)

edge_rows = st.lists(
    st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(0, 50)), min_size=1, max_size=80
)


class TestReadEdgelist:
    def test_sorted(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("1 2 30\n3 4 10\n5 6 20\n")
        el = read_edgelist(p)
        assert el.ts.tolist() == [10, 20, 30]
        assert el[0] == TemporalEdge(3, 4, 10)

    def test_stable_ties(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("1 2 5\n7 8 1\n3 4 5\n")
        assert [e.source for e in read_edgelist(p)] == [7, 1, 3]

    def test_csv_header_comments(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("# retweets\nsrc,dst,ts\n\n1,2,3,extra\n4, 5, 6\n")
        el = read_edgelist(p)
        assert el.src.tolist() == [1, 4] and el.dst.tolist() == [2, 5]

    def test_parse_error_names_line(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("1 2 3\nx 2 4\n5 6\n")
        with pytest.raises(ParseError) as info:
            read_edgelist(p)
        assert [no for no, _ in info.value.bad_lines] == [2, 3]
        assert "line 2" in str(info.value)

    def test_negative_id(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("-1 2 3\n")
        with pytest.raises(ParseError):
            read_edgelist(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("# nothing\n\n")
        with pytest.raises(EmptyFile):
            read_edgelist(p)

    def test_format_forced(self, tmp_path):
        p = tmp_path / "e.dat"
        p.write_text("1,2,3\n")
        assert len(read_edgelist(p, fmt="csv")) == 1
        with pytest.raises(ValueError):
            read_edgelist(p, fmt="xml")


class TestPreprocess:
    def test_unique_sources_unchanged(self):
        el = EdgeList.from_edges([(1, 9, 0), (2, 9, 1), (3, 1, 2)])
        out, rep = preprocess_single_action(el)
        assert out.src.tolist() == el.src.tolist()
        assert rep.retained_user_share == 1.0

    def test_repeated_source_removed(self):
        el = EdgeList.from_edges([(1, 9, 0), (1, 8, 1), (2, 1, 2), (1, 7, 3)])
        out, rep = preprocess_single_action(el)
        assert [(e.source, e.target) for e in out] == [(2, 1)]
        assert rep.users == 2 and rep.users_retained == 1
        assert rep.edges_in == 4 and rep.edges_out == 1
        assert rep.to_dict()["retained_edge_share"] == 0.25

    @given(edge_rows)
    def test_retained_sources_unique(self, rows):
        out, rep = preprocess_single_action(EdgeList.from_edges(rows))
        assert len(set(out.src.tolist())) == len(out) == rep.users_retained


class TestTraceFromEdges:
    def test_chain(self):
        tr = trace_from_edges(EdgeList.from_edges([(10, 20, 0), (30, 20, 1)]))
        assert tr.pre_degrees.tolist() == [1, 2]
        assert tr.node_labels.tolist() == [10, 20, 30]
        assert tr.seed is SeedConvention.EMPTY

    def test_single_edge(self):
        tr = trace_from_edges([TemporalEdge(0, 1, 5)])
        assert tr.n == 1 and tr.pre_degrees.tolist() == [1]
        assert tr.timestamps.tolist() == [5]

    def test_self_loops(self):
        rows = [(1, 1, 0), (1, 2, 1)]
        assert trace_from_edges(rows).n == 1
        assert trace_from_edges(rows, drop_self_loops=False).n == 2

    @given(edge_rows)
    def test_degree_conservation(self, rows):
        el = EdgeList.from_edges(rows)
        el = el.select(el.src != el.dst)
        if len(el) == 0:
            return
        tr = trace_from_edges(el)
        # every edge adds 2; a target first seen as a target is born with 1
        seen, births = set(), 0
        for e in el:
            if e.target not in seen:
                births += 1
            seen.update((e.source, e.target))
        assert tr.final_degrees.sum() == 2 * len(el) + births
        assert np.all(tr.pre_degrees >= 1)


class TestTraceCSV:
    def test_roundtrip_simulated(self, tmp_path):
        tr = simulate(2000, AttachmentRegime.single(0.5, 0.0, 1.0), rng_seed=3)
        p = tmp_path / "t.csv"
        text = write_trace_csv(tr, p)
        assert text.splitlines()[:4] == ["# n=2000", "# seed=SELF_LOOP_NODE", f"# regime={tr.regime}", "event_index,node,pre_degree,source"]
        back = read_trace_csv(p)
        assert back.n == tr.n and back.seed is tr.seed
        assert np.array_equal(back.nodes, tr.nodes)
        assert np.array_equal(back.pre_degrees, tr.pre_degrees)
        assert np.array_equal(back.final_degrees, tr.final_degrees)
        assert back.regime == tr.regime

    def test_roundtrip_edges(self, tmp_path):
        tr = trace_from_edges([(0, 1, 0), (2, 1, 1), (3, 2, 2)])
        p = tmp_path / "t.csv"
        write_trace_csv(tr, p)
        back = read_trace_csv(p)
        assert np.array_equal(back.final_degrees, tr.final_degrees)

    def test_three_column_file(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("# n=4\nevent_index,node,pre_degree\n0,0,2\n1,0,3\n2,1,1\n")
        tr = read_trace_csv(p)
        assert tr.sources.tolist() == [1, 2, 3]
        assert tr.final_degrees.tolist() == [4, 2, 1, 1]

    def test_bad_rows(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("event_index,node,pre_degree,source\n0,0,2,1\n1,zz,3,2\n")
        with pytest.raises(ParseError):
            read_trace_csv(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ParseError):
            read_trace_csv(p)


class TestJSON:
    def test_types(self):
        text = dump_json({"b": np.int64(3), "a": [np.float64(0.1), math.nan], "c": np.bool_(True), "d": np.arange(2)})
        assert json.loads(text) == {"a": [0.1, None], "b": 3, "c": True, "d": [0, 1]}
        assert text.index('"a"') < text.index('"b"')

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_roundtrip(self, x):
        assert json.loads(dump_json({"x": x}))["x"] == x
