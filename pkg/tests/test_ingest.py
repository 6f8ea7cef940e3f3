import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grlimits.ingest import (
    DocidMapping,
    RunFormatError,
    RunRecord,
    branch_metrics,
    hash_mapping,
    load_mapping,
    parse_run_file,
    synthetic_run,
    write_mapping,
    write_run_file,
)
from grlimits.scenarios import fixture_path


class TestParse:
    def test_line(self):
        runs = parse_run_file(["q1 Q0 D123 1 15.3 slim\n"])
        assert runs == {"q1": [RunRecord("q1", "D123", 1, 15.3)]}

    def test_empty(self):
        assert parse_run_file(io.StringIO("")) == {}

    def test_rank_gaps_allowed(self):
        runs = parse_run_file(["q Q0 a 1 3.0 t", "q Q0 b 3 2.0 t"])
        assert [r.rank for r in runs["q"]] == [1, 3]

    def test_increasing_score_rejected(self):
        with pytest.raises(RunFormatError, match="line 2"):
            parse_run_file(["q Q0 a 1 2.0 t", "q Q0 b 2 3.0 t"])

    @pytest.mark.parametrize("line", ["q Q0 a 1 2.0", "q Q0 a x 2.0 t", "q Q0 a 1 nan t", "q Q0 a 0 1 t"])
    def test_malformed(self, line):
        with pytest.raises(RunFormatError):
            parse_run_file([line])

    def test_queries_interleaved(self):
        runs = parse_run_file(["a Q0 x 1 2 t", "b Q0 y 1 5 t", "a Q0 z 2 1 t"])
        assert list(runs) == ["a", "b"] and len(runs["a"]) == 2

    @settings(max_examples=30)
    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=20))
    def test_round_trip(self, scores):
        scores = sorted(scores, reverse=True)
        runs = {"q7": [RunRecord("q7", f"d{i}", i + 1, s) for i, s in enumerate(scores)]}
        buf = io.StringIO()
        write_run_file(runs, buf)
        assert parse_run_file(io.StringIO(buf.getvalue())) == runs


class TestMapping:
    def test_hash_injective(self):
        ids = [f"doc{i}" for i in range(10_000)]
        mapping = hash_mapping(ids, k=256, m=4, seed=3)
        assert len({mapping[d] for d in ids}) == 10_000

    def test_hash_deterministic(self):
        ids = [f"doc{i}" for i in range(500)]
        a, b = hash_mapping(ids, seed=9), hash_mapping(ids, seed=9)
        assert dict(a.items()) == dict(b.items())
        assert dict(a.items()) != dict(hash_mapping(ids, seed=10).items())

    def test_capacity(self):
        with pytest.raises(ValueError):
            hash_mapping(["a", "b", "c"], k=2, m=1)

    def test_full_capacity_uses_every_code(self):
        mapping = hash_mapping([str(i) for i in range(8)], k=2, m=3)
        assert sorted(s for _, s in mapping.items()) == [tuple(map(int, f"{i:03b}")) for i in range(8)]

    def test_load(self):
        mapping = load_mapping(["D1\t3 17 200 9\n"], k=256)
        assert mapping["D1"] == (3, 17, 200, 9) and mapping.m == 4

    def test_collision_names_both(self):
        with pytest.raises(ValueError, match="D1.*D2"):
            load_mapping(["D1\t1 2\n", "D2\t1 2\n"], k=4)

    def test_token_range(self):
        with pytest.raises(ValueError):
            load_mapping(["D1\t3 17 256 9\n"], k=256)

    def test_ragged(self):
        with pytest.raises(ValueError):
            DocidMapping({"a": (1, 2), "b": (1,)}, k=4, m=2)

    def test_write_load_round_trip(self):
        mapping = hash_mapping([f"x{i}" for i in range(50)], k=16, m=3)
        buf = io.StringIO()
        write_mapping(mapping, buf)
        assert dict(load_mapping(io.StringIO(buf.getvalue()), k=16).items()) == dict(mapping.items())

    def test_branch_sizes(self):
        mapping = DocidMapping({"a": (0, 1), "b": (0, 2), "c": (3, 0)}, k=4, m=2)
        np.testing.assert_array_equal(mapping.branch_sizes(), [2, 0, 0, 1])


class TestBranchMetrics:
    def test_concentrated_query(self):
        # all 50 top documents share branch 0 and carry nearly all the mass
        codes = {f"d{i}": (0, i // 16, i % 16) for i in range(50)}
        codes.update({f"x{i}": (1 + i % 3, 0, i) for i in range(10)})
        mapping = DocidMapping(codes, k=16, m=3)
        recs = [RunRecord("q", f"d{i}", i + 1, 100.0 - i) for i in range(50)]
        recs += [RunRecord("q", f"x{i}", 51 + i, 1.0) for i in range(10)]
        report = branch_metrics({"q": recs}, mapping, top_r=50, corpus_size=60, seed=0)
        q = report.queries[0]
        assert (q.recall, q.precision_at_1, q.relevant_branch_count) == (1.0, 1, 1)
        assert report.recall_pct == 100.0

    def test_missing_docs(self):
        mapping = DocidMapping({"a": (0,)}, k=2, m=1)
        recs = [RunRecord("q", "a", 1, 2.0), RunRecord("q", "zz", 2, 1.0)]
        with pytest.raises(KeyError, match="zz"):
            branch_metrics({"q": recs}, mapping, top_r=1, corpus_size=2)

    def test_too_short(self):
        mapping = DocidMapping({"a": (0,)}, k=2, m=1)
        with pytest.raises(ValueError):
            branch_metrics({"q": [RunRecord("q", "a", 1, 2.0)]}, mapping, top_r=5, corpus_size=2)

    def test_synthetic_deterministic(self):
        runs = synthetic_run(n_queries=10, depth=60, seed=1)
        mapping = hash_mapping(sorted({r.doc_id for v in runs.values() for r in v}), seed=1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = branch_metrics(runs, mapping, seed=4).to_csv()
            b = branch_metrics(runs, mapping, seed=4).to_csv()
        assert a == b
        for line in a.splitlines()[1:]:
            rec, p1 = map(float, line.split(",")[1:3])
            assert 0 <= rec <= 1 and p1 in (0, 1)


def test_bundled_fixture_matches_generator():
    text = fixture_path().read_text()
    runs = parse_run_file(io.StringIO(text))
    assert len(runs) == 100 and all(len(v) == 100 for v in runs.values())
    assert runs == synthetic_run(seed=0)
