import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepgraph.gnn import GcnConfig, init_params, normalize_adjacency
from stepgraph.graph import build_graph, build_vocabulary, encode_features
from stepgraph.retrieval import (
    FeatureVector,
    InconsistentLayerTags,
    LengthMismatch,
    NegativeEntries,
    NoQueries,
    RankedRetrievalResult,
    UnknownLayerTag,
    ZeroVector,
    average_precision,
    distance,
    extract_features,
    mean_average_precision,
    pr_points,
    precision_recall_curve,
    rank_query,
    read_features_csv,
    write_features_csv,
    write_pr_csv,
    write_rankings_csv,
)
from stepgraph.step import read_step


def brute_ap(relevance):
    """Direct precision@k summation over the relevant ranks."""
    ks = [k for k in range(1, len(relevance) + 1) if relevance[k - 1]]
    if not ks:
        return 0.0
    return sum(sum(relevance[:k]) / k for k in ks) / len(ks)


def fv(values, path, label=0, tag="softmax"):
    return FeatureVector(tag, np.asarray(values, dtype=float), path, label)


class TestDistance:
    def test_euclidean(self):
        assert distance([0, 0], [3, 4], "euclidean") == 5.0

    def test_cosine(self):
        assert distance([1, 0], [0, 1], "cosine") == 1.0
        v = [0.2, 0.7, 0.1]
        assert distance(v, v, "cosine") == pytest.approx(0.0, abs=1e-15)
        assert distance([1, 0], [-2, 0], "cosine") == 2.0

    def test_histogram(self):
        assert distance([0.5, 0.5], [0.5, 0.5], "histogram_intersection") == 0.0
        assert distance([1, 0], [0, 1], "histogram_intersection") == 1.0
        # min-sum normalisation: [1,1] inside [2,2] counts as a full match
        assert distance([1, 1], [2, 2], "histogram_intersection") == 0.0

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            distance([1, 2], [1, 2, 3], "euclidean")
        with pytest.raises(ZeroVector):
            distance([0, 0], [1, 0], "cosine")
        with pytest.raises(NegativeEntries):
            distance([-0.1, 1], [1, 0], "histogram_intersection")
        with pytest.raises(ValueError):
            distance([1], [1], "manhattan")

    def test_negative_entries_fine_for_other_metrics(self):
        assert distance([-1, 0], [1, 0], "euclidean") == 2.0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.01, 100), min_size=2, max_size=8), st.floats(0.001, 1000))
    def test_cosine_scale_invariant(self, vals, lam):
        a = np.array(vals)
        b = a[::-1].copy()
        assert distance(a, b, "cosine") == pytest.approx(distance(a * lam, b, "cosine"), abs=1e-12)


class TestAveragePrecision:
    def test_hand_case(self):
        assert average_precision([1, 0, 1]) == pytest.approx(0.83333, abs=1e-5)
        assert average_precision([1, 0, 1]) == (1 / 1 + 2 / 3) / 2

    def test_single_relevant(self):
        assert average_precision([1]) == 1.0

    def test_no_relevant(self):
        assert average_precision([0, 0]) == 0.0

    @pytest.mark.parametrize("seed", range(200))
    def test_matches_oracle_exactly(self, seed):
        rng = np.random.default_rng(seed)
        rel = [int(r) for r in rng.integers(0, 2, int(rng.integers(1, 51)))]
        ap = average_precision(rel)
        assert ap == brute_ap(rel)
        assert 0.0 <= ap <= 1.0

    def test_map(self):
        results = [RankedRetrievalResult("a", 0, average_precision=1.0),
                   RankedRetrievalResult("b", 0, average_precision=0.5)]
        assert mean_average_precision(results) == 0.75
        assert mean_average_precision(results[:1]) == 1.0
        with pytest.raises(NoQueries):
            mean_average_precision([])


class TestRankQuery:
    def test_single_relevant_item(self):
        res = rank_query(fv([0.9, 0.1], "q", 1), [fv([0.8, 0.2], "c", 1)])
        assert res.average_precision == 1.0 and not res.no_relevant

    def test_sorted_and_flags(self):
        corpus = [fv([0.1, 0.9], "far", 1), fv([0.9, 0.1], "near", 0), fv([0.5, 0.5], "mid", 0)]
        res = rank_query(fv([1.0, 0.0], "q", 0), corpus, "euclidean")
        assert [e.corpus_id for e in res.entries] == ["near", "mid", "far"]
        assert res.relevance == [True, True, False]
        d = [e.distance for e in res.entries]
        assert d == sorted(d)

    def test_zero_relevant_flagged(self, caplog):
        res = rank_query(fv([1, 0], "q", 5), [fv([1, 0], "a", 0), fv([0, 1], "b", 1)])
        assert res.average_precision == 0.0 and res.no_relevant
        assert "no relevant" in caplog.text

    def test_ties_break_on_path(self):
        corpus = [fv([1, 0], "b"), fv([1, 0], "a"), fv([1, 0], "c")]
        res = rank_query(fv([1, 0], "q"), corpus)
        assert [e.corpus_id for e in res.entries] == ["a", "b", "c"]

    @pytest.mark.parametrize("seed", range(10))
    def test_order_and_scale_invariant(self, seed):
        rng = np.random.default_rng(seed)
        vals = rng.random((25, 4))
        vals[5] = vals[7]  # force a tie
        corpus = [fv(v, f"m{i:02d}", int(rng.integers(0, 3))) for i, v in enumerate(vals)]
        q = fv(rng.random(4), "q", 1)
        base = rank_query(q, corpus)
        perm = rng.permutation(len(corpus))
        shuffled = rank_query(q, [corpus[i] for i in perm])
        scaled = rank_query(q, [fv(c.values * 7.5, c.model_path, c.label) for c in corpus])
        ids = [e.corpus_id for e in base.entries]
        assert ids == [e.corpus_id for e in shuffled.entries] == [e.corpus_id for e in scaled.entries]
        assert base.average_precision == shuffled.average_precision == scaled.average_precision

    def test_mixed_tags(self):
        with pytest.raises(InconsistentLayerTags):
            rank_query(fv([1, 0], "q"), [fv([1, 0], "a", tag="fc2")])

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            rank_query(fv([1, 0], "q"), [])


class TestPrCurve:
    def test_hand_points(self):
        pts = pr_points([1, 0, 1])
        assert pts[0] == (0.5, 1.0) and pts[1] == (0.5, 0.5)
        assert pts[2][0] == 1.0 and pts[2][1] == pytest.approx(0.667, abs=1e-3)

    def test_single(self):
        assert pr_points([1]) == [(1.0, 1.0)]

    def test_perfect_class(self):
        corpus = [fv([1, 0], f"a{i}", 0) for i in range(3)] + [fv([0, 1], f"b{i}", 1) for i in range(3)]
        results = [rank_query(fv([1, 0.01], "q0", 0), corpus), rank_query(fv([1, 0.02], "q1", 0), corpus)]
        curve = precision_recall_curve(results)[0]
        assert [p for _, p in curve[:3]] == [1.0, 1.0, 1.0]
        assert curve[2][0] == 1.0

    def test_skips_queries_without_relevant(self):
        res = rank_query(fv([1, 0], "q", 9), [fv([1, 0], "a", 0)])
        assert precision_recall_curve([res]) == {}


class TestExtract:
    @pytest.fixture
    def setup(self, code1_path):
        g = build_graph(read_step(code1_path))
        x, _ = encode_features(g, build_vocabulary([g]))
        return init_params(GcnConfig(12, 6, seed=1)), normalize_adjacency(g), x

    def test_softmax(self, setup):
        v = extract_features(*setup, "softmax")
        assert len(v.values) == 6 and abs(v.values.sum() - 1) < 1e-9

    def test_attention_width(self, setup):
        assert len(extract_features(*setup, "attention").values) == 32

    def test_deterministic(self, setup):
        assert np.array_equal(extract_features(*setup, "fc2").values, extract_features(*setup, "fc2").values)

    def test_unknown(self, setup):
        with pytest.raises(UnknownLayerTag):
            extract_features(*setup, "gcn1")

    @pytest.mark.parametrize("seed", range(20))
    def test_softmax_never_negative_for_histogram(self, setup, seed):
        _, adj, x = setup
        model = init_params(GcnConfig(12, 6, seed=seed))
        model.params["fc2_b"][:] = np.random.default_rng(seed).normal(0, 50, 6)
        a = extract_features(model, adj, x, "softmax")
        b = extract_features(init_params(GcnConfig(12, 6, seed=seed + 100)), adj, x, "softmax")
        assert 0.0 <= distance(a, b, "histogram_intersection") <= 1.0


def test_csv_round_trip(tmp_path):
    vecs = [fv([0.1, 1 / 3], "a.stp", 0), fv([math.pi, -2.0], "b.stp", None, "fc2")]
    write_features_csv(vecs, tmp_path / "f.csv")
    back = read_features_csv(tmp_path / "f.csv")
    assert [(v.layer_tag, v.model_path, v.label) for v in back] == [("softmax", "a.stp", 0), ("fc2", "b.stp", None)]
    assert all(np.array_equal(a.values, b.values) for a, b in zip(vecs, back))


def test_rankings_and_pr_csv(tmp_path):
    corpus = [fv([1, 0], "a", 0), fv([0, 1], "b", 1)]
    results = [rank_query(fv([1, 0.1], "q", 0), corpus)]
    write_rankings_csv(results, tmp_path / "r.csv")
    write_pr_csv(precision_recall_curve(results), tmp_path / "p.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "query_id,rank,corpus_id,distance,relevant"
    assert rows[1].startswith("q,1,a,") and rows[1].endswith(",1")
    assert (tmp_path / "p.csv").read_text().splitlines()[1] == "0,1,1.0,1.0"
