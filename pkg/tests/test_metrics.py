"""MRR / DCG@K / nDCG@K against hand-computed fixtures and a naive oracle."""

import math
import random

import pytest

from xdnr.errors import DataError
from xdnr.metrics import Qrels, dcg_at_k, evaluate, mrr, ndcg_at_k
from xdnr.ranking import RankedList


# --- independent reference implementations (kept deliberately naive) ---------


def naive_mrr(rankings, gains):
    """rankings: {qid: [doc ids]}, gains: {(qid, did): gain}."""
    total = 0.0
    for qid, docs in rankings.items():
        rr = 0.0
        for pos, did in enumerate(docs):
            if gains.get((qid, did), 0) > 0:
                rr = 1.0 / (pos + 1)
                break
        total += rr
    return total / len(rankings)


def naive_dcg_at_k(rankings, gains, k):
    total = 0.0
    for qid, docs in rankings.items():
        dcg = 0.0
        for pos, did in enumerate(docs):
            rank = pos + 1
            if rank > k:
                break
            g = gains.get((qid, did), 0)
            dcg += (2**g - 1) / math.log2(rank + 1)
        total += dcg
    return total / len(rankings)


def naive_ndcg_at_k(rankings, gains, k):
    total = 0.0
    for qid, docs in rankings.items():
        dcg = 0.0
        for pos, did in enumerate(docs):
            rank = pos + 1
            if rank > k:
                break
            g = gains.get((qid, did), 0)
            dcg += (2**g - 1) / math.log2(rank + 1)
        judged = sorted(
            (g for (q, _), g in gains.items() if q == qid), reverse=True
        )
        ideal = 0.0
        for pos, g in enumerate(judged[:k]):
            ideal += (2**g - 1) / math.log2(pos + 2)
        total += dcg / ideal if ideal > 0 else 0.0
    return total / len(rankings)


def as_results(rankings):
    return [
        RankedList(qid, tuple((d, float(len(docs) - i)) for i, d in enumerate(docs)))
        for qid, docs in rankings.items()
    ]


class TestMrr:
    def test_relevant_at_rank_one(self):
        qrels = Qrels({("q1", "d1"): 2})
        results = as_results({"q1": ["d1", "d2"]})
        assert mrr(results, qrels) == 1.0

    def test_ranks_one_and_four(self):
        qrels = Qrels({("q1", "a"): 1, ("q2", "z"): 2})
        results = as_results({"q1": ["a", "b", "c", "d"], "q2": ["b", "c", "d", "z"]})
        assert mrr(results, qrels) == pytest.approx(0.625, abs=1e-12)

    def test_no_relevant_contributes_zero(self):
        qrels = Qrels({("q1", "other"): 2})
        results = as_results({"q1": ["a", "b"]})
        assert mrr(results, qrels) == 0.0

    def test_duplicate_query_ids_error(self):
        qrels = Qrels({})
        results = [
            RankedList("q1", (("a", 1.0),)),
            RankedList("q1", (("b", 1.0),)),
        ]
        with pytest.raises(DataError, match="duplicate"):
            mrr(results, qrels)


class TestDcg:
    def test_all_zero_gains(self):
        qrels = Qrels({})
        results = as_results({"q1": ["a", "b", "c"]})
        assert dcg_at_k(results, qrels, 3) == 0.0

    def test_hand_computed_fixture(self):
        # gains in rank order [2, 0, 1], K=3 -> 3/log2(2) + 0 + 1/log2(4) = 3.5
        qrels = Qrels({("q1", "a"): 2, ("q1", "c"): 1})
        results = as_results({"q1": ["a", "b", "c"]})
        assert dcg_at_k(results, qrels, 3) == pytest.approx(3.5, abs=1e-12)

    def test_gain_one_at_rank_one(self):
        qrels = Qrels({("q1", "a"): 1})
        results = as_results({"q1": ["a"]})
        assert dcg_at_k(results, qrels, 1) == pytest.approx(1.0, abs=1e-12)

    def test_k_monotone(self):
        rng = random.Random(0)
        gains = {("q1", f"d{i}"): rng.randint(0, 2) for i in range(10)}
        results = as_results({"q1": [f"d{i}" for i in range(10)]})
        qrels = Qrels(gains)
        values = [dcg_at_k(results, qrels, k) for k in range(1, 11)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


class TestNdcg:
    def test_perfect_ranking(self):
        qrels = Qrels({("q1", "a"): 2, ("q1", "b"): 1, ("q1", "c"): 0})
        results = as_results({"q1": ["a", "b", "c"]})
        assert ndcg_at_k(results, qrels, 3) == pytest.approx(1.0, abs=1e-12)

    def test_hand_computed_fixture(self):
        # ranking gains [0, 2], judged gains {2}: DCG = 3/log2(3), iDCG = 3
        qrels = Qrels({("q1", "b"): 2})
        results = as_results({"q1": ["a", "b"]})
        expected = 1.0 / math.log2(3.0)
        assert ndcg_at_k(results, qrels, 2) == pytest.approx(expected, abs=1e-12)
        assert ndcg_at_k(results, qrels, 2) == pytest.approx(0.6309297535714574, abs=1e-12)

    def test_only_irrelevant_judgments_contribute_zero(self):
        qrels = Qrels({("q1", "a"): 0})
        results = as_results({"q1": ["a", "b"]})
        assert ndcg_at_k(results, qrels, 5) == 0.0

    def test_range(self):
        rng = random.Random(3)
        for _ in range(50):
            docs = [f"d{i}" for i in range(8)]
            rng.shuffle(docs)
            gains = {("q", d): rng.randint(0, 2) for d in docs if rng.random() < 0.7}
            qrels = Qrels(gains)
            results = as_results({"q": docs})
            v = ndcg_at_k(results, qrels, 5)
            assert 0.0 <= v <= 1.0 + 1e-12


def test_swap_monotonicity():
    """Swapping a higher-gain doc toward rank 1 never decreases DCG@K."""
    rng = random.Random(5)
    for _ in range(100):
        docs = [f"d{i}" for i in range(6)]
        gains = {("q", d): rng.randint(0, 2) for d in docs}
        qrels = Qrels(gains)
        order = docs[:]
        rng.shuffle(order)
        i = rng.randrange(1, len(order))
        j = rng.randrange(0, i)
        if gains[("q", order[i])] > gains[("q", order[j])]:
            before = dcg_at_k(as_results({"q": order}), qrels, 5)
            swapped = order[:]
            swapped[i], swapped[j] = swapped[j], swapped[i]
            after = dcg_at_k(as_results({"q": swapped}), qrels, 5)
            assert after >= before - 1e-12


def random_instance(rng):
    n_queries = rng.randint(1, 30)
    rankings = {}
    gains = {}
    for qi in range(n_queries):
        qid = f"q{qi}"
        docs = [f"d{di}" for di in range(rng.randint(1, 15))]
        rng.shuffle(docs)
        rankings[qid] = docs
        for d in docs:
            if rng.random() < 0.6:
                gains[(qid, d)] = rng.randint(0, 3)
        # judged docs that never got retrieved
        for extra in range(rng.randint(0, 3)):
            gains[(qid, f"x{extra}")] = rng.randint(0, 3)
    return rankings, gains


def test_oracle_equivalence_random_instances():
    rng = random.Random(2024)
    for _ in range(300):
        rankings, gains = random_instance(rng)
        results = as_results(rankings)
        qrels = Qrels(gains)
        k = rng.randint(1, 10)
        assert abs(mrr(results, qrels) - naive_mrr(rankings, gains)) < 1e-9
        assert abs(dcg_at_k(results, qrels, k) - naive_dcg_at_k(rankings, gains, k)) < 1e-9
        assert abs(ndcg_at_k(results, qrels, k) - naive_ndcg_at_k(rankings, gains, k)) < 1e-9


class TestEvaluate:
    def test_single_language_equals_corpus_row(self):
        qrels = Qrels({("q1", "a"): 2, ("q2", "b"): 1})
        results = as_results({"q1": ["a", "x"], "q2": ["x", "b"]})
        report = evaluate(results, qrels, languages={"q1": "en", "q2": "en"})
        row = report.per_language["en"]
        assert row["mrr"] == pytest.approx(report.mrr)
        assert row["ndcg@1"] == pytest.approx(report.ndcg1)
        assert row["ndcg@5"] == pytest.approx(report.ndcg5)

    def test_missing_language_grouped_unknown(self):
        qrels = Qrels({("q1", "a"): 1})
        results = as_results({"q1": ["a"]})
        report = evaluate(results, qrels, languages={})
        assert "unknown" in report.per_language

    def test_mean_identity(self):
        qrels = Qrels({("q1", "a"): 2, ("q2", "b"): 1, ("q3", "c"): 1})
        results = as_results({"q1": ["a"], "q2": ["x", "b"], "q3": ["y", "z", "c"]})
        report = evaluate(results, qrels, languages={"q1": "en", "q2": "hi", "q3": "hi"})
        per_q = report.per_query
        assert report.mrr == pytest.approx(
            sum(v["rr"] for v in per_q.values()) / 3, abs=1e-12
        )
        assert report.query_count == 3

    def test_report_serialization(self):
        qrels = Qrels({("q1", "a"): 1})
        report = evaluate(as_results({"q1": ["a"]}), qrels, {"q1": "pt"})
        payload = report.to_dict()
        assert payload["ndcg@1"] == 1.0
        table = report.to_table()
        assert "pt" in table and "ALL" in table

    def test_qrels_from_file(self, tmp_path, corpus_files):
        _, _, qrels_path = corpus_files
        qrels = Qrels.from_file(qrels_path)
        assert qrels.gain("q1", "d1") == 2
        assert qrels.gain("q1", "d2") == 1
        assert qrels.gain("q2", "d6") == 0
        assert qrels.gain("q1", "unjudged") == 0
