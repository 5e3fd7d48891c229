"""Graded-relevance ranking metrics: MRR, DCG@K, nDCG@K.

Gains default to exact=2, partial=1, irrelevant/unjudged=0. DCG uses the
(2^rel - 1) / log2(rank + 1) gain; ideal DCG is computed over the query's
judged documents only. All corpus-level values are arithmetic means over
queries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

from .corpus import JudgmentLevel, JudgmentSet
from .errors import DataError
from .ranking import RankedList

DEFAULT_GAINS = {"exact": 2, "partial": 1, "irrelevant": 0}


class Qrels:
    """(query_id, debunk_id) -> integer gain >= 0; unjudged pairs score 0."""

    def __init__(self, gains: Mapping[tuple[str, str], int]):
        self._by_query: dict[str, dict[str, int]] = {}
        for (qid, did), gain in gains.items():
            if gain < 0:
                raise DataError(f"negative gain for pair ({qid!r}, {did!r})")
            self._by_query.setdefault(qid, {})[did] = int(gain)

    @classmethod
    def from_judgments(
        cls, judgments: JudgmentSet, gain_map: Mapping[str, int] | None = None
    ) -> "Qrels":
        gain_map = dict(DEFAULT_GAINS if gain_map is None else gain_map)
        return cls(
            {
                (j.query_id, j.debunk_id): gain_map[j.level.value]
                for j in judgments
            }
        )

    @classmethod
    def from_file(
        cls, path, gain_map: Mapping[str, int] | None = None
    ) -> "Qrels":
        """Parse qrels.jsonl directly, without resolving ids against corpora."""
        gain_map = dict(DEFAULT_GAINS if gain_map is None else gain_map)
        gains: dict[tuple[str, str], int] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    key = (obj["query_id"], obj["debunk_id"])
                    level = obj["level"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise DataError(f"{path}:{lineno}: malformed qrel line: {exc}") from exc
                if level not in gain_map:
                    raise DataError(f"{path}:{lineno}: unknown judgment level {level!r}")
                if key in gains:
                    raise DataError(f"{path}:{lineno}: duplicate judgment for pair {key!r}")
                gains[key] = gain_map[level]
        return cls(gains)

    def gain(self, query_id: str, debunk_id: str) -> int:
        return self._by_query.get(query_id, {}).get(debunk_id, 0)

    def judged(self, query_id: str) -> dict[str, int]:
        return dict(self._by_query.get(query_id, {}))

    def query_ids(self) -> list[str]:
        return list(self._by_query)


def _check_unique_queries(results: list[RankedList]) -> None:
    seen = set()
    for r in results:
        if r.query_id in seen:
            raise DataError(f"duplicate query id {r.query_id!r} in results")
        seen.add(r.query_id)


def reciprocal_rank(result: RankedList, qrels: Qrels) -> float:
    """1/rank of the first result with gain > 0, else 0."""
    for rank, (did, _) in enumerate(result.entries, start=1):
        if qrels.gain(result.query_id, did) > 0:
            return 1.0 / rank
    return 0.0


def mrr(results: list[RankedList], qrels: Qrels) -> float:
    _check_unique_queries(results)
    if not results:
        return 0.0
    return sum(reciprocal_rank(r, qrels) for r in results) / len(results)


def _dcg(gains_in_rank_order: list[int], k: int) -> float:
    return sum(
        (2.0**g - 1.0) / math.log2(rank + 1.0)
        for rank, g in enumerate(gains_in_rank_order[:k], start=1)
    )


def query_dcg_at_k(result: RankedList, qrels: Qrels, k: int) -> float:
    gains = [qrels.gain(result.query_id, did) for did, _ in result.entries]
    return _dcg(gains, k)


def dcg_at_k(results: list[RankedList], qrels: Qrels, k: int) -> float:
    if k < 1:
        raise DataError(f"K must be >= 1, got {k}")
    _check_unique_queries(results)
    if not results:
        return 0.0
    return sum(query_dcg_at_k(r, qrels, k) for r in results) / len(results)


def query_ndcg_at_k(result: RankedList, qrels: Qrels, k: int) -> float:
    """DCG@K over ideal DCG@K; ideal ranks all judged docs by gain descending.
    Queries whose judged gains are all zero contribute 0."""
    ideal_gains = sorted(qrels.judged(result.query_id).values(), reverse=True)
    ideal = _dcg(ideal_gains, k)
    if ideal == 0.0:
        return 0.0
    return query_dcg_at_k(result, qrels, k) / ideal


def ndcg_at_k(results: list[RankedList], qrels: Qrels, k: int) -> float:
    if k < 1:
        raise DataError(f"K must be >= 1, got {k}")
    _check_unique_queries(results)
    if not results:
        return 0.0
    return sum(query_ndcg_at_k(r, qrels, k) for r in results) / len(results)


@dataclass
class EvalReport:
    query_count: int
    mrr: float
    ndcg1: float
    ndcg5: float
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    per_language: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "query_count": self.query_count,
            "mrr": self.mrr,
            "ndcg@1": self.ndcg1,
            "ndcg@5": self.ndcg5,
            "per_language": self.per_language,
            "per_query": self.per_query,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    def to_table(self) -> str:
        """Aligned-column text table, one row per language plus the mean."""
        rows = [("language", "queries", "mrr", "ndcg@1", "ndcg@5")]
        for lang in sorted(self.per_language):
            g = self.per_language[lang]
            rows.append(
                (lang, str(int(g["queries"])), f"{g['mrr']:.4f}", f"{g['ndcg@1']:.4f}", f"{g['ndcg@5']:.4f}")
            )
        rows.append(
            ("ALL", str(self.query_count), f"{self.mrr:.4f}", f"{self.ndcg1:.4f}", f"{self.ndcg5:.4f}")
        )
        widths = [max(len(r[c]) for r in rows) for c in range(5)]
        return "\n".join(
            "  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)) for row in rows
        )


def evaluate(
    results: list[RankedList],
    qrels: Qrels,
    languages: Mapping[str, str] | None = None,
) -> EvalReport:
    """Corpus-level and per-language MRR, nDCG@1, nDCG@5.

    languages maps query_id -> language code; unmapped queries group under
    "unknown".
    """
    _check_unique_queries(results)
    languages = languages or {}
    per_query: dict[str, dict[str, float]] = {}
    groups: dict[str, list[str]] = {}
    for r in results:
        per_query[r.query_id] = {
            "rr": reciprocal_rank(r, qrels),
            "ndcg@1": query_ndcg_at_k(r, qrels, 1),
            "ndcg@5": query_ndcg_at_k(r, qrels, 5),
        }
        groups.setdefault(languages.get(r.query_id, "unknown"), []).append(r.query_id)

    def mean(qids: list[str], key: str) -> float:
        return sum(per_query[q][key] for q in qids) / len(qids) if qids else 0.0

    all_ids = [r.query_id for r in results]
    per_language = {
        lang: {
            "queries": float(len(qids)),
            "mrr": mean(qids, "rr"),
            "ndcg@1": mean(qids, "ndcg@1"),
            "ndcg@5": mean(qids, "ndcg@5"),
        }
        for lang, qids in groups.items()
    }
    return EvalReport(
        query_count=len(results),
        mrr=mean(all_ids, "rr"),
        ndcg1=mean(all_ids, "ndcg@1"),
        ndcg5=mean(all_ids, "ndcg@5"),
        per_query=per_query,
        per_language=per_language,
    )
