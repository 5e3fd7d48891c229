"""Canonical data model: debunks, query claims, graded judgments, splits, train pairs.

File formats are JSONL (UTF-8, one object per line):
  debunks.jsonl  {"id","lang","claim","title","published_at"?,"source"?}
  queries.jsonl  {"id","lang","text","text_en"?,"created_at"?}
  qrels.jsonl    {"query_id","debunk_id","level": "exact"|"partial"|"irrelevant"}
  splits.json    {"test_query_ids": [...], "validation_fraction": 0.1, "seed": 42}
"""

from __future__ import annotations

import datetime as dt
import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping

from .errors import DataError

_LANG_RE = re.compile(r"^[a-z]{2}$")


class JudgmentLevel(Enum):
    EXACT = "exact"
    PARTIAL = "partial"
    IRRELEVANT = "irrelevant"


@dataclass(frozen=True)
class Debunk:
    """One fact-checking article; the retrieval document unit."""

    id: str
    lang: str
    claim: str
    title: str
    published_at: dt.date | None = None
    source_org: str | None = None

    def __post_init__(self):
        if not self.id:
            raise DataError("debunk with empty id")
        if not self.claim and not self.title:
            raise DataError(f"debunk {self.id!r}: claim and title both empty")
        if not _LANG_RE.match(self.lang):
            raise DataError(f"debunk {self.id!r}: lang {self.lang!r} is not a 2-letter lowercase code")


@dataclass(frozen=True)
class QueryClaim:
    """One misinformation tweet used as a query.

    text_en is an optional machine translation supplied externally; the
    engine never translates.
    """

    id: str
    lang: str
    text: str
    text_en: str | None = None
    created_at: dt.date | None = None

    def __post_init__(self):
        if not self.id:
            raise DataError("query with empty id")
        if not self.text:
            raise DataError(f"query {self.id!r}: empty text")
        if not _LANG_RE.match(self.lang):
            raise DataError(f"query {self.id!r}: lang {self.lang!r} is not a 2-letter lowercase code")


@dataclass(frozen=True)
class RelevanceJudgment:
    query_id: str
    debunk_id: str
    level: JudgmentLevel


@dataclass(frozen=True)
class SplitSpec:
    test_query_ids: frozenset[str]
    validation_fraction: float = 0.10
    seed: int = 42


@dataclass(frozen=True)
class TrainPair:
    query_id: str
    debunk_id: str
    label: float


@dataclass(frozen=True)
class LabelMap:
    """Numeric training labels per judgment level, in cosine's usable [0,1] range."""

    exact: float = 1.0
    partial: float = 0.5
    negative: float = 0.0

    def __post_init__(self):
        for name in ("exact", "partial", "negative"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"label_map.{name}={v} outside [0,1]")


class DebunkCorpus:
    """Immutable id-keyed debunk collection, preserving file order."""

    def __init__(self, debunks: list[Debunk]):
        self._by_id: dict[str, Debunk] = {}
        for d in debunks:
            if d.id in self._by_id:
                raise DataError(f"duplicate debunk id {d.id!r}")
            self._by_id[d.id] = d

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[Debunk]:
        return iter(self._by_id.values())

    def __contains__(self, debunk_id: str) -> bool:
        return debunk_id in self._by_id

    def __getitem__(self, debunk_id: str) -> Debunk:
        try:
            return self._by_id[debunk_id]
        except KeyError:
            raise DataError(f"unknown debunk id {debunk_id!r}") from None

    def ids(self) -> list[str]:
        return list(self._by_id)


class QuerySet:
    """Immutable id-keyed query collection, preserving file order."""

    def __init__(self, queries: list[QueryClaim]):
        self._by_id: dict[str, QueryClaim] = {}
        for q in queries:
            if q.id in self._by_id:
                raise DataError(f"duplicate query id {q.id!r}")
            self._by_id[q.id] = q

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[QueryClaim]:
        return iter(self._by_id.values())

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._by_id

    def __getitem__(self, query_id: str) -> QueryClaim:
        try:
            return self._by_id[query_id]
        except KeyError:
            raise DataError(f"unknown query id {query_id!r}") from None

    def ids(self) -> list[str]:
        return list(self._by_id)


class JudgmentSet:
    """Graded (query, debunk) judgments with unique pairs."""

    def __init__(self, judgments: list[RelevanceJudgment]):
        self._all: tuple[RelevanceJudgment, ...] = tuple(judgments)
        self._by_query: dict[str, list[RelevanceJudgment]] = {}
        seen: set[tuple[str, str]] = set()
        for j in judgments:
            key = (j.query_id, j.debunk_id)
            if key in seen:
                raise DataError(f"duplicate judgment for pair {key!r}")
            seen.add(key)
            self._by_query.setdefault(j.query_id, []).append(j)

    def __len__(self) -> int:
        return len(self._all)

    def __iter__(self) -> Iterator[RelevanceJudgment]:
        return iter(self._all)

    def for_query(self, query_id: str) -> list[RelevanceJudgment]:
        return list(self._by_query.get(query_id, []))

    def counts(self) -> dict[str, int]:
        out = {level.value: 0 for level in JudgmentLevel}
        for j in self._all:
            out[j.level.value] += 1
        return out


@dataclass(frozen=True)
class QuerySplit:
    """One side of a train/validation/test partition.

    banned_debunk_ids are debunks Exact/Partial-linked to a test query;
    positives referencing them are excluded from training pairs.
    excluded_judgment_count is how many Exact/Partial judgments of this
    split's queries were dropped by that rule.
    """

    name: str
    query_ids: tuple[str, ...]
    banned_debunk_ids: frozenset[str] = frozenset()
    excluded_judgment_count: int = 0


def _parse_date(value, where: str) -> dt.date | None:
    if value is None:
        return None
    try:
        return dt.date.fromisoformat(value)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: bad date {value!r} (expected YYYY-MM-DD)") from exc


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected an object per line")
            yield lineno, obj


def load_debunks(path: str | Path) -> DebunkCorpus:
    debunks: list[Debunk] = []
    first_line: dict[str, int] = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            d = Debunk(
                id=obj["id"],
                lang=obj["lang"],
                claim=obj.get("claim", ""),
                title=obj.get("title", ""),
                published_at=_parse_date(obj.get("published_at"), f"{path}:{lineno}"),
                source_org=obj.get("source"),
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
        if d.id in first_line:
            raise DataError(
                f"{path}: duplicate debunk id {d.id!r} at lines {first_line[d.id]} and {lineno}"
            )
        first_line[d.id] = lineno
        debunks.append(d)
    return DebunkCorpus(debunks)


def load_queries(path: str | Path) -> QuerySet:
    queries: list[QueryClaim] = []
    first_line: dict[str, int] = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            q = QueryClaim(
                id=obj["id"],
                lang=obj["lang"],
                text=obj["text"],
                text_en=obj.get("text_en"),
                created_at=_parse_date(obj.get("created_at"), f"{path}:{lineno}"),
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
        if q.id in first_line:
            raise DataError(
                f"{path}: duplicate query id {q.id!r} at lines {first_line[q.id]} and {lineno}"
            )
        first_line[q.id] = lineno
        queries.append(q)
    return QuerySet(queries)


def load_qrels(path: str | Path, queries: QuerySet, debunks: DebunkCorpus) -> JudgmentSet:
    judgments: list[RelevanceJudgment] = []
    for lineno, obj in _iter_jsonl(path):
        try:
            qid, did, level_str = obj["query_id"], obj["debunk_id"], obj["level"]
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
        try:
            level = JudgmentLevel(level_str)
        except ValueError:
            raise DataError(f"{path}:{lineno}: unknown judgment level {level_str!r}") from None
        if qid not in queries:
            raise DataError(f"{path}:{lineno}: dangling query id {qid!r}")
        if did not in debunks:
            raise DataError(f"{path}:{lineno}: dangling debunk id {did!r}")
        judgments.append(RelevanceJudgment(qid, did, level))
    return JudgmentSet(judgments)


def load_corpus(
    debunks_path: str | Path, queries_path: str | Path, qrels_path: str | Path
) -> tuple[DebunkCorpus, QuerySet, JudgmentSet]:
    """Load and cross-validate the three corpus files."""
    debunks = load_debunks(debunks_path)
    queries = load_queries(queries_path)
    judgments = load_qrels(qrels_path, queries, debunks)
    return debunks, queries, judgments


def load_split_spec(path: str | Path) -> SplitSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed JSON: {exc.msg}") from exc
    try:
        return SplitSpec(
            test_query_ids=frozenset(obj["test_query_ids"]),
            validation_fraction=float(obj.get("validation_fraction", 0.10)),
            seed=int(obj.get("seed", 42)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad split spec: {exc}") from exc


def split(
    queries: QuerySet, judgments: JudgmentSet, spec: SplitSpec
) -> tuple[QuerySplit, QuerySplit, QuerySplit]:
    """Partition queries into (train, validation, test).

    Test membership comes from the spec's explicit id list. Validation is a
    seeded uniform sample of floor(fraction * |non-test|) queries. Debunks
    Exact/Partial-linked to any test query are banned as training positives;
    the count of affected judgments is recorded on the returned splits.
    """
    if not spec.test_query_ids:
        raise DataError("test set empty")
    if not 0.0 < spec.validation_fraction < 1.0:
        raise DataError(f"validation_fraction {spec.validation_fraction} outside (0,1)")
    unknown = sorted(qid for qid in spec.test_query_ids if qid not in queries)
    if unknown:
        raise DataError(f"test query ids not in query set: {unknown[:5]}")

    all_ids = queries.ids()
    test_ids = tuple(q for q in all_ids if q in spec.test_query_ids)
    non_test = [q for q in all_ids if q not in spec.test_query_ids]
    if not non_test:
        raise DataError("empty training set: test ids cover all queries")

    n_val = int(spec.validation_fraction * len(non_test))
    rng = random.Random(spec.seed)
    val_ids = set(rng.sample(non_test, n_val))
    validation_ids = tuple(q for q in non_test if q in val_ids)
    train_ids = tuple(q for q in non_test if q not in val_ids)

    banned = frozenset(
        j.debunk_id
        for qid in test_ids
        for j in judgments.for_query(qid)
        if j.level is not JudgmentLevel.IRRELEVANT
    )

    def count_excluded(ids: tuple[str, ...]) -> int:
        return sum(
            1
            for qid in ids
            for j in judgments.for_query(qid)
            if j.level is not JudgmentLevel.IRRELEVANT and j.debunk_id in banned
        )

    train = QuerySplit("train", train_ids, banned, count_excluded(train_ids))
    validation = QuerySplit("validation", validation_ids, banned, count_excluded(validation_ids))
    test = QuerySplit("test", test_ids)
    return train, validation, test


def build_train_pairs(
    train: QuerySplit,
    judgments: JudgmentSet,
    corpus: DebunkCorpus,
    negatives_per_query: int,
    label_map: LabelMap = LabelMap(),
    seed: int = 0,
    explicit_irrelevant_negatives: bool = False,
) -> list[TrainPair]:
    """Build labeled (query, debunk) pairs for one split.

    Every Exact/Partial judgment of a split query becomes a positive (unless
    its debunk is banned by the test-leakage rule). Negatives are drawn
    uniformly without replacement from debunks with no Exact/Partial judgment
    for the query. With explicit_irrelevant_negatives, Irrelevant-judged pairs
    are emitted with the negative label and removed from the sampling pool.

    Output order is fixed: queries in split order; per query, positives sorted
    by debunk id, then explicit irrelevants sorted by debunk id, then sampled
    negatives in draw order. Identical inputs + seed give an identical list.
    """
    if negatives_per_query < 0:
        raise DataError("negatives_per_query must be >= 0")
    rng = random.Random(seed)
    all_debunk_ids = sorted(corpus.ids())
    level_label = {
        JudgmentLevel.EXACT: label_map.exact,
        JudgmentLevel.PARTIAL: label_map.partial,
    }

    pairs: list[TrainPair] = []
    for qid in train.query_ids:
        judged = judgments.for_query(qid)
        positive_ids = {
            j.debunk_id for j in judged if j.level is not JudgmentLevel.IRRELEVANT
        }
        irrelevant_ids = {
            j.debunk_id for j in judged if j.level is JudgmentLevel.IRRELEVANT
        }

        for j in sorted(judged, key=lambda j: j.debunk_id):
            if j.level is JudgmentLevel.IRRELEVANT:
                continue
            if j.debunk_id in train.banned_debunk_ids:
                continue  # leakage rule: linked to a test query
            pairs.append(TrainPair(qid, j.debunk_id, level_label[j.level]))

        if explicit_irrelevant_negatives:
            for did in sorted(irrelevant_ids):
                pairs.append(TrainPair(qid, did, label_map.negative))

        excluded = positive_ids | (irrelevant_ids if explicit_irrelevant_negatives else set())
        eligible = [d for d in all_debunk_ids if d not in excluded]
        if len(eligible) < negatives_per_query:
            raise DataError(
                f"query {qid!r}: only {len(eligible)} debunks eligible as negatives, "
                f"need {negatives_per_query}"
            )
        for did in rng.sample(eligible, negatives_per_query):
            pairs.append(TrainPair(qid, did, label_map.negative))
    return pairs


def doc_text(d: Debunk) -> str:
    """THE retrieval/ranking text for all models: claim, a space, title."""
    if not d.title:
        return d.claim
    if not d.claim:
        return d.title
    return f"{d.claim} {d.title}"


def load_translations(path: str | Path) -> dict[str, str]:
    """translations.jsonl: {"id","text_en"} keyed by debunk or query id."""
    out: dict[str, str] = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            out[obj["id"]] = obj["text_en"]
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
    return out
