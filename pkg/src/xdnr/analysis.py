"""Dataset diagnostics: claim-matching candidates, domain overlap, rater
agreement, publication time gaps, and the retrieval latency benchmark."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import DebunkCorpus, JudgmentLevel, JudgmentSet, QueryClaim, QuerySet
from .dense import EmbeddingMatrix
from .errors import DataError
from .lexical import tokenize
from .metrics import Qrels, mrr
from .ranking import RankedList


@dataclass(frozen=True)
class CandidatePair:
    source_claim_id: str
    target_claim_id: str
    similarity: float


@dataclass
class LatencyReport:
    model_tag: str
    samples: list[float]  # sorted per-query wall-clock seconds
    p50: float
    p90: float
    mean: float
    mrr: float | None = None

    @property
    def sample_size(self) -> int:
        return len(self.samples)

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "sample_size": self.sample_size,
            "p50": self.p50,
            "p90": self.p90,
            "mean": self.mean,
            "mrr": self.mrr,
            "samples": self.samples,
        }


def candidate_pairs(
    claims: EmbeddingMatrix, depth: int = 7, threshold: float = 0.6
) -> list[CandidatePair]:
    """Per-claim top-`depth` cosine neighbors with similarity above threshold.

    Pairs are directional (both (a,b) and (b,a) can appear: annotation is per
    source claim). Output is canonical: source id ascending, then similarity
    descending, then target id ascending. Zero-norm rows neither source nor
    match.
    """
    if len(claims) < 2:
        raise DataError("candidate_pairs needs at least 2 claims")
    if depth < 1:
        raise DataError("depth must be >= 1")
    norms = np.linalg.norm(claims.vectors, axis=1)
    valid = norms > 0.0
    unit = np.zeros_like(claims.vectors)
    unit[valid] = claims.vectors[valid] / norms[valid][:, None]
    sims = unit @ unit.T
    np.clip(sims, -1.0, 1.0, out=sims)

    pairs: list[CandidatePair] = []
    order = sorted(range(len(claims)), key=lambda i: claims.ids[i])
    for i in order:
        if not valid[i]:
            continue
        neighbors = [
            (j, float(sims[i, j]))
            for j in range(len(claims))
            if j != i and valid[j]
        ]
        neighbors.sort(key=lambda t: (-t[1], claims.ids[t[0]]))
        for j, sim in neighbors[:depth]:
            if sim > threshold:
                pairs.append(CandidatePair(claims.ids[i], claims.ids[j], sim))
    return pairs


def save_candidate_pairs(pairs: list[CandidatePair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {"source": p.source_claim_id, "target": p.target_claim_id, "sim": p.similarity},
                    ensure_ascii=False,
                )
                + "\n"
            )


def weighted_jaccard(x: Mapping[str, float], y: Mapping[str, float]) -> float:
    """sum_t min(x_t, y_t) / sum_t max(x_t, y_t) over the union of supports."""
    for name, vec in (("x", x), ("y", y)):
        for term, w in vec.items():
            if w < 0:
                raise DataError(f"{name}[{term!r}] = {w} is negative")
    terms = set(x) | set(y)
    num = sum(min(x.get(t, 0.0), y.get(t, 0.0)) for t in terms)
    den = sum(max(x.get(t, 0.0), y.get(t, 0.0)) for t in terms)
    if den == 0.0:
        raise DataError("weighted_jaccard of two all-zero vectors")
    return num / den


def term_frequencies(texts: Iterable[str]) -> dict[str, float]:
    """Corpus-relative term frequencies (counts normalized by total tokens)."""
    counts: dict[str, int] = {}
    total = 0
    for text in texts:
        for term in tokenize(text):
            counts[term] = counts.get(term, 0) + 1
            total += 1
    if total == 0:
        return {}
    return {t: c / total for t, c in counts.items()}


def domain_overlap(test_texts: Sequence[str], train_texts: Sequence[str]) -> float:
    """Weighted Jaccard between the two corpora's relative term frequencies."""
    if not test_texts or not train_texts:
        raise DataError("domain_overlap needs two nonempty corpora")
    return weighted_jaccard(term_frequencies(test_texts), term_frequencies(train_texts))


def fleiss_kappa(table: Sequence[Sequence[int]], raters_per_item: int) -> float:
    """Fleiss kappa over an items x categories count table.

    kappa = (P_bar - P_e) / (1 - P_e). When every rating falls in a single
    category, P_e = 1 and P_bar = 1, and 1.0 is returned by convention.
    """
    if raters_per_item < 2:
        raise DataError("raters_per_item must be >= 2")
    rows = [list(map(int, row)) for row in table]
    if not rows:
        raise DataError("empty agreement table")
    n_cats = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != n_cats:
            raise DataError(f"row {i} has {len(row)} categories, expected {n_cats}")
        if any(c < 0 for c in row):
            raise DataError(f"row {i} has a negative count")
        if sum(row) != raters_per_item:
            raise DataError(
                f"row {i} sums to {sum(row)}, expected {raters_per_item} raters"
            )

    n = raters_per_item
    n_items = len(rows)
    p_item = [
        (sum(c * c for c in row) - n) / (n * (n - 1)) for row in rows
    ]
    p_bar = sum(p_item) / n_items
    p_cat = [sum(row[j] for row in rows) / (n_items * n) for j in range(n_cats)]
    p_e = sum(p * p for p in p_cat)
    if p_e == 1.0:
        if p_bar == 1.0:
            return 1.0
        raise DataError("kappa undefined: chance agreement is 1 with disagreement present")
    return (p_bar - p_e) / (1.0 - p_e)


def load_agreement_table(path: str | Path) -> tuple[list[list[int]], list[str]]:
    """CSV with header item_id,cat_1..cat_n; returns (counts, item_ids)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty agreement file") from None
        if not header or header[0] != "item_id":
            raise DataError(f"{path}: first column must be item_id")
        table: list[list[int]] = []
        item_ids: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns")
            try:
                table.append([int(c) for c in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer count: {exc}") from exc
            item_ids.append(row[0])
    return table, item_ids


@dataclass
class TimeGapStats:
    median_days: float
    fraction_debunk_first: float
    histogram: dict[str, int]
    dated_pairs: int
    undated_pairs: int

    def to_dict(self) -> dict:
        return {
            "median_days": self.median_days,
            "fraction_debunk_first": self.fraction_debunk_first,
            "histogram": self.histogram,
            "dated_pairs": self.dated_pairs,
            "undated_pairs": self.undated_pairs,
        }


def time_gap_stats(
    judgments: JudgmentSet,
    queries: QuerySet,
    debunks: DebunkCorpus,
    bin_days: int = 30,
) -> TimeGapStats:
    """Publication gaps for positive pairs: query date minus debunk date.

    Pairs where the debunk is published on or before the query date count as
    debunk-first; the median is over those gaps only. Pairs missing either
    date are excluded and counted.
    """
    gaps: list[int] = []
    dated = 0
    undated = 0
    for j in judgments:
        if j.level is JudgmentLevel.IRRELEVANT:
            continue
        q = queries[j.query_id]
        d = debunks[j.debunk_id]
        if q.created_at is None or d.published_at is None:
            undated += 1
            continue
        dated += 1
        gap = (q.created_at - d.published_at).days
        if gap >= 0:
            gaps.append(gap)
    if dated == 0:
        raise DataError("no dated positive pairs")

    histogram: dict[str, int] = {}
    for g in gaps:
        lo = (g // bin_days) * bin_days
        key = f"{lo}-{lo + bin_days - 1}"
        histogram[key] = histogram.get(key, 0) + 1
    median = float(np.median(gaps)) if gaps else 0.0
    return TimeGapStats(
        median_days=median,
        fraction_debunk_first=len(gaps) / dated,
        histogram=dict(sorted(histogram.items(), key=lambda kv: int(kv[0].split("-")[0]))),
        dated_pairs=dated,
        undated_pairs=undated,
    )


def latency_bench(
    run_query: Callable[[QueryClaim], RankedList],
    queries: QuerySet | Sequence[QueryClaim],
    warmup: int = 1,
    repeats: int = 3,
    qrels: Qrels | None = None,
    model_tag: str = "",
) -> LatencyReport:
    """Wall-clock per query after discarded warmup passes.

    The measured loop contains only query dispatch and result collection;
    index construction and embedding loads happen before this call. MRR is
    computed from the final pass when qrels are provided.
    """
    if repeats < 1:
        raise DataError("repeats must be >= 1")
    query_list = list(queries)
    if not query_list:
        raise DataError("no queries to benchmark")

    for _ in range(warmup):
        for q in query_list:
            run_query(q)

    samples: list[float] = []
    results: list[RankedList] = []
    for rep in range(repeats):
        results = []
        for q in query_list:
            t0 = time.perf_counter()
            res = run_query(q)
            samples.append(time.perf_counter() - t0)
            results.append(res)

    samples.sort()
    score = mrr(results, qrels) if qrels is not None else None
    return LatencyReport(
        model_tag=model_tag,
        samples=samples,
        p50=float(np.percentile(samples, 50)),
        p90=float(np.percentile(samples, 90)),
        mean=float(np.mean(samples)),
        mrr=score,
    )
