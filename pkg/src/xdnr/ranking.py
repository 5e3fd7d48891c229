"""Ranked result lists, the unit every retrieval stage and metric consumes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError


@dataclass(frozen=True)
class RankedList:
    """Ordered (debunk_id, score) results for one query.

    Rank order is authoritative. Single-stage rankers emit lists sorted by
    score descending (ties by ascending id); after re-ranking, the block of
    re-scored entries precedes the untouched tail, so scores are no longer
    globally monotone and must not be re-sorted downstream.
    """

    query_id: str
    entries: tuple[tuple[str, float], ...]
    stage_tag: str = ""
    repaired: bool = False

    def __post_init__(self):
        seen = set()
        for doc_id, score in self.entries:
            if doc_id in seen:
                raise DataError(f"duplicate doc id {doc_id!r} in ranking for query {self.query_id!r}")
            seen.add(doc_id)
            if not math.isfinite(score):
                raise DataError(f"non-finite score for doc {doc_id!r} in query {self.query_id!r}")

    def ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def sort_entries(scored: list[tuple[str, float]]) -> tuple[tuple[str, float], ...]:
    """Canonical single-stage ordering: score descending, then id ascending."""
    return tuple(sorted(scored, key=lambda e: (-e[1], e[0])))


def save_run(path: str | Path, results: list[RankedList]) -> None:
    """Write results as JSONL: {"query_id", "ranking": [{"id","score"}], "stage_tag"}."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            obj = {
                "query_id": r.query_id,
                "ranking": [{"id": d, "score": s} for d, s in r.entries],
                "stage_tag": r.stage_tag,
            }
            if r.repaired:
                obj["repaired"] = True
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_run(path: str | Path) -> list[RankedList]:
    results = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entries = tuple((e["id"], float(e["score"])) for e in obj["ranking"])
                results.append(
                    RankedList(
                        query_id=obj["query_id"],
                        entries=entries,
                        stage_tag=obj.get("stage_tag", ""),
                        repaired=bool(obj.get("repaired", False)),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed run line: {exc}") from exc
    return results
