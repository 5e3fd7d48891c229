"""Tokenization, inverted index, and Okapi BM25 scoring.

This is the translate-then-BM25 baseline: the index holds each debunk's
claim+title text (or an externally supplied English translation), and the
query side is expected to arrive already translated when cross-lingual.

Scoring uses the non-negative Lucene/Elasticsearch IDF,
    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)),
and score(q, d) = sum over query term occurrences of
    idf(t) * tf / (tf + k1 * (1 - b + b * |d| / avgdl)).
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import regex

from .corpus import DebunkCorpus, doc_text
from .errors import DataError
from .ranking import RankedList, sort_entries

# Word = runs of Unicode letters, combining marks, and digits. stdlib \w
# drops Mn/Mc combining marks, which shreds Devanagari and similar scripts.
_WORD_RE = regex.compile(r"[\p{L}\p{M}\p{N}]+")

_MAGIC = b"XDNRIDX1"


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise DataError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise DataError(f"b must be in [0,1], got {self.b}")


def tokenize(text: str) -> list[str]:
    """Unicode word segmentation + one-to-one lowercasing.

    No stemming, no stopword removal; pure punctuation is dropped.
    """
    return [m.group(0).lower() for m in _WORD_RE.finditer(text)]


class InvertedIndex:
    """Immutable term -> postings index over a debunk corpus.

    postings[term] is a list of (doc ordinal, term frequency) sorted by
    ordinal; doc_ids maps ordinal back to the debunk id.
    """

    def __init__(
        self,
        doc_ids: list[str],
        doc_lengths: list[int],
        postings: dict[str, list[tuple[int, int]]],
    ):
        if len(doc_ids) != len(doc_lengths):
            raise DataError("doc_ids and doc_lengths length mismatch")
        self.doc_ids = list(doc_ids)
        self.doc_lengths = list(doc_lengths)
        self.postings = {t: list(p) for t, p in postings.items()}
        self.doc_count = len(doc_ids)
        self.avg_doc_length = (
            sum(doc_lengths) / len(doc_lengths) if doc_lengths else 0.0
        )
        for term, plist in self.postings.items():
            for ordinal, tf in plist:
                if not 0 <= ordinal < self.doc_count:
                    raise DataError(f"posting ordinal {ordinal} out of range for term {term!r}")


def build_index(
    corpus: DebunkCorpus,
    use_translated: bool = False,
    translations: Mapping[str, str] | None = None,
) -> InvertedIndex:
    """Index doc_text(d) for every debunk, in corpus order.

    With use_translated, each debunk id must resolve in the translations
    side file and the translated text is indexed instead.
    """
    if len(corpus) == 0:
        raise DataError("cannot index an empty corpus")
    if use_translated and translations is None:
        raise DataError("use_translated set but no translations provided")

    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = {}
    for ordinal, d in enumerate(corpus):
        if use_translated:
            if d.id not in translations:
                raise DataError(f"debunk {d.id!r} missing from translations side file")
            text = translations[d.id]
        else:
            text = doc_text(d)
        terms = tokenize(text)
        doc_ids.append(d.id)
        doc_lengths.append(len(terms))
        for term, tf in Counter(terms).items():
            postings.setdefault(term, []).append((ordinal, tf))
    for plist in postings.values():
        plist.sort()
    return InvertedIndex(doc_ids, doc_lengths, postings)


def idf(index: InvertedIndex, term: str) -> float:
    df = len(index.postings.get(term, ()))
    if df == 0:
        return 0.0
    n = index.doc_count
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def bm25_search(
    index: InvertedIndex,
    query: list[str],
    params: Bm25Params = Bm25Params(),
    top_k: int = 100,
    query_id: str = "",
) -> RankedList:
    """Exact BM25 over the inverted index.

    Each query term occurrence contributes independently (a duplicated term
    scores twice). Results are sorted by score descending with ties broken
    by ascending debunk id; zero-score documents are omitted.
    """
    if top_k < 1:
        raise DataError(f"top_k must be >= 1, got {top_k}")
    scores: dict[int, float] = {}
    for term in query:
        plist = index.postings.get(term)
        if not plist:
            continue
        t_idf = idf(index, term)
        for ordinal, tf in plist:
            dl = index.doc_lengths[ordinal]
            denom = tf + params.k1 * (1.0 - params.b + params.b * dl / index.avg_doc_length)
            scores[ordinal] = scores.get(ordinal, 0.0) + t_idf * tf / denom
    scored = [(index.doc_ids[o], s) for o, s in scores.items() if s > 0.0]
    entries = sort_entries(scored)[:top_k]
    return RankedList(query_id=query_id, entries=entries, stage_tag="bm25")


def _write_section(fh, payload: bytes) -> None:
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataError(f"truncated index file while reading {what}")
    return data


def _read_section(fh, what: str) -> bytes:
    (n,) = struct.unpack("<Q", _read_exact(fh, 8, f"{what} length"))
    return _read_exact(fh, n, what)


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Persist as: magic, u32 doc_count, then length-prefixed sections for
    the doc id table, doc lengths, and postings (terms in sorted byte order)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", index.doc_count))

        id_table = bytearray()
        for doc_id in index.doc_ids:
            raw = doc_id.encode("utf-8")
            id_table += struct.pack("<H", len(raw)) + raw
        _write_section(fh, bytes(id_table))

        _write_section(fh, struct.pack(f"<{index.doc_count}I", *index.doc_lengths))

        post = bytearray()
        post += struct.pack("<I", len(index.postings))
        for term in sorted(index.postings, key=lambda t: t.encode("utf-8")):
            raw = term.encode("utf-8")
            plist = index.postings[term]
            post += struct.pack("<H", len(raw)) + raw
            post += struct.pack("<I", len(plist))
            for ordinal, tf in plist:
                post += struct.pack("<II", ordinal, tf)
        _write_section(fh, bytes(post))


def load_index(path: str | Path) -> InvertedIndex:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise DataError(f"{path}: not an index file (bad magic {magic!r})")
        (doc_count,) = struct.unpack("<I", _read_exact(fh, 4, "doc_count"))

        id_table = _read_section(fh, "doc id table")
        doc_ids: list[str] = []
        off = 0
        for _ in range(doc_count):
            (n,) = struct.unpack_from("<H", id_table, off)
            off += 2
            doc_ids.append(id_table[off : off + n].decode("utf-8"))
            off += n

        lengths_raw = _read_section(fh, "doc lengths")
        doc_lengths = list(struct.unpack(f"<{doc_count}I", lengths_raw))

        post = _read_section(fh, "postings")
        off = 0
        (term_count,) = struct.unpack_from("<I", post, off)
        off += 4
        postings: dict[str, list[tuple[int, int]]] = {}
        for _ in range(term_count):
            (n,) = struct.unpack_from("<H", post, off)
            off += 2
            term = post[off : off + n].decode("utf-8")
            off += n
            (df,) = struct.unpack_from("<I", post, off)
            off += 4
            plist = []
            for _ in range(df):
                ordinal, tf = struct.unpack_from("<II", post, off)
                off += 8
                plist.append((ordinal, tf))
            postings[term] = plist
    return InvertedIndex(doc_ids, doc_lengths, postings)
