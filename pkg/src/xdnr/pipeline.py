"""Multistage retrieval: stage-1 candidate generation plus depth-K re-ranking.

Re-ranking permutes the top-K stage-1 candidates and never imports or drops
ids; ranks K+1..top_k keep their stage-1 order and scores. Two re-ranker
families are supported: pair scorers (one score per (query, doc) pair) and
listwise re-rankers (one permutation for the whole candidate list).

External scorers are child processes speaking line-delimited JSON on
stdin/stdout. The child announces itself first:
    {"proto": "xdnr-scorer", "version": 1}
then answers
    {"type":"pair","id":...,"query":...,"doc":...}   -> {"id":..., "score": float}
    {"type":"list","query":...,"candidates":[{"id","text"},...]} -> {"order":[ids]}
or reports {"error": str} for requests it cannot serve.
"""

from __future__ import annotations

import json
import select
import subprocess
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

from .corpus import DebunkCorpus, QueryClaim, doc_text
from .errors import DataError, ProtocolError, ScorerError
from .metrics import Qrels
from .ranking import RankedList

PROTO_NAME = "xdnr-scorer"
PROTO_VERSION = 1


class ScorerKind(Enum):
    PASS_THROUGH = "passthrough"
    EXTERNAL_PAIR = "pair"
    EXTERNAL_LISTWISE = "listwise"
    ORACLE_QRELS = "oracle"


@dataclass(frozen=True)
class RerankConfig:
    top_k_stage1: int = 100
    rerank_depth: int = 20
    scorer: ScorerKind = ScorerKind.PASS_THROUGH

    def __post_init__(self):
        if not 1 <= self.rerank_depth <= self.top_k_stage1:
            raise DataError(
                f"rerank depth {self.rerank_depth} outside [1, {self.top_k_stage1}]"
            )


@dataclass(frozen=True)
class PairInput:
    """Cross-encoder style input: original-language query text, claim+title doc text."""

    query_text: str
    doc_text: str


class Stage1Ranker(Protocol):
    tag: str

    def search(self, query: QueryClaim, top_k: int) -> RankedList: ...


class Bm25Stage1:
    """Stage-1 over the inverted index; prefers the supplied translation."""

    def __init__(self, index, params=None, prefer_translated: bool = True,
                 query_translations: dict[str, str] | None = None):
        from .lexical import Bm25Params, bm25_search, tokenize

        self._index = index
        self._params = params or Bm25Params()
        self._prefer_translated = prefer_translated
        self._query_translations = query_translations or {}
        self._search = bm25_search
        self._tokenize = tokenize
        self.tag = "bm25"

    def _query_text(self, query: QueryClaim) -> str:
        if self._prefer_translated:
            if query.id in self._query_translations:
                return self._query_translations[query.id]
            if query.text_en:
                return query.text_en
        return query.text

    def search(self, query: QueryClaim, top_k: int) -> RankedList:
        terms = self._tokenize(self._query_text(query))
        result = self._search(self._index, terms, self._params, top_k, query_id=query.id)
        return result


class DenseStage1:
    """Stage-1 over a dense index; query vectors come from a matrix or an embed fn."""

    def __init__(self, index, query_vectors=None, embed_fn: Callable | None = None,
                 projection=None):
        from .dense import dense_search

        if query_vectors is None and embed_fn is None:
            raise DataError("DenseStage1 needs query_vectors or embed_fn")
        self._index = index
        self._query_vectors = query_vectors
        self._embed_fn = embed_fn
        self._projection = projection
        self._search = dense_search
        self.tag = "dense"

    def search(self, query: QueryClaim, top_k: int) -> RankedList:
        if self._query_vectors is not None and query.id in self._query_vectors:
            vec = self._query_vectors.row(query.id)
        elif self._embed_fn is not None:
            vec = self._embed_fn(query.text)
        else:
            raise DataError(f"no vector for query {query.id!r}")
        if self._projection is not None:
            vec = self._projection.forward(vec)
        return self._search(self._index, vec, top_k, query_id=query.id)


class PassThroughScorer:
    """Identity re-ranker: keeps stage-1 scores and order."""

    tag = "passthrough"

    def score_pairs(self, query: QueryClaim, ids: Sequence[str],
                    inputs: Sequence[PairInput], stage1_scores: Sequence[float]) -> list[float]:
        return list(stage1_scores)


class OracleQrelsScorer:
    """Scores each candidate by its graded relevance; optimal within depth K."""

    tag = "oracle"

    def __init__(self, qrels: Qrels):
        self._qrels = qrels

    def score_pairs(self, query: QueryClaim, ids: Sequence[str],
                    inputs: Sequence[PairInput], stage1_scores: Sequence[float]) -> list[float]:
        return [float(self._qrels.gain(query.id, did)) for did in ids]


class ExternalPairScorer:
    """Pair scorer backed by a scorer connection (one request per candidate)."""

    tag = "external-pair"
    needs_texts = True

    def __init__(self, conn: "ScorerConnection"):
        self._conn = conn

    def score_pairs(self, query: QueryClaim, ids: Sequence[str],
                    inputs: Sequence[PairInput], stage1_scores: Sequence[float]) -> list[float]:
        scores = []
        for did, pair in zip(ids, inputs):
            resp = self._conn.request(
                {"type": "pair", "id": did, "query": pair.query_text, "doc": pair.doc_text}
            )
            scores.append(validate_pair_response(resp, did))
        return scores


def make_pair_inputs(
    query: QueryClaim, candidates: RankedList, corpus: DebunkCorpus
) -> list[PairInput]:
    """One PairInput per candidate, order preserved.

    The query side is always the original-language text; the doc side is the
    claim+title text, matching the cross-encoder input layout."""
    return [
        PairInput(query_text=query.text, doc_text=doc_text(corpus[did]))
        for did, _ in candidates.entries
    ]


def repair_permutation(order: Sequence[str], candidate_ids: Sequence[str]) -> tuple[list[str], bool]:
    """Canonical repair of an external permutation.

    Foreign ids are dropped, duplicates keep their first occurrence, and
    missing ids are appended in stage-1 order. Returns (ids, repaired_flag).
    """
    known = set(candidate_ids)
    seen: set[str] = set()
    repaired_order: list[str] = []
    dirty = False
    for did in order:
        if did not in known:
            dirty = True
            continue
        if did in seen:
            dirty = True
            continue
        seen.add(did)
        repaired_order.append(did)
    for did in candidate_ids:
        if did not in seen:
            dirty = True
            repaired_order.append(did)
    return repaired_order, dirty


def listwise_rerank(
    query: QueryClaim,
    candidates: RankedList,
    protocol: "ScorerConnection",
    corpus: DebunkCorpus,
) -> RankedList:
    """Send the whole candidate list in one request and apply the returned
    permutation (repaired if malformed). Scores become descending positions."""
    if not candidates.entries:
        raise DataError("listwise_rerank needs a nonempty candidate list")
    request = {
        "type": "list",
        "query": query.text,
        "candidates": [
            {"id": did, "text": doc_text(corpus[did])} for did, _ in candidates.entries
        ],
    }
    resp = protocol.request(request)
    order = validate_list_response(resp)
    candidate_ids = candidates.ids()
    repaired_order, dirty = repair_permutation(order, candidate_ids)
    n = len(repaired_order)
    entries = tuple((did, float(n - i)) for i, did in enumerate(repaired_order))
    return RankedList(
        query_id=query.id,
        entries=entries,
        stage_tag=candidates.stage_tag + ";listwise",
        repaired=dirty,
    )


def retrieve(
    query: QueryClaim,
    stage1: Stage1Ranker,
    config: RerankConfig,
    scorer=None,
    corpus: DebunkCorpus | None = None,
) -> RankedList:
    """Run the full multistage pipeline for one query.

    The top rerank_depth candidates are re-scored and reordered among
    themselves (stable: ties keep stage-1 order); everything below keeps its
    stage-1 order and scores, strictly after the re-ranked block.
    """
    stage1_list = stage1.search(query, config.top_k_stage1)
    tag = (
        f"stage1={stage1.tag};scorer={config.scorer.value};"
        f"K={config.rerank_depth};top_k={config.top_k_stage1}"
    )
    if config.scorer is ScorerKind.PASS_THROUGH or not stage1_list.entries:
        return RankedList(query.id, stage1_list.entries, stage_tag=tag)

    k = min(config.rerank_depth, len(stage1_list.entries))
    head_entries = stage1_list.entries[:k]
    tail_entries = stage1_list.entries[k:]
    head_list = RankedList(query.id, head_entries, stage_tag=stage1_list.stage_tag)

    try:
        if config.scorer is ScorerKind.EXTERNAL_LISTWISE:
            if corpus is None:
                raise DataError("listwise re-ranking requires the debunk corpus for texts")
            reranked = listwise_rerank(query, head_list, scorer, corpus)
            new_head = reranked.entries
            repaired = reranked.repaired
        else:
            ids = [did for did, _ in head_entries]
            stage1_scores = [s for _, s in head_entries]
            if corpus is not None:
                inputs = make_pair_inputs(query, head_list, corpus)
            elif getattr(scorer, "needs_texts", False):
                raise DataError("this scorer requires the debunk corpus for pair texts")
            else:
                inputs = [None] * len(ids)  # scorer declared it ignores texts
            new_scores = scorer.score_pairs(query, ids, inputs, stage1_scores)
            if len(new_scores) != len(ids):
                raise ScorerError(
                    f"scorer returned {len(new_scores)} scores for {len(ids)} candidates"
                )
            # Stable by stage-1 position: equal scores keep their stage-1 order.
            ranked = sorted(
                range(len(ids)), key=lambda i: (-float(new_scores[i]), i)
            )
            new_head = tuple((ids[i], float(new_scores[i])) for i in ranked)
            repaired = False
    except ScorerError as exc:
        if exc.stage1 is None:
            exc.stage1 = stage1_list
        raise
    except DataError:
        raise
    except Exception as exc:  # external process misbehavior -> recoverable
        raise ScorerError(f"scorer failed: {exc}", stage1=stage1_list) from exc

    return RankedList(query.id, new_head + tail_entries, stage_tag=tag, repaired=repaired)


# --- wire protocol -----------------------------------------------------------


def validate_handshake(line: str) -> dict:
    obj = _parse_line(line, "handshake")
    if obj.get("proto") != PROTO_NAME or obj.get("version") != PROTO_VERSION:
        raise ProtocolError(f"bad handshake: {line.strip()!r}")
    return obj


def _parse_line(line: str, what: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed {what} line: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError(f"{what} line is not an object")
    return obj


def validate_pair_response(obj: dict, expected_id: str) -> float:
    """Check a pair response object; returns the score."""
    if "error" in obj:
        raise ScorerError(f"scorer error: {obj['error']}")
    if obj.get("id") != expected_id:
        raise ProtocolError(
            f"pair response id {obj.get('id')!r} does not match request {expected_id!r}"
        )
    score = obj.get("score")
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise ProtocolError(f"pair response score {score!r} is not a number")
    return float(score)


def validate_list_response(obj: dict) -> list[str]:
    """Check a listwise response object; returns the raw (unrepaired) order."""
    if "error" in obj:
        raise ScorerError(f"scorer error: {obj['error']}")
    order = obj.get("order")
    if not isinstance(order, list) or not all(isinstance(x, str) for x in order):
        raise ProtocolError(f"list response order {order!r} is not a list of ids")
    if not order:
        raise ScorerError("empty listwise response")
    return order


def validate_response_line(line: str, request: dict) -> dict:
    """Protocol validator for one raw response line against its request.

    Accepts well-formed results and well-formed {"error": ...} objects;
    raises ProtocolError for anything else.
    """
    obj = _parse_line(line, "response")
    if "error" in obj:
        if not isinstance(obj["error"], str):
            raise ProtocolError("error field must be a string")
        return obj
    if request.get("type") == "pair":
        validate_pair_response(obj, request["id"])
    elif request.get("type") == "list":
        validate_list_response(obj)
    else:
        raise ProtocolError(f"unknown request type {request.get('type')!r}")
    return obj


class ScorerConnection:
    """One child-process scorer speaking the line protocol.

    Used by one pipeline at a time; callers pool connections for
    concurrency.
    """

    def __init__(self, cmd: list[str], timeout: float = 30.0):
        self._timeout = timeout
        try:
            self._proc = subprocess.Popen(
                cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ScorerError(f"cannot start scorer {cmd!r}: {exc}") from exc
        validate_handshake(self._read_line())

    def _read_line(self) -> str:
        ready, _, _ = select.select([self._proc.stdout], [], [], self._timeout)
        if not ready:
            raise ScorerError(f"scorer timed out after {self._timeout}s")
        line = self._proc.stdout.readline()
        if not line:
            raise ScorerError("scorer closed its output stream")
        return line

    def request(self, obj: dict) -> dict:
        try:
            self._proc.stdin.write(json.dumps(obj, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ScorerError(f"scorer transport failure: {exc}") from exc
        return _parse_line(self._read_line(), "response")

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
