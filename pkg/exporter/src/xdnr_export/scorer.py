"""Scorer service speaking the engine's line-delimited JSON protocol.

The service announces {"proto": "xdnr-scorer", "version": 1} on stdout, then
answers one response line per request line until stdin closes. Malformed
requests never crash the loop; they get {"error": ...} objects.

Pair mode scores (query, doc) by encoder cosine. Listwise mode numbers the
candidates into a listwise re-ranking prompt, sends it to the configured LLM
transport, and parses the returned ranking back into candidate ids; without
a transport it falls back to ranking by encoder cosine.
"""

from __future__ import annotations

import json
import re
import subprocess
import sys
from typing import Callable, Sequence

import numpy as np

from .encoders import cosine

PROTO_LINE = {"proto": "xdnr-scorer", "version": 1}

_INDEX_RE = re.compile(r"\[(\d+)\]")
_BARE_INT_RE = re.compile(r"\b(\d+)\b")


def build_listwise_prompt(query: str, candidates: Sequence[dict]) -> str:
    """Number the candidate passages and ask for a ranking like [2] > [1]."""
    lines = [
        "The following passages are candidate debunks for a claim.",
        f"Claim: {query}",
        "",
    ]
    for i, cand in enumerate(candidates, start=1):
        lines.append(f"[{i}] {cand['text']}")
    lines += [
        "",
        f"Rank the {len(candidates)} passages above from most to least"
        " relevant to the claim. Answer only with the ranking, for example:"
        " [2] > [1] > [3].",
    ]
    return "\n".join(lines)


def parse_ranking_reply(reply: str, candidate_ids: Sequence[str]) -> list[str]:
    """Map a ranking reply back to candidate ids.

    Prefers bracketed indices ("[2] > [1]", numbered lists); falls back to
    bare integers. 1-based indices out of range are ignored; duplicates keep
    the first occurrence. Raises ValueError when nothing usable remains.
    """
    matches = _INDEX_RE.findall(reply)
    if not matches:
        matches = _BARE_INT_RE.findall(reply)
    order: list[str] = []
    seen: set[int] = set()
    for token in matches:
        idx = int(token)
        if not 1 <= idx <= len(candidate_ids) or idx in seen:
            continue
        seen.add(idx)
        order.append(candidate_ids[idx - 1])
    if not order:
        raise ValueError(f"no candidate indices found in reply: {reply[:200]!r}")
    return order


def command_transport(cmd: list[str], timeout: float = 120.0) -> Callable[[str], str]:
    """LLM endpoint as a child process: prompt on stdin, reply on stdout."""

    def send(prompt: str) -> str:
        proc = subprocess.run(
            cmd, input=prompt, capture_output=True, text=True, timeout=timeout
        )
        if proc.returncode != 0:
            raise RuntimeError(f"llm command failed with code {proc.returncode}")
        return proc.stdout

    return send


class ScorerService:
    def __init__(self, mode: str, encoder, llm: Callable[[str], str] | None = None):
        if mode not in ("pair", "listwise"):
            raise ValueError(f"unknown scorer mode {mode!r}")
        self.mode = mode
        self.encoder = encoder
        self.llm = llm

    def _score_pair(self, request: dict) -> dict:
        query, doc = request["query"], request["doc"]
        vecs = self.encoder.encode([query, doc])
        return {"id": request["id"], "score": cosine(vecs[0], vecs[1])}

    def _rank_by_cosine(self, query: str, candidates: Sequence[dict]) -> list[str]:
        vecs = self.encoder.encode([query] + [c["text"] for c in candidates])
        scored = [
            (cosine(vecs[0], vecs[i + 1]), i) for i in range(len(candidates))
        ]
        scored.sort(key=lambda t: (-t[0], t[1]))
        return [candidates[i]["id"] for _, i in scored]

    def _score_list(self, request: dict) -> dict:
        candidates = request["candidates"]
        if not isinstance(candidates, list) or not candidates:
            raise ValueError("candidates must be a nonempty list")
        ids = [c["id"] for c in candidates]
        if self.llm is None:
            return {"order": self._rank_by_cosine(request["query"], candidates)}
        prompt = build_listwise_prompt(request["query"], candidates)
        reply = self.llm(prompt)
        return {"order": parse_ranking_reply(reply, ids)}

    def handle_line(self, line: str) -> dict:
        """One request line -> one response object; never raises."""
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            return {"error": f"malformed request: {exc.msg}"}
        if not isinstance(request, dict):
            return {"error": "request is not an object"}
        try:
            rtype = request.get("type")
            if rtype == "pair":
                if self.mode != "pair":
                    return {"error": "this scorer runs in listwise mode"}
                return self._score_pair(request)
            if rtype == "list":
                if self.mode != "listwise":
                    return {"error": "this scorer runs in pair mode"}
                return self._score_list(request)
            return {"error": f"unknown request type: {rtype!r}"}
        except (KeyError, TypeError, ValueError) as exc:
            return {"error": f"bad request: {exc}"}
        except Exception as exc:  # keep the service alive no matter what
            return {"error": f"internal scorer error: {exc}"}

    def serve(self, stdin=None, stdout=None) -> int:
        stdin = stdin if stdin is not None else sys.stdin
        stdout = stdout if stdout is not None else sys.stdout
        stdout.write(json.dumps(PROTO_LINE) + "\n")
        stdout.flush()
        for line in stdin:
            if not line.strip():
                continue
            response = self.handle_line(line)
            stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
            stdout.flush()
        return 0
