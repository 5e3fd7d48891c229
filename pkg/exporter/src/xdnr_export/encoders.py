"""Sentence encoders behind one interface.

Two families: a dependency-free deterministic encoder for tests and offline
runs, and sentence-transformer models (mean pooling, inputs truncated at 256
tokens) for real multilingual embeddings.

Model spec strings:
    hash:dim=384,seed=7      deterministic token-hash encoder
    <anything else>          sentence-transformers model name
"""

from __future__ import annotations

import hashlib

import numpy as np


class DeterministicEncoder:
    """Signed token-hash embeddings: unigrams and adjacent bigrams of the
    whitespace-lowercased text, each hashed to a bucket with a sign bit,
    summed and L2-normalized. Empty text maps to a fixed unit vector."""

    def __init__(self, dim: int = 384, seed: int = 0):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self.name = f"hash:dim={dim},seed={seed}"
        self._salt = f"xdnr-export:{seed}".encode("utf-8")

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.sha256(self._salt + token.encode("utf-8")).digest()
        value = int.from_bytes(digest[:8], "big")
        return value % self.dim, 1.0 if digest[8] & 1 else -1.0

    def _encode_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        tokens = text.lower().split()
        if not tokens:
            vec[0] = 1.0
            return vec
        features = list(tokens)
        features += [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
        for feat in features:
            bucket, sign = self._bucket(feat)
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[:] = 0.0
            vec[0] = 1.0
            return vec
        return vec / norm

    def encode(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.stack([self._encode_one(t) for t in texts])


class SentenceTransformerEncoder:
    """Wrapper around sentence-transformers with the export contract pinned:
    mean pooling and a 256-token input cap."""

    MAX_SEQ_LEN = 256

    def __init__(self, model_name: str, device: str = "cpu"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise RuntimeError(
                "sentence-transformers is not installed; use a hash:... model "
                "spec or install the [models] extra"
            ) from exc
        self.name = model_name
        self._model = SentenceTransformer(model_name, device=device)
        self._model.max_seq_length = self.MAX_SEQ_LEN
        self._force_mean_pooling()
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def _force_mean_pooling(self) -> None:
        for module in self._model.modules():
            if type(module).__name__ == "Pooling":
                module.pooling_mode_mean_tokens = True
                module.pooling_mode_cls_token = False
                module.pooling_mode_max_tokens = False
                module.pooling_mode_mean_sqrt_len_tokens = False

    def encode(self, texts: list[str]) -> np.ndarray:
        vectors = self._model.encode(
            list(texts), convert_to_numpy=True, show_progress_bar=False
        )
        return np.asarray(vectors, dtype=np.float64)


def make_encoder(model_spec: str):
    """Build an encoder from a model spec string."""
    if model_spec.startswith("hash:") or model_spec == "hash":
        params = {"dim": 384, "seed": 0}
        if ":" in model_spec:
            for part in model_spec.split(":", 1)[1].split(","):
                if not part:
                    continue
                key, _, value = part.partition("=")
                if key not in params:
                    raise ValueError(f"unknown hash encoder parameter {key!r}")
                params[key] = int(value)
        return DeterministicEncoder(**params)
    return SentenceTransformerEncoder(model_spec)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
