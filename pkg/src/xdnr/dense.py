"""Id-aligned dense vectors and exact cosine nearest-neighbor search.

Embeddings are precomputed inputs from any provider; this module never sees
tokens except in hash_embed, the deterministic test embedder. Search is an
exact full scan: at ~30K documents ANN structures buy nothing and would
break the oracle tests.

Binary embedding file: magic "XDNREMB1", little-endian u32 dim, u32 count,
then per row a u16 id length, the UTF-8 id bytes, and dim f32 values.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .ranking import RankedList, sort_entries

_MAGIC = b"XDNREMB1"


@dataclass
class EmbeddingMatrix:
    ids: list[str]
    vectors: np.ndarray  # (len(ids), dim), float64
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise DataError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        if self.vectors.shape[0] != len(self.ids):
            raise DataError(
                f"row count {self.vectors.shape[0]} != id count {len(self.ids)}"
            )
        if self.dim < 1:
            raise DataError("embedding dim must be positive")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate ids in embedding matrix")
        if not np.all(np.isfinite(self.vectors)):
            raise DataError("embedding matrix contains NaN/Inf")
        self._row: dict[str, int] = {i: n for n, i in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row(self, vec_id: str) -> np.ndarray:
        try:
            return self.vectors[self._row[vec_id]]
        except KeyError:
            raise DataError(f"unknown embedding id {vec_id!r}") from None

    def __contains__(self, vec_id: str) -> bool:
        return vec_id in self._row

    def __len__(self) -> int:
        return len(self.ids)


class DenseIndex:
    """Search handle over an EmbeddingMatrix with precomputed row norms.

    Zero-norm rows are excluded from search and reported, not errored:
    real exported embeddings may contain degenerate rows.
    """

    def __init__(self, matrix: EmbeddingMatrix):
        self.matrix = matrix
        self.norms = np.linalg.norm(matrix.vectors, axis=1)
        self.zero_norm_ids = [
            matrix.ids[i] for i in np.nonzero(self.norms == 0.0)[0]
        ]

    def diagnostics(self) -> dict:
        return {
            "dim": self.matrix.dim,
            "count": len(self.matrix),
            "zero_norm_rows": len(self.zero_norm_ids),
            "zero_norm_ids": list(self.zero_norm_ids),
        }


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DataError(f"cosine dim mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DataError("cosine of zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def dense_search(
    index: DenseIndex, query_vec: np.ndarray, top_k: int = 100, query_id: str = ""
) -> RankedList:
    """Exact top-k by cosine, descending, ties broken by ascending id."""
    if top_k < 1:
        raise DataError(f"top_k must be >= 1, got {top_k}")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.matrix.dim,):
        raise DataError(
            f"query dim {q.shape} does not match index dim ({index.matrix.dim},)"
        )
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise DataError("zero-norm query vector")

    valid = index.norms > 0.0
    sims = np.zeros(len(index.matrix))
    sims[valid] = (index.matrix.vectors[valid] @ q) / (index.norms[valid] * qn)
    np.clip(sims, -1.0, 1.0, out=sims)
    scored = [
        (index.matrix.ids[i], float(sims[i])) for i in np.nonzero(valid)[0]
    ]
    entries = sort_entries(scored)[:top_k]
    return RankedList(query_id=query_id, entries=entries, stage_tag="dense")


def _gram_hash(gram: str, seed: int) -> int:
    key = seed.to_bytes(8, "little", signed=True)
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def _seed_vector(token: bytes, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(token, digest_size=8, key=seed.to_bytes(8, "little", signed=True)).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def hash_embed(text: str, dim: int = 256, seed: int = 0) -> np.ndarray:
    """Deterministic character-3-gram feature hashing, L2-normalized.

    Stands in for external sentence encoders in tests: similar strings
    share grams and land closer in cosine than unrelated strings. Empty
    text maps to a unit vector derived from the seed alone; texts shorter
    than three characters hash as a single gram.
    """
    if dim < 8:
        raise DataError(f"hash_embed dim must be >= 8, got {dim}")
    if not text:
        return _seed_vector(b"<empty>", dim, seed)
    if len(text) < 3:
        grams = [text]
    else:
        grams = [text[i : i + 3] for i in range(len(text) - 2)]
    vec = np.zeros(dim)
    for gram in grams:
        h = _gram_hash(gram, seed)
        sign = 1.0 if (h >> 63) & 1 else -1.0
        vec[h % dim] += sign
    norm = np.linalg.norm(vec)
    if norm == 0.0:  # signs cancelled exactly; fall back to a text-keyed unit vector
        return _seed_vector(text.encode("utf-8"), dim, seed)
    return vec / norm


def embed_texts(
    items: list[tuple[str, str]], dim: int = 256, seed: int = 0
) -> EmbeddingMatrix:
    """hash_embed a list of (id, text) into an id-aligned matrix."""
    ids = [i for i, _ in items]
    vectors = np.stack([hash_embed(t, dim, seed) for _, t in items]) if items else np.zeros((0, dim))
    return EmbeddingMatrix(ids, vectors, meta={"embedder": f"hash3:dim={dim},seed={seed}"})


def apply_projection(matrix: EmbeddingMatrix, proj) -> EmbeddingMatrix:
    """Replace each row with proj.forward(row); records the head checksum."""
    if proj.dim_in != matrix.dim:
        raise DataError(
            f"projection input dim {proj.dim_in} != matrix dim {matrix.dim}"
        )
    projected = proj.forward_batch(matrix.vectors)
    meta = dict(matrix.meta)
    meta["projection_checksum"] = proj.checksum()
    return EmbeddingMatrix(list(matrix.ids), projected, meta=meta)


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write the binary embedding file (values quantized to f32)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", matrix.dim, len(matrix)))
        f32 = matrix.vectors.astype("<f4")
        for i, vec_id in enumerate(matrix.ids):
            raw = vec_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(f32[i].tobytes())


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read either the binary format or a JSONL {"id","vec"} fixture file."""
    with open(path, "rb") as fh:
        head = fh.read(len(_MAGIC))
        if head != _MAGIC:
            return _load_embeddings_jsonl(path)
        dim, count = struct.unpack("<II", fh.read(8))
        ids: list[str] = []
        rows = np.empty((count, dim), dtype=np.float64)
        row_bytes = dim * 4
        for i in range(count):
            raw_len = fh.read(2)
            if len(raw_len) != 2:
                raise DataError(f"{path}: truncated at row {i}")
            (n,) = struct.unpack("<H", raw_len)
            ids.append(fh.read(n).decode("utf-8"))
            data = fh.read(row_bytes)
            if len(data) != row_bytes:
                raise DataError(f"{path}: truncated vector at row {i}")
            rows[i] = np.frombuffer(data, dtype="<f4")
    return EmbeddingMatrix(ids, rows)


def _load_embeddings_jsonl(path: str | Path) -> EmbeddingMatrix:
    ids: list[str] = []
    vecs: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                ids.append(obj["id"])
                vecs.append([float(x) for x in obj["vec"]])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed embedding line: {exc}") from exc
    if not ids:
        raise DataError(f"{path}: no embeddings found")
    dims = {len(v) for v in vecs}
    if len(dims) != 1:
        raise DataError(f"{path}: inconsistent vector dims {sorted(dims)}")
    return EmbeddingMatrix(ids, np.array(vecs, dtype=np.float64))
