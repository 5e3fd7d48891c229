"""Write embeddings in the engine's binary format, with a manifest alongside.

File layout (consumed by the retrieval engine):
    magic "XDNREMB1", little-endian u32 dim, u32 count,
    then per row: u16 id length, UTF-8 id bytes, dim * f32 little-endian.
"""

from __future__ import annotations

import datetime as dt
import json
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"XDNREMB1"


@dataclass
class ExportManifest:
    model: str
    pooling: str
    max_seq_len: int
    dim: int
    count: int
    created_at: str
    empty_text_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "pooling": self.pooling,
            "max_seq_len": self.max_seq_len,
            "dim": self.dim,
            "count": self.count,
            "created_at": self.created_at,
            "empty_text_ids": self.empty_text_ids,
        }


def read_texts(path: str | Path) -> list[tuple[str, str]]:
    """JSONL of {"id", "text"}; blank lines ignored."""
    items: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                item_id, text = obj["id"], obj["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed text line: {exc}") from exc
            if item_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {item_id!r}")
            seen.add(item_id)
            items.append((item_id, text))
    if not items:
        raise ValueError(f"{path}: no texts to export")
    return items


def write_embeddings(path: str | Path, ids: list[str], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise ValueError("vectors must be (len(ids), dim)")
    f32 = vectors.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", vectors.shape[1], len(ids)))
        for i, item_id in enumerate(ids):
            raw = item_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(f32[i].tobytes())


def encode_batched(encoder, texts: list[str], batch_size: int = 64) -> np.ndarray:
    """Encode in batches; on memory pressure, retry with a smaller batch."""
    rows = []
    start = 0
    while start < len(texts):
        batch = texts[start : start + batch_size]
        try:
            rows.append(encoder.encode(batch))
        except (MemoryError, RuntimeError) as exc:
            if batch_size <= 1:
                raise
            batch_size = max(1, batch_size // 2)
            print(
                f"encode batch failed ({exc}); retrying with batch size {batch_size}",
                file=sys.stderr,
            )
            continue
        start += len(batch)
    return np.concatenate(rows, axis=0)


def export(
    texts_path: str | Path,
    model_spec: str,
    out_path: str | Path,
    batch_size: int = 64,
) -> ExportManifest:
    """Encode a texts file and emit the binary embedding file + manifest."""
    from .encoders import make_encoder

    items = read_texts(texts_path)
    encoder = make_encoder(model_spec)
    ids = [i for i, _ in items]
    texts = [t for _, t in items]
    vectors = encode_batched(encoder, texts, batch_size=batch_size)

    manifest = ExportManifest(
        model=encoder.name,
        pooling="mean",
        max_seq_len=getattr(encoder, "MAX_SEQ_LEN", 256),
        dim=int(vectors.shape[1]),
        count=len(ids),
        created_at=dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        empty_text_ids=[i for i, t in items if not t.strip()],
    )
    write_embeddings(out_path, ids, vectors)
    manifest_path = Path(str(out_path) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    return manifest
