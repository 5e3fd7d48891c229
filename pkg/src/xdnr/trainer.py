"""Bi-encoder fine-tuning of a shared projection head.

The frozen base encoder lives in the embedding files; training adjusts one
linear head applied to BOTH the query and document vectors. The objective
is mean squared error between the graded label and the cosine of the two
projected vectors:

    L = (1/N) * sum_i (Y_i - cos(h(q_i), h(d_i)))^2,   h(x) = W x + b

Gradients are analytic (the head appears on both sides of each cosine) and
verified against finite differences in the test suite. Optimization is
AdamW with decoupled weight decay and a linear warmup / linear decay
schedule; betas (0.9, 0.999) and eps 1e-8.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import LabelMap, TrainPair
from .dense import DenseIndex, EmbeddingMatrix, dense_search
from .errors import DataError, XdnrError
from .metrics import Qrels, mrr
from .ranking import RankedList


class ProjectionHead:
    """Linear map shared by the query and document sides."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray | None = None):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise DataError("head weights must be a 2-D matrix")
        self.bias = None if bias is None else np.asarray(bias, dtype=np.float64)
        if self.bias is not None and self.bias.shape != (self.dim_out,):
            raise DataError(
                f"bias shape {self.bias.shape} != ({self.dim_out},)"
            )
        if not np.all(np.isfinite(self.weights)) or (
            self.bias is not None and not np.all(np.isfinite(self.bias))
        ):
            raise DataError("head parameters must be finite")

    @property
    def dim_in(self) -> int:
        return self.weights.shape[1]

    @property
    def dim_out(self) -> int:
        return self.weights.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = self.weights @ np.asarray(x, dtype=np.float64)
        return y if self.bias is None else y + self.bias

    def forward_batch(self, xs: np.ndarray) -> np.ndarray:
        ys = np.asarray(xs, dtype=np.float64) @ self.weights.T
        return ys if self.bias is None else ys + self.bias

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(
            self.weights.copy(), None if self.bias is None else self.bias.copy()
        )

    def _payload(self) -> bytes:
        data = self.weights.astype("<f4").tobytes()
        if self.bias is not None:
            data += self.bias.astype("<f4").tobytes()
        return data

    def checksum(self) -> str:
        return "sha256:" + hashlib.sha256(self._payload()).hexdigest()

    @classmethod
    def identity(cls, dim: int, bias: bool = False) -> "ProjectionHead":
        return cls(np.eye(dim), np.zeros(dim) if bias else None)

    @classmethod
    def init(
        cls, dim_in: int, dim_out: int, seed: int, mode: str = "auto", bias: bool = False
    ) -> "ProjectionHead":
        """identity when square (mode auto), else scaled uniform from seed."""
        if mode not in ("auto", "identity", "uniform"):
            raise DataError(f"unknown init mode {mode!r}")
        if mode == "identity" or (mode == "auto" and dim_in == dim_out):
            if dim_in != dim_out:
                raise DataError("identity init requires dim_in == dim_out")
            return cls.identity(dim_in, bias)
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(dim_in)
        w = rng.uniform(-scale, scale, size=(dim_out, dim_in))
        return cls(w, np.zeros(dim_out) if bias else None)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 4
    batch_size: int = 32
    learning_rate: float = 4e-5
    warmup: float = 0.1  # fraction of total steps, linear
    weight_decay: float = 0.01
    seed: int = 42
    init: str = "auto"
    use_bias: bool = False
    label_map: LabelMap = field(default_factory=LabelMap)

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.learning_rate <= 0 and self.learning_rate != 0.0:
            raise DataError("learning_rate must be > 0 (or exactly 0 for a no-op run)")
        if not 0.0 <= self.warmup < 1.0:
            raise DataError("warmup fraction must be in [0,1)")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "warmup": self.warmup,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "init": self.init,
            "use_bias": self.use_bias,
            "label_map": {
                "exact": self.label_map.exact,
                "partial": self.label_map.partial,
                "negative": self.label_map.negative,
            },
        }


@dataclass(frozen=True)
class LossReport:
    epoch: int
    train_loss: float
    validation_loss: float | None = None
    validation_mrr: float | None = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "validation_loss": self.validation_loss,
            "validation_mrr": self.validation_mrr,
        }


Batch = list[tuple[np.ndarray, np.ndarray, float]]


def _project_batch(head: ProjectionHead, batch: Batch):
    if not batch:
        raise DataError("empty batch")
    q = np.stack([np.asarray(b[0], dtype=np.float64) for b in batch])
    d = np.stack([np.asarray(b[1], dtype=np.float64) for b in batch])
    y = np.array([b[2] for b in batch], dtype=np.float64)
    if np.any(y < 0.0) or np.any(y > 1.0):
        raise DataError("labels must be in [0,1]")
    qp = head.forward_batch(q)
    dp = head.forward_batch(d)
    nq = np.linalg.norm(qp, axis=1)
    nd = np.linalg.norm(dp, axis=1)
    for name, norms in (("query", nq), ("doc", nd)):
        zero = np.nonzero(norms == 0.0)[0]
        if zero.size:
            raise DataError(f"projected zero-norm {name} vector at batch index {zero[0]}")
    cos = np.sum(qp * dp, axis=1) / (nq * nd)
    return q, d, y, qp, dp, nq, nd, cos


def loss(head: ProjectionHead, batch: Batch) -> float:
    """Mean squared error between labels and projected-pair cosines."""
    *_, y, _, _, _, _, cos = _project_batch(head, batch)
    value = float(np.mean((y - cos) ** 2))
    if not math.isfinite(value):
        raise DataError("non-finite loss")
    return value


def loss_grad(head: ProjectionHead, batch: Batch) -> tuple[np.ndarray, np.ndarray | None]:
    """Exact gradient of loss() w.r.t. (weights, bias).

    With qp = W q + b, dp = W d + b, c = cos(qp, dp) and residual r = y - c:
      dL/dc   = -2 r / N
      dc/dqp  = dp/(|qp||dp|) - c qp/|qp|^2      (and symmetrically for dp)
      dL/dW  += dL/dqp q^T + dL/ddp d^T,  dL/db += dL/dqp + dL/ddp
    """
    q, d, y, qp, dp, nq, nd, cos = _project_batch(head, batch)
    n = len(batch)
    coef = (-2.0 * (y - cos) / n)[:, None]
    inv_qd = (1.0 / (nq * nd))[:, None]
    g_qp = dp * inv_qd - (cos / nq**2)[:, None] * qp
    g_dp = qp * inv_qd - (cos / nd**2)[:, None] * dp
    grad_w = (coef * g_qp).T @ q + (coef * g_dp).T @ d
    grad_b = None
    if head.bias is not None:
        grad_b = np.sum(coef * (g_qp + g_dp), axis=0)
    return grad_w, grad_b


class _AdamW:
    """AdamW with decoupled weight decay; one state per parameter tensor."""

    def __init__(self, shapes, weight_decay: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps

    def step(self, params, grads, lr: float):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g**2
            m_hat = self.m[i] / (1 - self.b1**self.t)
            v_hat = self.v[i] / (1 - self.b2**self.t)
            p -= lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p)


def _lr_schedule(step: int, total: int, warmup_steps: int, base: float) -> float:
    """Linear warmup to base, then linear decay; the final step stays > 0."""
    if warmup_steps > 0 and step <= warmup_steps:
        return base * step / warmup_steps
    if total == warmup_steps:
        return base
    return base * (total - step + 1) / (total - warmup_steps)


def _pair_rows(
    pairs: list[TrainPair], query_emb: EmbeddingMatrix, doc_emb: EmbeddingMatrix
) -> Batch:
    batch: Batch = []
    for p in pairs:
        batch.append((query_emb.row(p.query_id), doc_emb.row(p.debunk_id), p.label))
    return batch


def _validation_mrr(
    head: ProjectionHead,
    query_emb: EmbeddingMatrix,
    doc_emb: EmbeddingMatrix,
    validation_pairs: list[TrainPair],
) -> float:
    """MRR of projected dense search over the validation queries.

    Relevant docs are the validation pairs with positive labels; the
    candidate pool is every document row."""
    positives: dict[str, set[str]] = {}
    for p in validation_pairs:
        if p.label > 0.0:
            positives.setdefault(p.query_id, set()).add(p.debunk_id)
    if not positives:
        return 0.0
    doc_proj = EmbeddingMatrix(list(doc_emb.ids), head.forward_batch(doc_emb.vectors))
    index = DenseIndex(doc_proj)
    results: list[RankedList] = []
    qrels = Qrels(
        {(qid, did): 1 for qid, dids in positives.items() for did in dids}
    )
    for qid in positives:
        qvec = head.forward(query_emb.row(qid))
        results.append(dense_search(index, qvec, top_k=len(doc_proj), query_id=qid))
    return mrr(results, qrels)


def train(
    query_emb: EmbeddingMatrix,
    doc_emb: EmbeddingMatrix,
    pairs: list[TrainPair],
    config: TrainConfig = TrainConfig(),
    validation_pairs: list[TrainPair] | None = None,
) -> tuple[ProjectionHead, list[LossReport]]:
    """Train the shared head; fully deterministic under config.seed.

    Per-epoch reports carry the full-set train loss recomputed after the
    epoch, plus validation loss and dense-search MRR when validation pairs
    are supplied.
    """
    if not pairs:
        raise DataError("no training pairs")
    if query_emb.dim != doc_emb.dim:
        raise DataError("query/doc embedding dims differ")
    data = _pair_rows(pairs, query_emb, doc_emb)
    val_data = _pair_rows(validation_pairs, query_emb, doc_emb) if validation_pairs else None

    head = ProjectionHead.init(
        query_emb.dim, query_emb.dim, seed=config.seed, mode=config.init, bias=config.use_bias
    )
    params = [head.weights] + ([head.bias] if head.bias is not None else [])
    opt = _AdamW([p.shape for p in params], config.weight_decay)

    steps_per_epoch = math.ceil(len(data) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    warmup_steps = int(config.warmup * total_steps)

    rng = random.Random(config.seed)
    order = list(range(len(data)))
    reports: list[LossReport] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = [data[i] for i in order[start : start + config.batch_size]]
            grad_w, grad_b = loss_grad(head, batch)
            grads = [grad_w] + ([grad_b] if grad_b is not None else [])
            if any(not np.all(np.isfinite(g)) for g in grads):
                raise XdnrError(f"non-finite gradient at epoch {epoch}, step {step + 1}")
            step += 1
            opt.step(params, grads, _lr_schedule(step, total_steps, warmup_steps, config.learning_rate))

        try:
            train_loss = loss(head, data)
        except DataError as exc:
            raise XdnrError(f"loss diverged at epoch {epoch}, step {step}: {exc}") from exc
        val_loss = loss(head, val_data) if val_data else None
        val_mrr = (
            _validation_mrr(head, query_emb, doc_emb, validation_pairs)
            if validation_pairs
            else None
        )
        reports.append(LossReport(epoch, train_loss, val_loss, val_mrr))
    return head, reports


def save_head(
    head: ProjectionHead, path: str | Path, config: TrainConfig | None = None
) -> None:
    """Checkpoint: one JSON header line, then base64 f32 weights (and bias)."""
    header = {
        "format": "xdnr-head",
        "version": 1,
        "dim_in": head.dim_in,
        "dim_out": head.dim_out,
        "bias": head.bias is not None,
        "seed": config.seed if config else None,
        "config": config.to_dict() if config else None,
        "checksum": head.checksum(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write(base64.b64encode(head.weights.astype("<f4").tobytes()).decode("ascii") + "\n")
        if head.bias is not None:
            fh.write(base64.b64encode(head.bias.astype("<f4").tobytes()).decode("ascii") + "\n")


def load_head(path: str | Path) -> ProjectionHead:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad checkpoint header: {exc.msg}") from exc
        if header.get("format") != "xdnr-head":
            raise DataError(f"{path}: not a head checkpoint")
        dim_in, dim_out = header["dim_in"], header["dim_out"]
        weights = np.frombuffer(
            base64.b64decode(fh.readline()), dtype="<f4"
        ).reshape(dim_out, dim_in).astype(np.float64)
        bias = None
        if header["bias"]:
            bias = np.frombuffer(base64.b64decode(fh.readline()), dtype="<f4").astype(np.float64)
    head = ProjectionHead(weights, bias)
    if head.checksum() != header["checksum"]:
        raise DataError(f"{path}: checkpoint checksum mismatch")
    return head


def save_training_log(reports: list[LossReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_dict()) + "\n")
