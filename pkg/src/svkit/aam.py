"""Additive angular margin softmax: logits, loss, exact gradients, and
head-only fine-tuning on frozen embeddings.

Embeddings and class weights are unit-normalized before the cosine is
taken. The true-class cosine cos(theta) becomes cos(theta + m) while
cos(theta) > cos(pi - m); past that point the monotone surrogate
cos(theta) - m*sin(m) takes over. Everything is scaled by s.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensorio


@dataclass(frozen=True)
class AamConfig:
    scale: float = 30.0
    margin: float = 0.2

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not (0.0 <= self.margin < math.pi / 2):
            raise ValueError("margin must be in [0, pi/2)")


@dataclass(eq=False)
class AamHead:
    """Class weight matrix, one row per class."""

    weight: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ValueError("head weight must be 2-D")

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]


def init_head(num_classes: int, dim: int, seed: int) -> AamHead:
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / dim)
    return AamHead(rng.uniform(-bound, bound, size=(num_classes, dim)))


def _normalize_rows(x: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise ValueError(f"degenerate norm: zero {what}")
    return x / norms[:, None], norms


def _margin_terms(cos_true: np.ndarray, cfg: AamConfig):
    """Margin-modified true-class cosine and its derivative wrt cos(theta)."""
    cos_m, sin_m = math.cos(cfg.margin), math.sin(cfg.margin)
    tau = math.cos(math.pi - cfg.margin)
    branch = cos_true > tau
    sin_true = np.sqrt(np.maximum(1.0 - cos_true * cos_true, 0.0))
    phi = np.where(branch, cos_true * cos_m - sin_true * sin_m,
                   cos_true - cfg.margin * sin_m)
    safe_sin = np.maximum(sin_true, 1e-32)
    dphi = np.where(branch, cos_m + cos_true * sin_m / safe_sin, 1.0)
    return phi, dphi


def _batch_logits(embs: np.ndarray, labels: np.ndarray, head: AamHead, cfg: AamConfig):
    e_hat, e_norm = _normalize_rows(embs, "embedding")
    w_hat, w_norm = _normalize_rows(head.weight, "weight row")
    cos = e_hat @ w_hat.T
    idx = np.arange(len(labels))
    phi, dphi = _margin_terms(cos[idx, labels], cfg)
    logits = cfg.scale * cos
    logits[idx, labels] = cfg.scale * phi
    return logits, cos, dphi, e_hat, e_norm, w_hat, w_norm


def aam_logits(emb: np.ndarray, head: AamHead, label: int, cfg: AamConfig = AamConfig()) -> np.ndarray:
    """Margin-modified scaled cosine logits for one embedding."""
    emb = np.asarray(emb, dtype=np.float64)
    if not 0 <= label < head.num_classes:
        raise ValueError("label out of range")
    logits, *_ = _batch_logits(emb[None, :], np.array([label]), head, cfg)
    return logits[0]


def _batch_arrays(embs, labels, head):
    embs = np.asarray(embs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if embs.ndim != 2 or embs.shape[0] == 0:
        raise ValueError("empty batch")
    if labels.shape != (embs.shape[0],):
        raise ValueError("labels must align with the batch")
    if labels.min() < 0 or labels.max() >= head.num_classes:
        raise ValueError("label out of range")
    return embs, labels


def aam_loss(embs, labels, head: AamHead, cfg: AamConfig = AamConfig()) -> float:
    """Mean softmax cross-entropy over margin-modified logits."""
    embs, labels = _batch_arrays(embs, labels, head)
    logits, *_ = _batch_logits(embs, labels, head, cfg)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1))
    idx = np.arange(len(labels))
    return float(np.mean(log_z - shifted[idx, labels]))


def aam_grad(embs, labels, head: AamHead, cfg: AamConfig = AamConfig()):
    """Loss plus exact gradients wrt head weights and embeddings."""
    embs, labels = _batch_arrays(embs, labels, head)
    logits, cos, dphi, e_hat, e_norm, w_hat, w_norm = _batch_logits(embs, labels, head, cfg)
    n = len(labels)
    idx = np.arange(n)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    probs = expv / expv.sum(axis=1, keepdims=True)
    loss = float(np.mean(np.log(expv.sum(axis=1))) - np.mean(shifted[idx, labels]))

    # d(loss)/d(cosine), margin chain applied on the true-class column.
    g = probs.copy()
    g[idx, labels] -= 1.0
    g *= cfg.scale / n
    g[idx, labels] *= dphi

    gw_hat = g.T @ e_hat  # (classes, dim), gradient wrt normalized rows
    row_dot = np.sum(gw_hat * w_hat, axis=1, keepdims=True)
    grad_w = (gw_hat - row_dot * w_hat) / w_norm[:, None]

    ge_hat = g @ w_hat  # (batch, dim), gradient wrt normalized embeddings
    e_dot = np.sum(ge_hat * e_hat, axis=1, keepdims=True)
    grad_e = (ge_hat - e_dot * e_hat) / e_norm[:, None]
    return loss, grad_w, grad_e


def finetune_head(embs, labels, cfg: AamConfig = AamConfig(), epochs: int = 50,
                  learning_rate: float = 0.1, seed: int = 0):
    """Full-batch gradient descent on the head; embeddings stay frozen.

    Returns the trained head and the per-epoch loss trace (loss measured
    before each update, so epochs=0 returns the seeded initialization).
    """
    embs = np.asarray(embs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    head = init_head(int(labels.max()) + 1, embs.shape[1], seed)
    trace = np.zeros(epochs)
    for epoch in range(epochs):
        loss, grad_w, _ = aam_grad(embs, labels, head, cfg)
        trace[epoch] = loss
        head.weight = head.weight - learning_rate * grad_w
    return head, trace


def head_predict(embs, head: AamHead) -> np.ndarray:
    """Class decisions by plain cosine argmax (no margin at test time)."""
    embs = np.asarray(embs, dtype=np.float64)
    e_hat, _ = _normalize_rows(embs, "embedding")
    w_hat, _ = _normalize_rows(head.weight, "weight row")
    return np.argmax(e_hat @ w_hat.T, axis=1)


def save_head(head: AamHead, path) -> None:
    tensorio.write_tensors(path, {"aam.weight": head.weight})


def load_head(path) -> AamHead:
    tensors = tensorio.read_tensors(path)
    if "aam.weight" not in tensors:
        raise ValueError("bad weight file: missing aam.weight")
    return AamHead(tensors["aam.weight"])
