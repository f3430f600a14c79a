"""Metric learning over stored descriptors: a trainable projection head.

Training runs entirely on pooled descriptors already in the store, so it
is CPU-cheap: sample class-balanced batches, project, enumerate every
positive/negative pair in the batch, apply a margin contrastive loss on
the pair distances, and update the head with bias-corrected Adam. The
projection is W v + b followed by L2 normalization, so downstream cosine
search works unchanged on projected descriptors.

Head checkpoint (little-endian): magic "PRHD", version u16 (=1),
in_dim u32, out_dim u32, then weights row-major and bias, all float32.

Training log format: one line per epoch, tab-separated
epoch, mean_loss, pair_count.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    InsufficientClasses,
    NonFiniteLoss,
    TruncatedFile,
    UnsupportedVersion,
)
from .feature_model import GlobalDescriptor, l2_normalize

HEAD_MAGIC = b"PRHD"
FORMAT_VERSION = 1


@dataclass
class ProjectionHead:
    """Linear map (out_dim x in_dim weights plus bias) over pooled descriptors."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("head weights must be (out_dim, in_dim) with matching bias")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("head parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class TrainingPair:
    anchor_index: int
    other_index: int
    positive: bool


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters for head training.

    The optimizer defaults (learning rate 1.5e-4, epsilon 1e-8, 20 epochs)
    match the published training recipe this engine reproduces; batch
    geometry and margin have no published values and are engine defaults.
    """

    learning_rate: float = 1.5e-4
    adam_epsilon: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epochs: int = 20
    margin: float = 0.5
    classes_per_batch: int = 4
    samples_per_class: int = 2
    seed: int = 0
    out_dim: int = 64

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.classes_per_batch < 2 or self.samples_per_class < 2:
            raise ValueError("need at least 2 classes per batch and 2 samples per class")


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    pair_count: int


def init_head(in_dim: int, out_dim: int, seed: int) -> ProjectionHead:
    """Seeded uniform weights scaled by 1/sqrt(in_dim), zero bias."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(in_dim)
    return ProjectionHead(rng.uniform(-scale, scale, size=(out_dim, in_dim)), np.zeros(out_dim))


def identity_head(dim: int) -> ProjectionHead:
    """The no-op head: retrieval through it matches retrieval without one."""
    return ProjectionHead(np.eye(dim, dtype=np.float32), np.zeros(dim, dtype=np.float32))


def project(descriptor: GlobalDescriptor, head: ProjectionHead) -> GlobalDescriptor:
    """l2_normalize(W v + b); propagates ZeroVector for degenerate outputs."""
    if descriptor.dim != head.in_dim:
        raise DimensionMismatch(f"descriptor dim {descriptor.dim} != head in_dim {head.in_dim}")
    raw = head.weights.astype(np.float64) @ descriptor.vector.astype(np.float64) + head.bias.astype(np.float64)
    return GlobalDescriptor(descriptor.id, l2_normalize(raw), normalized=True)


def batch_sampler(
    labels: Sequence[str], classes_per_batch: int, samples_per_class: int, rng: np.random.Generator
) -> Iterator[list]:
    """One epoch of class-balanced index batches, without replacement.

    Yields lists of classes_per_batch * samples_per_class indices into
    `labels`, each batch covering exactly classes_per_batch distinct
    classes with samples_per_class members apiece. Entries are consumed
    without replacement until fewer than classes_per_batch classes still
    have samples_per_class unused members.
    """
    by_class: dict = {}
    for i, label in enumerate(labels):
        by_class.setdefault(label, []).append(i)
    eligible = {c for c, members in by_class.items() if len(members) >= samples_per_class}
    if len(eligible) < classes_per_batch:
        raise InsufficientClasses(
            f"need {classes_per_batch} classes with >= {samples_per_class} entries, have {len(eligible)}"
        )
    remaining = {c: list(rng.permutation(members)) for c, members in by_class.items()}
    while True:
        ready = sorted(c for c, members in remaining.items() if len(members) >= samples_per_class)
        if len(ready) < classes_per_batch:
            return
        chosen = rng.choice(len(ready), size=classes_per_batch, replace=False)
        batch = []
        for ci in sorted(chosen):
            cls = ready[ci]
            take = remaining[cls][:samples_per_class]
            remaining[cls] = remaining[cls][samples_per_class:]
            batch.extend(int(i) for i in take)
        yield batch


def mine_pairs(labels: Sequence[str]) -> list:
    """Every unordered index pair in the batch, tagged positive on label match."""
    pairs = []
    n = len(labels)
    for i in range(n):
        for j in range(i + 1, n):
            pairs.append(TrainingPair(i, j, labels[i] == labels[j]))
    return pairs


def contrastive_loss(pairs, embeddings: np.ndarray, margin: float):
    """Margin contrastive loss over mined pairs, with analytic gradients.

    loss = mean over pairs of  y * D^2 + (1 - y) * max(0, margin - D)^2
    where D is the Euclidean distance between the pair's embeddings and
    y = 1 for positive pairs. Returns (loss, gradient w.r.t. embeddings).
    Coincident negative pairs (D ~ 0) contribute margin^2 with zero
    gradient, the standard subgradient choice.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if not pairs:
        return 0.0, np.zeros_like(emb)
    i_idx = np.array([p.anchor_index for p in pairs])
    j_idx = np.array([p.other_index for p in pairs])
    y = np.array([1.0 if p.positive else 0.0 for p in pairs])
    diffs = emb[i_idx] - emb[j_idx]
    dists = np.linalg.norm(diffs, axis=1)

    pos_terms = y * dists**2
    slack = np.maximum(0.0, margin - dists)
    neg_terms = (1.0 - y) * slack**2
    loss = float(np.mean(pos_terms + neg_terms))

    # d/d_diff: positive 2*diff; negative -2*(m - D)/D * diff where active.
    coef = 2.0 * y.copy()
    active = (y == 0.0) & (slack > 0.0) & (dists > 1e-12)
    coef_neg = np.zeros_like(dists)
    coef_neg[active] = -2.0 * slack[active] / dists[active]
    coef = (coef + coef_neg) / len(pairs)
    contrib = diffs * coef[:, None]
    grad = np.zeros_like(emb)
    np.add.at(grad, i_idx, contrib)
    np.add.at(grad, j_idx, -contrib)
    return loss, grad


@dataclass
class Adam:
    """Bias-corrected adaptive-moment optimizer for a list of arrays."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list, grads: list) -> list:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g**2
            m_hat = self.m[k] / (1.0 - self.beta1**t)
            v_hat = self.v[k] / (1.0 - self.beta2**t)
            out.append(p - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon))
        return out


def project_batch(matrix64: np.ndarray, weights64: np.ndarray, bias64: np.ndarray):
    """Project and row-normalize a batch; returns embeddings and pre-norm info."""
    pre = matrix64 @ weights64.T + bias64
    norms = np.linalg.norm(pre, axis=1, keepdims=True)
    norms = np.maximum(norms, 1e-12)
    return pre / norms, norms


def train_head(
    config: TrainerConfig, descriptors: np.ndarray, labels: Sequence[str]
) -> tuple[ProjectionHead, list]:
    """Fit a projection head to pooled train-split descriptors.

    Each step samples a class-balanced batch, projects it, mines all pairs,
    and takes one Adam step on the contrastive loss, backpropagated through
    the row normalization. Fully deterministic given config.seed; returns
    the head and per-epoch statistics for the training log.

    Raises NonFiniteLoss(step) if the loss leaves the reals, and
    InsufficientClasses if the train split cannot fill a batch.
    """
    matrix = np.asarray(descriptors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(labels):
        raise ValueError("descriptors must be (N, C) with one label per row")
    rng = np.random.default_rng(config.seed)
    head = init_head(matrix.shape[1], config.out_dim, config.seed)
    weights = head.weights.astype(np.float64)
    bias = head.bias.astype(np.float64)
    optimizer = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon)

    history = []
    step = 0
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        epoch_pairs = 0
        for batch in batch_sampler(labels, config.classes_per_batch, config.samples_per_class, rng):
            step += 1
            batch_labels = [labels[i] for i in batch]
            v = matrix[batch]
            embeddings, norms = project_batch(v, weights, bias)
            pairs = mine_pairs(batch_labels)
            loss, grad_e = contrastive_loss(pairs, embeddings, config.margin)
            if not np.isfinite(loss):
                raise NonFiniteLoss(step)
            # Back through e = z / |z|:  dz = (de - (de . e) e) / |z|.
            grad_z = (grad_e - (grad_e * embeddings).sum(axis=1, keepdims=True) * embeddings) / norms
            grad_w = grad_z.T @ v
            grad_b = grad_z.sum(axis=0)
            weights, bias = optimizer.step([weights, bias], [grad_w, grad_b])
            epoch_loss += loss * len(pairs)
            epoch_pairs += len(pairs)
        mean_loss = epoch_loss / epoch_pairs if epoch_pairs else 0.0
        history.append(EpochStats(epoch + 1, mean_loss, epoch_pairs))
    return ProjectionHead(weights, bias), history


def format_training_log(history) -> str:
    lines = [f"{s.epoch}\t{s.mean_loss:.9g}\t{s.pair_count}" for s in history]
    return "\n".join(lines) + ("\n" if lines else "")


def save_head(head: ProjectionHead, path) -> None:
    with open(path, "wb") as fh:
        fh.write(HEAD_MAGIC)
        fh.write(struct.pack("<HII", FORMAT_VERSION, head.in_dim, head.out_dim))
        fh.write(head.weights.astype("<f4").tobytes())
        fh.write(head.bias.astype("<f4").tobytes())


def load_head(path) -> ProjectionHead:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != HEAD_MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 14:
        raise TruncatedFile(f"{path}: truncated head header")
    version, in_dim, out_dim = struct.unpack_from("<HII", raw, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(version)
    expected = 14 + 4 * (in_dim * out_dim + out_dim)
    if len(raw) != expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, expected {expected}")
    params = np.frombuffer(raw, dtype="<f4", offset=14)
    weights = params[: in_dim * out_dim].reshape(out_dim, in_dim)
    bias = params[in_dim * out_dim :]
    return ProjectionHead(weights.copy(), bias.copy())
