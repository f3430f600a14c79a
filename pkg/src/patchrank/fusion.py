"""Combining global and local similarity into one ranking score.

Two interchangeable models: a transparent linear blend
alpha*global + (1-alpha)*local, and a tiny 2 -> h -> 1 network
(tanh hidden, sigmoid output) trained on binary relevance labels with
full-batch gradient descent. The linear blend doubles as a testing escape
hatch: alpha=1 reproduces the stage-1 order exactly.

Checkpoint format (little-endian): magic "PRFU", version u16 (=1),
kind u8 (0 linear / 1 mlp), then the parameters as float32 — alpha for
linear; W1 row-major, b1, w2, b2 for the mlp. The hidden width is
recovered from the parameter count (4h + 1 floats).
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, DegenerateLabels, TruncatedFile, UnsupportedVersion, ValidationError

FUSION_MAGIC = b"PRFU"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class LinearFusion:
    """final = alpha * global + (1 - alpha) * local, alpha in [0, 1]."""

    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class MlpFusion:
    """2 -> h -> 1 network: sigmoid(w2 . tanh(W1 x + b1) + b2)."""

    w1: np.ndarray  # (h, 2)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h,)
    b2: float

    def __post_init__(self):
        # Parameters live at float64; the checkpoint narrows to float32.
        for name in ("w1", "b1", "w2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "b2", float(self.b2))
        if self.w1.shape != (self.b1.size, 2) or self.w2.shape != (self.b1.size,):
            raise ValidationError("inconsistent fusion network shapes")
        params = np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])
        if not np.all(np.isfinite(params)):
            raise ValidationError("fusion parameters must be finite")

    @property
    def hidden(self) -> int:
        return self.b1.size


FusionModel = LinearFusion | MlpFusion


@dataclass(frozen=True)
class FusionTrainConfig:
    learning_rate: float = 0.5
    epochs: int = 500
    seed: int = 0
    hidden: int = 8


def init_mlp(hidden: int = 8, seed: int = 0) -> MlpFusion:
    """Seeded uniform init scaled by 1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    return MlpFusion(
        w1=rng.uniform(-1, 1, size=(hidden, 2)) / np.sqrt(2.0),
        b1=np.zeros(hidden, dtype=np.float32),
        w2=rng.uniform(-1, 1, size=hidden) / np.sqrt(hidden),
        b2=0.0,
    )


def _mlp_logits(model: MlpFusion, x: np.ndarray) -> np.ndarray:
    hidden = np.tanh(x @ model.w1.T + model.b1)
    return hidden @ model.w2 + model.b2


def fuse_many(global_scores, local_scores, model: FusionModel) -> np.ndarray:
    """Vectorized fuse over parallel score arrays."""
    g = np.asarray(global_scores, dtype=np.float64)
    l = np.asarray(local_scores, dtype=np.float64)
    if isinstance(model, LinearFusion):
        return model.alpha * g + (1.0 - model.alpha) * l
    x = np.stack([g, l], axis=-1)
    logits = _mlp_logits(model, x)
    return 1.0 / (1.0 + np.exp(-logits))


def fuse(global_score: float, local_score: float, model: FusionModel) -> float:
    """Combine one global/local score pair into the final ranking score."""
    return float(fuse_many([global_score], [local_score], model)[0])


def _loss_and_grads(model: MlpFusion, x: np.ndarray, y: np.ndarray):
    """Mean BCE on sigmoid output plus analytic parameter gradients.

    Uses the logit formulation for stability:
    loss_i = max(z,0) - z*y + log(1 + exp(-|z|)).
    """
    pre = x @ model.w1.T + model.b1
    hidden = np.tanh(pre)
    z = hidden @ model.w2 + model.b2
    loss = float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))
    n = x.shape[0]
    dz = (1.0 / (1.0 + np.exp(-z)) - y) / n
    grad_w2 = hidden.T @ dz
    grad_b2 = float(dz.sum())
    dhidden = np.outer(dz, model.w2) * (1.0 - hidden**2)
    grad_w1 = dhidden.T @ x
    grad_b1 = dhidden.sum(axis=0)
    return loss, {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}


def train_fusion(samples, config: FusionTrainConfig = FusionTrainConfig()) -> tuple[MlpFusion, float]:
    """Fit the fusion network to (global, local, relevant) samples.

    Full-batch gradient descent on binary cross-entropy; sample counts are
    top-K-per-query small, so nothing fancier is warranted. Deterministic
    given config.seed. Returns the model and the final loss.
    """
    data = [(float(g), float(l), bool(r)) for g, l, r in samples]
    if not data:
        raise ValidationError("no fusion training samples")
    y = np.array([r for _, _, r in data], dtype=np.float64)
    if y.min() == y.max():
        raise DegenerateLabels("fusion training needs both relevant and irrelevant samples")
    x = np.array([[g, l] for g, l, _ in data], dtype=np.float64)

    model = init_mlp(config.hidden, config.seed)
    for _ in range(config.epochs):
        _, grads = _loss_and_grads(model, x, y)
        model = MlpFusion(
            model.w1 - config.learning_rate * grads["w1"],
            model.b1 - config.learning_rate * grads["b1"],
            model.w2 - config.learning_rate * grads["w2"],
            model.b2 - config.learning_rate * grads["b2"],
        )
    final_loss = _loss_and_grads(model, x, y)[0]
    return model, final_loss


def save_fusion(model: FusionModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(FUSION_MAGIC)
        if isinstance(model, LinearFusion):
            fh.write(struct.pack("<HB", FORMAT_VERSION, 0))
            fh.write(np.array([model.alpha], dtype="<f4").tobytes())
        else:
            fh.write(struct.pack("<HB", FORMAT_VERSION, 1))
            params = np.concatenate([model.w1.ravel(), model.b1, model.w2, [model.b2]])
            fh.write(params.astype("<f4").tobytes())


def load_fusion(path) -> FusionModel:
    raw = Path(path).read_bytes()
    if raw[:4] != FUSION_MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 7:
        raise TruncatedFile(f"{path}: truncated fusion checkpoint")
    version, kind = struct.unpack_from("<HB", raw, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(version)
    params = np.frombuffer(raw, dtype="<f4", offset=7)
    if kind == 0:
        if params.size != 1:
            raise TruncatedFile(f"{path}: linear checkpoint needs 1 parameter")
        return LinearFusion(float(params[0]))
    if kind != 1:
        raise BadMagic(f"{path}: unknown fusion kind {kind}")
    if params.size % 4 != 1 or params.size < 5:
        raise TruncatedFile(f"{path}: mlp checkpoint has {params.size} parameters")
    hidden = (params.size - 1) // 4
    w1 = params[: 2 * hidden].reshape(hidden, 2)
    b1 = params[2 * hidden : 3 * hidden]
    w2 = params[3 * hidden : 4 * hidden]
    return MlpFusion(w1.copy(), b1.copy(), w2.copy(), float(params[-1]))
