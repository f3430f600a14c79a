"""Core tensor types and descriptor operations.

A backbone network leaves us an H x W x C activation tensor per image.
This module turns such tensors into the two things the search stages
consume: a pooled global descriptor (stage 1) and a set of L2-normalized
per-position patch vectors (stage 2).

All operations are pure functions on immutable inputs; accumulation runs
in float64 and results are stored as float32.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ZeroPatch, ZeroVector

NORM_EPS = 1e-12


@dataclass(frozen=True)
class FeatureMap:
    """One image's backbone activations, shaped (H, W, C) float32.

    Every element must be finite and all three dimensions positive.
    """

    id: str
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be 3-D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_flat(cls, doc_id: str, height: int, width: int, channels: int, data) -> "FeatureMap":
        """Build from a flat (h, w, c) row-major sequence of H*W*C floats."""
        flat = np.asarray(data, dtype=np.float32)
        expected = height * width * channels
        if flat.size != expected:
            raise ValueError(f"expected {expected} values, got {flat.size}")
        return cls(doc_id, flat.reshape(height, width, channels))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def flat(self) -> np.ndarray:
        """The (h, w, c) row-major flat view of the tensor."""
        return self.values.reshape(-1)


@dataclass(frozen=True)
class GlobalDescriptor:
    """A C-dimensional summary vector for one document."""

    id: str
    vector: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("descriptor vector must be 1-D and non-empty")
        object.__setattr__(self, "vector", vec)
        if self.normalized:
            norm = float(np.linalg.norm(vec.astype(np.float64)))
            if abs(norm - 1.0) > 1e-5:
                raise ValueError(f"descriptor marked normalized but |v| = {norm}")

    @property
    def dim(self) -> int:
        return self.vector.size


@dataclass(frozen=True)
class PatchSet:
    """The H*W unit-norm local descriptors of one feature map.

    Row p corresponds to spatial position (p // W, p % W) of the source.
    """

    id: str
    patches: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.patches, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"patches must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "patches", arr)

    @property
    def count(self) -> int:
        return self.patches.shape[0]

    @property
    def dim(self) -> int:
        return self.patches.shape[1]


def l2_normalize(vector) -> np.ndarray:
    """Scale a vector to unit L2 norm (float32 result, float64 arithmetic).

    Raises ZeroVector when the norm falls below 1e-12; such degenerate
    descriptors must not be indexed.
    """
    vec = np.asarray(vector, dtype=np.float64).reshape(-1)
    if vec.size == 0:
        raise ValueError("cannot normalize an empty vector")
    norm = float(np.linalg.norm(vec))
    if norm < NORM_EPS:
        raise ZeroVector(f"vector norm {norm} below {NORM_EPS}")
    return (vec / norm).astype(np.float32)


def average_pool(fmap: FeatureMap) -> GlobalDescriptor:
    """Mean over all (h, w) positions per channel; the stage-1 raw descriptor.

    The result is not normalized; callers chain l2_normalize before cosine
    search.
    """
    pooled = fmap.values.mean(axis=(0, 1), dtype=np.float64)
    return GlobalDescriptor(fmap.id, pooled.astype(np.float32), normalized=False)


def extract_patches(fmap: FeatureMap) -> PatchSet:
    """Slice a feature map into H*W unit-norm C-vectors, row-major by (h, w).

    Normalizing here keeps the stage-2 matching loop a pure matrix product.
    Raises ZeroPatch(p) on the first position whose activation norm is
    below 1e-12 (a dead region; see local_rerank for how candidates with
    dead regions are treated).
    """
    rows = fmap.values.reshape(-1, fmap.channels).astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    dead = np.flatnonzero(norms < NORM_EPS)
    if dead.size:
        raise ZeroPatch(int(dead[0]))
    return PatchSet(fmap.id, (rows / norms[:, None]).astype(np.float32))
