"""Stage-1 ranking: exhaustive cosine scan of the descriptor store.

The scan is exact (no approximate index): at the target scale of ~100k
1280-d float32 rows a linear pass is a sub-second matrix-vector product,
and exactness keeps re-ranking experiments clean. The store is walked in
fixed-size row blocks; each block contributes every row that could still
reach the top k (score >= the block's k-th best), and the surviving
candidates are merged by one global sort. Block boundaries are constant,
so serial and thread-pool execution produce identical output.

Ties are broken by ascending document id, giving every query a total,
reproducible order.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyStore, ValidationError
from .feature_model import GlobalDescriptor
from .feature_store import DescriptorStore

BLOCK_ROWS = 8192


def thread_count(requested: int | None = None) -> int:
    """Effective worker count: PATCHRANK_THREADS beats the flag beats cpu_count."""
    env = os.environ.get("PATCHRANK_THREADS")
    if env:
        return max(1, int(env))
    if requested is not None:
        return max(1, requested)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RankedList:
    """Ordered (doc_id, score) results for one query, at most k_limit long.

    Scores are non-increasing and lie in [-1, 1]; equal scores are ordered
    by ascending doc_id; doc_ids are unique.
    """

    query_id: str
    entries: tuple
    k_limit: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((str(d), float(s)) for d, s in self.entries))
        if self.k_limit < 1:
            raise ValidationError(f"k_limit must be positive, got {self.k_limit}")
        if len(self.entries) > self.k_limit:
            raise ValidationError("ranked list longer than its k_limit")
        prev = None
        seen = set()
        for doc_id, score in self.entries:
            if not -1.0 - 1e-6 <= score <= 1.0 + 1e-6:
                raise ValidationError(f"score {score} outside [-1, 1]")
            if doc_id in seen:
                raise ValidationError(f"duplicate doc id {doc_id!r} in ranked list")
            seen.add(doc_id)
            if prev is not None:
                if score > prev[1] or (score == prev[1] and doc_id < prev[0]):
                    raise ValidationError("ranked list is not in (score desc, id asc) order")
            prev = (doc_id, score)

    def ids(self) -> list:
        return [doc_id for doc_id, _ in self.entries]


def cosine_similarity(a, b) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    va = np.asarray(a, dtype=np.float64).reshape(-1)
    vb = np.asarray(b, dtype=np.float64).reshape(-1)
    if va.size != vb.size:
        raise DimensionMismatch(f"vector dims {va.size} != {vb.size}")
    return float(np.clip(np.dot(va, vb), -1.0, 1.0))


def _block_scores(matrix: np.ndarray, query64: np.ndarray) -> np.ndarray:
    # 64-bit accumulation, stored as float32, clamped to absorb rounding.
    scores = matrix.astype(np.float64) @ query64
    return np.clip(scores, -1.0, 1.0).astype(np.float32)


def _block_candidates(matrix, query64, start: int, k: int):
    scores = _block_scores(matrix, query64)
    if scores.size > k:
        # Keep every row tying the block's k-th best: exactness under ties.
        threshold = np.partition(scores, scores.size - k)[scores.size - k]
        keep = np.flatnonzero(scores >= threshold)
    else:
        keep = np.arange(scores.size)
    return [(start + int(i), float(scores[i])) for i in keep]


def top_k(query: GlobalDescriptor, store: DescriptorStore, k: int, threads: int | None = None) -> RankedList:
    """The k store documents most cosine-similar to the query, best first.

    Equivalent to scoring every row and full-sorting by (score desc,
    doc_id asc), then truncating to k; returns all rows when the store is
    smaller than k.
    """
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    if not query.normalized:
        raise ValidationError("query descriptor must be L2-normalized")
    if len(store) == 0:
        raise EmptyStore("cannot search an empty store")
    if query.dim != store.channel_count:
        raise DimensionMismatch(f"query dim {query.dim} != store dim {store.channel_count}")

    query64 = query.vector.astype(np.float64)
    blocks = [(start, min(start + BLOCK_ROWS, len(store))) for start in range(0, len(store), BLOCK_ROWS)]
    workers = thread_count(threads)
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_block = list(
                pool.map(lambda se: _block_candidates(store.matrix[se[0] : se[1]], query64, se[0], k), blocks)
            )
    else:
        per_block = [_block_candidates(store.matrix[s:e], query64, s, k) for s, e in blocks]

    candidates = [item for block in per_block for item in block]
    candidates.sort(key=lambda item: (-item[1], store.ids[item[0]]))
    entries = [(store.ids[row], score) for row, score in candidates[:k]]
    return RankedList(query.id, tuple(entries), k_limit=k)
