"""Stage-2 re-ranking by patch matching.

For a query/candidate pair, every query patch takes the best cosine it
achieves against any candidate patch, and the per-patch bests are
averaged. The comparison is deliberately one-directional (query-side mean
of candidate-side max): swapping the roles gives a different number, and
the engine always scores from the query's perspective.

With both patch sets unit-normalized at extraction, the whole score is
one (Hq*Wq) x (Hd*Wd) matrix product followed by a row max and a mean;
this is the engine's hot loop.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, EmptyPatchSet, MissingFeatureMap, ZeroPatch
from .feature_model import FeatureMap, PatchSet, extract_patches
from .global_search import RankedList, thread_count
from .fusion import fuse


@dataclass(frozen=True)
class ScoredPair:
    """One candidate's global, local, and fused scores for a single query."""

    doc_id: str
    global_score: float
    local_score: float
    final_score: float


def local_score(query: PatchSet, doc: PatchSet) -> float:
    """Mean over query patches of the best cosine against any doc patch.

    Patch counts may differ; channel dimensions must match. The result is
    exactly invariant to doc patch order and exactly monotone under doc
    patch insertion: each doc patch's similarity column is computed by an
    independent matrix-vector product against the fixed query matrix (one
    big matrix product would let the BLAS kernel's tiling leak patch
    position into the low bits), and max/maximum are order-free selections.
    """
    if query.count == 0 or doc.count == 0:
        raise EmptyPatchSet("both patch sets must be non-empty")
    if query.dim != doc.dim:
        raise DimensionMismatch(f"patch dims {query.dim} != {doc.dim}")
    best = np.full(query.count, -np.inf, dtype=np.float32)
    buf = np.empty(query.dim, dtype=np.float32)
    for j in range(doc.count):
        buf[:] = doc.patches[j]
        np.maximum(best, query.patches @ buf, out=best)
    return float(np.clip(best, -1.0, 1.0).mean(dtype=np.float64))


def score_candidates(
    query_map: FeatureMap,
    initial: RankedList,
    map_source: Callable[[str], FeatureMap],
    fusion,
    threads: int | None = None,
) -> list:
    """ScoredPairs for every entry of `initial`, in the input list's order.

    Candidate maps are fetched lazily from `map_source`, so only the
    current top-K set is resident. A candidate whose map has a dead (zero)
    patch gets local_score 0 rather than failing the query; a candidate
    whose map cannot be fetched raises MissingFeatureMap.
    """
    query_patches = extract_patches(query_map)

    def score_one(item):
        doc_id, global_score = item
        try:
            doc_map = map_source(doc_id)
        except (KeyError, FileNotFoundError):
            raise MissingFeatureMap(doc_id) from None
        try:
            local = local_score(query_patches, extract_patches(doc_map))
        except ZeroPatch:
            local = 0.0
        return ScoredPair(doc_id, global_score, local, fuse(global_score, local, fusion))

    workers = thread_count(threads)
    if workers > 1 and len(initial.entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(score_one, initial.entries))
    return [score_one(item) for item in initial.entries]


def order_pairs(pairs) -> list:
    """Final-score descending, ties by ascending doc id."""
    return sorted(pairs, key=lambda p: (-p.final_score, p.doc_id))


def rerank(
    query_id: str,
    query_map: FeatureMap,
    initial: RankedList,
    map_source: Callable[[str], FeatureMap],
    fusion,
    threads: int | None = None,
) -> RankedList:
    """Re-order a stage-1 list by fused global+local score.

    Pure permutation: the output contains exactly the input's documents,
    re-sorted by final score with the usual id tie-break.
    """
    pairs = order_pairs(score_candidates(query_map, initial, map_source, fusion, threads))
    entries = tuple((p.doc_id, p.final_score) for p in pairs)
    return RankedList(query_id, entries, k_limit=initial.k_limit)
