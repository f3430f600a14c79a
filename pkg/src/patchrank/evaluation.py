"""Retrieval quality metrics: AP@k per query and their mean over a query set.

AP@k follows the landmark-retrieval challenge convention: the precision
sum is normalized by min(#relevant, k), so a query with more relevant
documents than the cutoff can still reach 1.0. Other AP conventions exist;
this one is fixed here and used everywhere in the engine.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyRelevantSet, UnknownQuery, ValidationError


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    ap: float
    relevant_total: int


@dataclass
class EvalReport:
    """mAP@k over a query set, with per-query detail.

    Queries whose label never occurs in the index split cannot be scored;
    they are listed in `excluded` and do not enter the mean.
    """

    query_count: int
    map_at_k: float
    per_query: list
    k: int
    excluded: list = field(default_factory=list)


def average_precision_at_k(ranked_ids: Sequence[str], relevant: set, k: int) -> float:
    """AP@k = sum of precision-at-hit over the first k ranks / min(|relevant|, k)."""
    if not relevant:
        raise EmptyRelevantSet("relevant set must be non-empty")
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    window = list(ranked_ids)[:k]
    if len(set(window)) != len(window):
        raise ValidationError("ranked ids contain duplicates")
    hits = 0
    precision_sum = 0.0
    for rank, doc_id in enumerate(window, start=1):
        if doc_id in relevant:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / min(len(relevant), k)


def evaluate(ranked_lists, manifest_entries) -> EvalReport:
    """Score every ranked list against label-equality ground truth.

    A document is relevant to a query iff its label equals the query's
    label among index-split entries. Every query id must appear in the
    manifest with split == query.
    """
    lists = list(ranked_lists)
    if not lists:
        raise ValidationError("no ranked lists to evaluate")
    query_label = {e.id: e.label for e in manifest_entries if e.split == "query"}
    index_ids_by_label: dict = {}
    for e in manifest_entries:
        if e.split == "index":
            index_ids_by_label.setdefault(e.label, set()).add(e.id)

    per_query = []
    excluded = []
    for ranked in lists:
        if ranked.query_id not in query_label:
            raise UnknownQuery(ranked.query_id)
        relevant = index_ids_by_label.get(query_label[ranked.query_id], set())
        if not relevant:
            excluded.append(ranked.query_id)
            continue
        ap = average_precision_at_k(ranked.ids(), relevant, ranked.k_limit)
        per_query.append(QueryResult(ranked.query_id, ap, len(relevant)))
    if not per_query:
        raise ValidationError("no scorable queries (all labels missing from the index split)")
    return EvalReport(
        query_count=len(per_query),
        map_at_k=float(np.mean([q.ap for q in per_query])),
        per_query=per_query,
        k=lists[0].k_limit,
        excluded=excluded,
    )


def format_report(report: EvalReport) -> str:
    """Tab-separated text: per-query lines then a summary line."""
    lines = ["query_id\tap\trelevant_total"]
    for q in report.per_query:
        lines.append(f"{q.query_id}\t{q.ap:.9g}\t{q.relevant_total}")
    lines.append(f"# mAP@{report.k}\t{report.map_at_k:.9g}\tqueries={report.query_count}\texcluded={len(report.excluded)}")
    return "\n".join(lines) + "\n"


def report_records(report: EvalReport) -> list:
    """The report as structured records: one per query plus a summary."""
    records = [
        {"record": "query", "query_id": q.query_id, "ap": q.ap, "relevant_total": q.relevant_total}
        for q in report.per_query
    ]
    records.append(
        {
            "record": "summary",
            "map_at_k": report.map_at_k,
            "k": report.k,
            "query_count": report.query_count,
            "excluded": list(report.excluded),
        }
    )
    return records
