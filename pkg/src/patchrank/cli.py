"""Command-line pipeline: ingest -> search -> rerank -> evaluate, plus trainers
and a synthetic-data generator.

Stages compose through files only, so each is independently testable and
the re-ranking ablation is a two-command diff. Ranked lists travel as
UTF-8, LF-terminated TSV: query_id, rank (1-based), doc_id, score, with
rerank appending global_score, local_score, final_score columns. Scores
are printed with 9 significant digits, which round-trips float32 exactly;
reruns with the same inputs are byte-identical.

Exit codes: 0 success, 2 input/validation error, 3 I/O error, 4 numeric
failure. PATCHRANK_THREADS overrides --threads.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, fusion, metric_head, synth
from .errors import MissingFeatureMap, PatchRankError, ValidationError, ZeroVector
from .feature_model import average_pool, l2_normalize
from .feature_store import (
    DescriptorStore,
    build_store,
    load_manifest,
    read_entry_map,
    read_store,
    write_store,
)
from .global_search import RankedList, top_k
from .local_rerank import order_pairs, score_candidates


def _fmt(score: float) -> str:
    return f"{score:.9g}"


def write_ranked_file(path, ranked_lists) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ranked in ranked_lists:
            for rank, (doc_id, score) in enumerate(ranked.entries, start=1):
                fh.write(f"{ranked.query_id}\t{rank}\t{doc_id}\t{_fmt(score)}\n")


def read_ranked_file(path) -> list:
    """Parse a ranked-list TSV back into RankedList objects (4 or 7 columns)."""
    per_query: dict = {}
    order = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) not in (4, 7):
            raise ValidationError(f"ranked list line {line_no}: expected 4 or 7 fields, got {len(fields)}")
        query_id, _, doc_id, score = fields[:4]
        if query_id not in per_query:
            per_query[query_id] = []
            order.append(query_id)
        per_query[query_id].append((doc_id, float(np.float32(float(score)))))
    if not order:
        raise ValidationError(f"{path}: empty ranked-list file")
    return [RankedList(qid, tuple(per_query[qid]), k_limit=len(per_query[qid])) for qid in order]


def write_reranked_file(path, results) -> None:
    """results: iterable of (query_id, ordered ScoredPair list)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for query_id, pairs in results:
            for rank, p in enumerate(pairs, start=1):
                fh.write(
                    f"{query_id}\t{rank}\t{p.doc_id}\t{_fmt(p.final_score)}"
                    f"\t{_fmt(p.global_score)}\t{_fmt(p.local_score)}\t{_fmt(p.final_score)}\n"
                )


def _load_entries(manifest_path):
    entries = load_manifest(manifest_path)
    return entries, Path(manifest_path).parent


def _query_descriptor(entry, root, head):
    fmap = read_entry_map(entry, root)
    desc = average_pool(fmap)
    if head is not None:
        return metric_head.project(desc, head)
    from .feature_model import GlobalDescriptor

    return GlobalDescriptor(desc.id, l2_normalize(desc.vector), normalized=True)


def cmd_ingest(args) -> int:
    entries, root = _load_entries(args.manifest)
    head = metric_head.load_head(args.head) if args.head else None
    index_entries = [e for e in entries if e.split == "index"]
    store, skipped = build_store(index_entries, root, head)
    write_store(store, args.store)
    for doc_id in skipped:
        print(f"skipped degenerate descriptor: {doc_id}")
    print(f"ingested {len(store)} documents ({len(skipped)} skipped) -> {args.store}")
    return 0


def cmd_search(args) -> int:
    store = read_store(args.store)
    entries, root = _load_entries(args.manifest)
    head = metric_head.load_head(args.head) if args.head else None
    queries = [e for e in entries if e.split == "query"]
    if not queries:
        raise ValidationError("manifest has no query-split entries")
    ranked_lists = []
    for entry in queries:
        query = _query_descriptor(entry, root, head)
        ranked_lists.append(top_k(query, store, args.k, threads=args.threads))
    write_ranked_file(args.output, ranked_lists)
    print(f"searched {len(ranked_lists)} queries (k={args.k}) -> {args.output}")
    return 0


def cmd_rerank(args) -> int:
    store = read_store(args.store)
    entries, root = _load_entries(args.manifest)
    by_id = {e.id: e for e in entries}
    known = set(store.ids)
    if args.fusion:
        model = fusion.load_fusion(args.fusion)
    else:
        model = fusion.LinearFusion(args.alpha)
    ranked_lists = read_ranked_file(args.ranked)

    def map_source(doc_id):
        if doc_id not in by_id:
            raise MissingFeatureMap(doc_id)
        return read_entry_map(by_id[doc_id], root)

    results = []
    for initial in ranked_lists:
        if initial.query_id not in by_id:
            raise MissingFeatureMap(initial.query_id)
        unknown = [d for d in initial.ids() if d not in known]
        if unknown:
            raise ValidationError(f"ranked list ids missing from store: {unknown[:3]}")
        query_map = read_entry_map(by_id[initial.query_id], root)
        pairs = order_pairs(score_candidates(query_map, initial, map_source, model, threads=args.threads))
        results.append((initial.query_id, pairs))
    write_reranked_file(args.output, results)
    print(f"reranked {len(results)} queries -> {args.output}")
    return 0


def cmd_train_head(args) -> int:
    entries, root = _load_entries(args.manifest)
    train = [e for e in entries if e.split == "train"]
    if not train:
        raise ValidationError("manifest has no train-split entries")
    pooled = []
    labels = []
    for entry in train:
        pooled.append(average_pool(read_entry_map(entry, root)).vector)
        labels.append(entry.label)
    config = metric_head.TrainerConfig(
        learning_rate=args.lr,
        adam_epsilon=args.epsilon,
        adam_beta1=args.beta1,
        adam_beta2=args.beta2,
        epochs=args.epochs,
        margin=args.margin,
        classes_per_batch=args.classes_per_batch,
        samples_per_class=args.samples_per_class,
        seed=args.seed,
        out_dim=args.out_dim,
    )
    head, history = metric_head.train_head(config, np.vstack(pooled), labels)
    metric_head.save_head(head, args.checkpoint)
    log_text = metric_head.format_training_log(history)
    if args.log:
        Path(args.log).write_text(log_text, encoding="utf-8")
    else:
        sys.stdout.write(log_text)
    print(f"trained head ({config.epochs} epochs) -> {args.checkpoint}")
    return 0


def cmd_train_fusion(args) -> int:
    """Harvest (global, local, relevant) samples from stage-1 lists over the
    train split, then fit the fusion network on them."""
    entries, root = _load_entries(args.manifest)
    head = metric_head.load_head(args.head) if args.head else None
    train = [e for e in entries if e.split == "train"]
    if len(train) < 2:
        raise ValidationError("need at least two train-split entries")
    store, _ = build_store(train, root, head)
    by_id = {e.id: e for e in train}
    maps = {}

    def map_source(doc_id):
        if doc_id not in maps:
            maps[doc_id] = read_entry_map(by_id[doc_id], root)
        return maps[doc_id]

    from .feature_model import extract_patches
    from .local_rerank import local_score

    samples = []
    for entry in train:
        query = _query_descriptor(entry, root, head)
        ranked = top_k(query, store, args.k, threads=args.threads)
        query_patches = extract_patches(map_source(entry.id))
        for doc_id, global_score in ranked.entries:
            if doc_id == entry.id:
                continue  # self-match teaches nothing
            local = local_score(query_patches, extract_patches(map_source(doc_id)))
            samples.append((global_score, local, by_id[doc_id].label == entry.label))
    config = fusion.FusionTrainConfig(
        learning_rate=args.lr, epochs=args.epochs, seed=args.seed, hidden=args.hidden
    )
    model, final_loss = fusion.train_fusion(samples, config)
    fusion.save_fusion(model, args.checkpoint)
    print(f"trained fusion on {len(samples)} samples, final loss {final_loss:.6f} -> {args.checkpoint}")
    return 0


def cmd_evaluate(args) -> int:
    entries, _ = _load_entries(args.manifest)
    ranked_lists = read_ranked_file(args.ranked)
    report = evaluation.evaluate(ranked_lists, entries)
    sys.stdout.write(evaluation.format_report(report))
    if args.json:
        with open(args.json, "w", encoding="utf-8", newline="\n") as fh:
            for record in evaluation.report_records(report):
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


def cmd_synth(args) -> int:
    config = synth.SynthConfig(
        classes=args.classes,
        per_class=args.per_class,
        height=args.height,
        width=args.width,
        channels=args.channels,
        noise=args.noise,
        patch_permute=args.patch_permute,
        seed=args.seed,
    )
    entries = synth.generate_dataset(config, args.out_dir)
    splits = {s: sum(1 for e in entries if e.split == s) for s in ("index", "query", "train")}
    print(f"generated {len(entries)} maps into {args.out_dir} (splits: {splits})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a descriptor store from the manifest's index split")
    p.add_argument("manifest")
    p.add_argument("store")
    p.add_argument("--head", help="projection head checkpoint to apply")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("search", help="rank the store for each query-split entry")
    p.add_argument("store")
    p.add_argument("manifest")
    p.add_argument("output")
    p.add_argument("-k", type=int, default=100)
    p.add_argument("--head", help="projection head checkpoint (must match the store)")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("rerank", help="re-order ranked lists by fused global+local score")
    p.add_argument("store")
    p.add_argument("ranked")
    p.add_argument("manifest")
    p.add_argument("output")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--fusion", help="fusion checkpoint path")
    group.add_argument("--alpha", type=float, help="linear blend weight on the global score")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("train-head", help="fit the metric-learning projection head")
    p.add_argument("manifest")
    p.add_argument("checkpoint")
    p.add_argument("--log", help="training log path (stdout if omitted)")
    p.add_argument("--lr", type=float, default=1.5e-4)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--classes-per-batch", type=int, default=4)
    p.add_argument("--samples-per-class", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dim", type=int, default=64)
    p.set_defaults(func=cmd_train_head)

    p = sub.add_parser("train-fusion", help="fit the fusion network on train-split rankings")
    p.add_argument("manifest")
    p.add_argument("checkpoint")
    p.add_argument("-k", type=int, default=100)
    p.add_argument("--head", help="projection head checkpoint for the global scores")
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_train_fusion)

    p = sub.add_parser("evaluate", help="mAP@k of a ranked-list file against the manifest")
    p.add_argument("ranked")
    p.add_argument("manifest")
    p.add_argument("--json", help="also write one JSON record per query plus a summary")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic dataset (feature files + manifest)")
    p.add_argument("out_dir")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--height", type=int, default=7)
    p.add_argument("--width", type=int, default=7)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--patch-permute", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PatchRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
