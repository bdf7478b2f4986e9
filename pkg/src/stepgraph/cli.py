"""``stepgraph`` command-line interface."""
import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from stepgraph import pipeline, synthetic
from stepgraph.gnn import POOLINGS, GcnConfig, TrainConfig, evaluate, init_params, load_checkpoint, save_checkpoint
from stepgraph.gnn.model import LAYER_TAGS
from stepgraph.graph import build_graph, decompose_assembly, export_graphml, graph_stats
from stepgraph.retrieval import (
    METRICS,
    mean_average_precision,
    rank_query,
    write_features_csv,
    write_rankings_csv,
)
from stepgraph.step import StepError, read_step

log = logging.getLogger("stepgraph")

STEP_SUFFIXES = {".stp", ".step"}


class CliError(Exception):
    pass


def _path(args, p):
    p = Path(p)
    return p if p.is_absolute() else Path(args.workspace) / p


# convert


def _convert_one(job):
    src, out_dir, decompose = job
    try:
        graph = build_graph(read_step(src), src.name)
        parts = decompose_assembly(graph) if decompose else [graph]
        written = []
        for k, part in enumerate(parts):
            name = src.stem + (f"__{k}" if decompose and len(parts) > 1 else "") + ".graphml"
            export_graphml(part, out_dir / name)
            written.append(name)
        return {"file": str(src), "status": "ok", "nodes": graph.num_nodes, "edges": graph.num_edges,
                "dangling": graph.dangling_references, "outputs": written, "error": ""}
    except (StepError, OSError) as exc:
        return {"file": str(src), "status": "failed", "nodes": "", "edges": "", "dangling": "",
                "outputs": [], "error": f"{type(exc).__name__}: {exc}"}


def cmd_convert(args):
    src = _path(args, args.input)
    out_dir = _path(args, args.out)
    if src.is_dir():
        files = sorted(p for p in src.rglob("*") if p.suffix.lower() in STEP_SUFFIXES)
    elif src.is_file():
        files = [src]
    else:
        raise CliError(f"no such input {src}")
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(f, out_dir, args.decompose) for f in files]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(_convert_one, jobs))
    else:
        rows = [_convert_one(j) for j in jobs]
    with open(out_dir / "convert_log.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "status", "nodes", "edges", "dangling", "outputs", "error"])
        for r in rows:
            w.writerow([r["file"], r["status"], r["nodes"], r["edges"], r["dangling"], ";".join(r["outputs"]), r["error"]])
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        log.warning("skipped %s: %s", r["file"], r["error"])
    print(f"converted {len(rows) - len(failed)}/{len(rows)} file(s) into {out_dir}")
    if failed and args.strict:
        raise CliError({"failed": [{"file": r["file"], "error": r["error"]} for r in failed]})
    return 0


# stats


def cmd_stats(args):
    manifest = pipeline.load_manifest(_path(args, args.manifest))
    graphs = pipeline.load_graphs(manifest, args.workers)
    groups = {name: [] for name in manifest.class_names}
    for g in graphs:
        groups[manifest.class_names[g.label]].append(g)
    stats = graph_stats(groups)
    rows = [(name, s.count, s.mean, s.variance) for name, s in stats.classes.items()]
    rows.append(("TOTAL", stats.total.count, stats.total.mean, stats.total.variance))
    if args.out:
        with open(_path(args, args.out), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "models", "mean_nodes", "variance_nodes"])
            w.writerows([r[0], r[1], repr(r[2]), repr(r[3])] for r in rows)
    print(f"{'class':<16}{'models':>8}{'mean nodes':>14}{'variance':>16}")
    for name, n, mean, var in rows:
        print(f"{name:<16}{n:>8}{mean:>14.2f}{var:>16.2f}")
    return 0


# train / eval


def _experiment_config(args):
    tc = TrainConfig(epochs=args.epochs, lr=args.lr, gamma=args.gamma, window=args.window,
                     batch_size=args.batch_size, seed=args.seed)
    return pipeline.ExperimentConfig(train=tc, bottleneck=args.bottleneck, pooling=args.pooling,
                                     seed=args.seed, retrieval=not args.no_retrieval)


def cmd_train(args):
    manifest = pipeline.load_manifest(_path(args, args.manifest))
    result = pipeline.run_classification_experiment(manifest, _experiment_config(args),
                                                    graphs=pipeline.load_graphs(manifest, args.workers))
    ckpt = _path(args, args.out)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    meta = {"class_names": manifest.class_names, "split_seed": args.seed,
            "split": {e.path: t for e, t in zip(manifest.entries, result.split.tags)}}
    save_checkpoint(ckpt, result.model, result.vocab, meta)
    metrics = _path(args, args.metrics) if args.metrics else ckpt.with_suffix(".metrics.csv")
    pipeline.write_metrics_csv(result.history, metrics)
    report = _path(args, args.report) if args.report else ckpt.with_suffix(".report.json")
    pipeline.write_report(result.report, report)
    if "retrieval" in result.report:
        pipeline.write_pr_curve_csv(result.report["retrieval"], ckpt.with_suffix(".pr.csv"))
    test = result.report["test"]
    print(f"test accuracy {test['accuracy']:.4f}  macro precision {test['macro_precision']:.4f}  "
          f"macro recall {test['macro_recall']:.4f}")
    print(f"checkpoint {ckpt}")
    return 0


def _load_for_eval(args):
    ckpt = _path(args, args.ckpt)
    if not ckpt.is_file():
        raise CliError(f"checkpoint not found: {ckpt}")
    model, vocab, meta = load_checkpoint(ckpt)
    manifest = pipeline.load_manifest(_path(args, args.manifest))
    stored = meta.get("split") or {}
    if stored and all(e.path in stored for e in manifest.entries):
        split = pipeline.SplitAssignment([stored[e.path] for e in manifest.entries], meta.get("split_seed", -1))
    else:
        split = pipeline.manifest_split(manifest) or pipeline.split_dataset(manifest, args.seed)
    graphs = pipeline.load_graphs(manifest, getattr(args, "workers", 1))
    return model, vocab, manifest, split, graphs


def _subset(split, graphs, vocab, tag):
    idx = list(range(len(graphs))) if tag == "all" else split.indices(tag)
    chosen = [graphs[i] for i in idx]
    samples, _ = pipeline.make_samples(chosen, vocab)
    return samples, chosen


def cmd_eval(args):
    model, vocab, manifest, split, graphs = _load_for_eval(args)
    samples, _ = _subset(split, graphs, vocab, args.split)
    if not samples:
        raise CliError(f"split {args.split!r} is empty")
    loss, acc, preds = evaluate(model, samples)
    cm = pipeline.confusion_matrix([s.label for s in samples], preds, manifest.num_classes)
    precision, recall = pipeline.macro_precision_recall(cm)
    out = {"split": args.split, "models": len(samples), "accuracy": acc, "loss": loss,
           "macro_precision": precision, "macro_recall": recall, "confusion": cm.tolist()}
    text = json.dumps(out, indent=1, sort_keys=True)
    if args.out:
        _path(args, args.out).write_text(text + "\n")
    print(text)
    return 0


# retrieval


def cmd_retrieve(args):
    model, vocab, manifest, split, graphs = _load_for_eval(args)
    train_s, train_g = _subset(split, graphs, vocab, "train")
    if args.query:
        qpath = _path(args, args.query)
        qgraph = build_graph(read_step(qpath), qpath.name)
        (qs,), _ = pipeline.make_samples([qgraph], vocab)
        query = pipeline.extract_features(model, qs.adj, qs.x, args.layer, qpath.name)
        corpus = pipeline.feature_table(model, train_s, train_g, args.layer)
        result = rank_query(query, corpus, args.metric)
        out = _path(args, args.out) if args.out else None
        if out:
            write_rankings_csv([result], out)
        else:
            w = csv.writer(sys.stdout)
            w.writerow(["rank", "corpus_id", "distance"])
            for k, e in enumerate(result.entries, start=1):
                w.writerow([k, e.corpus_id, repr(e.distance)])
        return 0

    test_s, test_g = _subset(split, graphs, vocab, "test")
    if args.grid:
        grid = pipeline.run_retrieval_experiment(model, train_s, train_g, test_s, test_g)
        rows = [(m, l, c["map"]) for m, cells in grid["grid"].items() for l, c in cells.items()]
    else:
        corpus = pipeline.feature_table(model, train_s, train_g, args.layer)
        queries = pipeline.feature_table(model, test_s, test_g, args.layer)
        results = [rank_query(q, corpus, args.metric) for q in queries]
        if args.out:
            write_rankings_csv(results, _path(args, args.out))
        rows = [(args.metric, args.layer, mean_average_precision(results))]
    w = csv.writer(sys.stdout)
    w.writerow(["metric", "layer", "map"])
    w.writerows((m, l, repr(v)) for m, l, v in rows)
    return 0


def cmd_export_features(args):
    model, vocab, manifest, split, graphs = _load_for_eval(args)
    samples, chosen = _subset(split, graphs, vocab, args.split)
    vectors = pipeline.feature_table(model, samples, chosen, args.layer)
    write_features_csv(vectors, _path(args, args.out))
    print(f"wrote {len(vectors)} feature vector(s) to {_path(args, args.out)}")
    return 0


def cmd_gen_synthetic(args):
    out = _path(args, args.out)
    manifest = pipeline.generate_synthetic_corpus(out, args.classes, args.count, args.seed)
    print(f"wrote {len(manifest.entries)} model(s) in {manifest.num_classes} classes to {out}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workspace", default=str(pipeline.default_workspace()),
                        help="root for relative paths (default: $STEPGRAPH_WORKSPACE or .)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="stepgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[common], help="STEP files to GraphML")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--decompose", action="store_true", help="one graph per product-definition root")
    p.add_argument("--strict", action="store_true", help="exit 1 if any file fails")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", parents=[common], help="per-class node-count statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", parents=[common], help="train a classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.0005)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--window", type=int, default=6)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--bottleneck", type=int, default=32)
    p.add_argument("--pooling", choices=POOLINGS, default="attention")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", help="per-epoch CSV (default: <out>.metrics.csv)")
    p.add_argument("--report", help="report JSON (default: <out>.report.json)")
    p.add_argument("--no-retrieval", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=pipeline.SPLITS + ("all",), default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retrieve", parents=[common], help="rank models or compute mAP")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--metric", choices=METRICS, default="cosine")
    p.add_argument("--layer", choices=LAYER_TAGS, default="softmax")
    p.add_argument("--query", help="rank the train corpus against this STEP file")
    p.add_argument("--grid", action="store_true", help="mAP for every metric and layer")
    p.add_argument("--out", help="ranked-list CSV")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("export-features", parents=[common], help="write feature vectors as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--layer", choices=LAYER_TAGS, default="softmax")
    p.add_argument("--split", choices=pipeline.SPLITS + ("all",), default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_features)

    p = sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic STEP corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", nargs="+", default=list(synthetic.DEFAULT_CLASSES),
                   choices=sorted(synthetic.TEMPLATES))
    p.add_argument("--count", type=int, default=30, help="models per class")
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, pipeline.ManifestError, StepError, ValueError, OSError) as exc:
        detail = exc.args[0] if isinstance(exc, CliError) and exc.args else str(exc)
        print(json.dumps({"error": type(exc).__name__, "detail": detail}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
