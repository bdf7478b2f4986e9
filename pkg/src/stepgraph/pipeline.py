"""Dataset manifests, stratified splits and end-to-end experiments."""
import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from stepgraph import synthetic
from stepgraph.gnn import (
    GcnConfig,
    Sample,
    TrainConfig,
    evaluate,
    init_params,
    normalize_adjacency,
    train,
)
from stepgraph.gnn.model import LAYER_TAGS
from stepgraph.graph import build_graph, build_vocabulary, encode_features
from stepgraph.retrieval import (
    METRICS,
    FeatureVector,
    extract_features,
    mean_average_precision,
    precision_recall_curve,
    rank_query,
)
from stepgraph.step import read_step

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


class ManifestError(ValueError):
    pass


class ClassTooSmall(ValueError):
    pass


@dataclass
class ManifestEntry:
    path: str
    class_id: int
    class_name: str = ""
    split: Optional[str] = None


@dataclass
class DatasetManifest:
    """Models with their class labels. Relative entry paths resolve against ``root``."""

    entries: List[ManifestEntry]
    class_names: List[str]
    schema: str = "AP214"
    root: Path = field(default_factory=Path)

    @property
    def num_classes(self):
        return len(self.class_names)

    def resolve(self, entry):
        return self.root / entry.path

    def labels(self):
        return [e.class_id for e in self.entries]

    def validate(self, check_paths=True):
        ids = sorted({e.class_id for e in self.entries})
        if ids != list(range(self.num_classes)):
            raise ManifestError(f"class ids must be contiguous from 0 to {self.num_classes - 1}, got {ids}")
        for e in self.entries:
            if e.split is not None and e.split not in SPLITS:
                raise ManifestError(f"{e.path}: unknown split {e.split!r}")
            if check_paths and not self.resolve(e).is_file():
                raise ManifestError(f"missing model file {self.resolve(e)}")

    def to_dict(self):
        entries = []
        for e in self.entries:
            d = {"path": e.path, "class_id": e.class_id, "class_name": e.class_name}
            if e.split is not None:
                d["split"] = e.split
            entries.append(d)
        return {"schema": self.schema, "classes": list(self.class_names), "entries": entries}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def load_manifest(path, check_paths=True) -> DatasetManifest:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
        entries = [ManifestEntry(str(e["path"]), int(e["class_id"]), str(e.get("class_name", "")), e.get("split"))
                   for e in doc["entries"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    names = doc.get("classes")
    if names is None:
        by_id = {e.class_id: e.class_name for e in entries}
        names = [by_id.get(i, str(i)) for i in range(max(by_id, default=-1) + 1)]
    m = DatasetManifest(entries, list(names), doc.get("schema", "AP214"), path.parent)
    m.validate(check_paths)
    return m


# splits


@dataclass
class SplitAssignment:
    tags: List[str]
    seed: int

    def indices(self, tag):
        return [i for i, t in enumerate(self.tags) if t == tag]

    def counts(self):
        return {s: self.tags.count(s) for s in SPLITS}


def _round_half_up(q):
    return math.floor(q + Fraction(1, 2))


def _quotas(sizes, fraction):
    """Integer share of each class whose total is the rounded overall share (largest remainder)."""
    exact = [fraction * n for n in sizes]
    out = [math.floor(q) for q in exact]
    missing = _round_half_up(fraction * sum(sizes)) - sum(out)
    order = sorted(range(len(sizes)), key=lambda c: (-(exact[c] - out[c]), c))
    for c in order[:missing]:
        out[c] += 1
    return out


def split_dataset(manifest, seed, test_fraction=Fraction(1, 10), val_fraction=Fraction(1, 10)) -> SplitAssignment:
    """Stratified train/val/test split: ``test_fraction`` of the whole, then ``val_fraction`` of the rest."""
    labels = manifest.labels() if hasattr(manifest, "labels") else list(manifest)
    num_classes = max(labels) + 1 if labels else 0
    members = [[i for i, y in enumerate(labels) if y == c] for c in range(num_classes)]
    for c, m in enumerate(members):
        if len(m) < 3:
            raise ClassTooSmall(f"class {c} has {len(m)} model(s); at least 3 are needed")
    sizes = [len(m) for m in members]
    n_test = _quotas(sizes, Fraction(test_fraction))
    n_val = _quotas([s - t for s, t in zip(sizes, n_test)], Fraction(val_fraction))
    rng = np.random.default_rng(seed)
    tags = ["train"] * len(labels)
    for c, m in enumerate(members):
        order = [m[i] for i in rng.permutation(len(m))]
        for i in order[:n_test[c]]:
            tags[i] = "test"
        for i in order[n_test[c]:n_test[c] + n_val[c]]:
            tags[i] = "val"
    return SplitAssignment(tags, seed)


def manifest_split(manifest):
    """Split stored in the manifest itself, or ``None`` if any entry lacks one."""
    if manifest.entries and all(e.split for e in manifest.entries):
        return SplitAssignment([e.split for e in manifest.entries], -1)
    return None


# corpus


def generate_synthetic_corpus(out_dir, class_specs=synthetic.DEFAULT_CLASSES, count_per_class=30, seed=0):
    """Write ``count_per_class`` STEP files per class template plus ``manifest.json``."""
    specs = synthetic.resolve_specs(class_specs)
    if len(specs) < 2:
        raise ValueError("need at least two class templates")
    out_dir = Path(out_dir)
    entries = []
    for ci, spec in enumerate(specs):
        (out_dir / spec.name).mkdir(parents=True, exist_ok=True)
        for mi in range(count_per_class):
            rel = f"{spec.name}/{spec.name}_{mi:03d}.stp"
            text = synthetic.render_model(spec.template, f"{spec.name}_{mi:03d}", synthetic.model_rng(seed, ci, mi))
            (out_dir / rel).write_bytes(text.encode("ascii"))
            entries.append(ManifestEntry(rel, ci, spec.name))
    manifest = DatasetManifest(entries, [s.name for s in specs], "AP214", out_dir)
    manifest.save(out_dir / "manifest.json")
    return manifest


def _load_one(args):
    path, label = args
    return build_graph(read_step(path), str(path), label)


def load_graphs(manifest, workers=1):
    """Parse every manifest entry into a labelled graph, in manifest order."""
    jobs = [(str(manifest.resolve(e)), e.class_id) for e in manifest.entries]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            graphs = list(pool.map(_load_one, jobs, chunksize=8))
    else:
        graphs = [_load_one(j) for j in jobs]
    for g, e in zip(graphs, manifest.entries):
        g.source_path = e.path
    return graphs


def make_samples(graphs, vocab):
    samples, oov = [], 0
    for g in graphs:
        x, hits = encode_features(g, vocab)
        oov += hits
        samples.append(Sample(normalize_adjacency(g), x, g.label))
    return samples, oov


# metrics


def confusion_matrix(y_true, y_pred, num_classes):
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[t, p] += 1
    return cm


def macro_precision_recall(cm):
    tp = np.diag(cm).astype(float)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    return float(precision.mean()), float(recall.mean())


# experiments


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    bottleneck: int = 32
    pooling: str = "attention"
    gcn_dims: Sequence[int] = (64, 32, 32)
    seed: int = 0
    retrieval: bool = True

    def snapshot(self):
        d = asdict(self)
        d["gcn_dims"] = list(self.gcn_dims)
        return d


@dataclass
class ExperimentResult:
    report: dict
    model: object
    vocab: object
    split: SplitAssignment
    history: list


def run_classification_experiment(manifest, config: ExperimentConfig, graphs=None, split=None) -> ExperimentResult:
    """Convert, build the vocabulary on the train split, train, test, and optionally run retrieval."""
    if graphs is None:
        graphs = load_graphs(manifest)
    if split is None:
        split = manifest_split(manifest) or split_dataset(manifest, config.seed)
    parts = {s: [graphs[i] for i in split.indices(s)] for s in SPLITS}
    vocab = build_vocabulary(parts["train"])
    samples, oov = {}, {}
    for s in SPLITS:
        samples[s], oov[s] = make_samples(parts[s], vocab)

    gcfg = GcnConfig(len(vocab), manifest.num_classes, tuple(config.gcn_dims), config.bottleneck,
                     config.pooling, config.seed)
    model = init_params(gcfg)
    history = train(model, samples["train"], samples["val"], config.train)

    test_loss, test_acc, preds = evaluate(model, samples["test"])
    y_true = [s.label for s in samples["test"]]
    cm = confusion_matrix(y_true, preds, manifest.num_classes)
    precision, recall = macro_precision_recall(cm)
    report = {
        "config": config.snapshot(),
        "split_counts": split.counts(),
        "vocabulary_size": len(vocab),
        "oov_hits": oov,
        "epochs": [asdict(m) for m in history],
        "test": {
            "accuracy": test_acc,
            "loss": test_loss,
            "macro_precision": precision,
            "macro_recall": recall,
            "confusion": cm.tolist(),
        },
    }
    result = ExperimentResult(report, model, vocab, split, history)
    if config.retrieval:
        report["retrieval"] = run_retrieval_experiment(model, samples["train"], parts["train"],
                                                       samples["test"], parts["test"])
    return result


def feature_table(model, samples, graphs, layer):
    return [extract_features(model, s.adj, s.x, layer, g.source_path, s.label) for s, g in zip(samples, graphs)]


def _shift_nonnegative(queries, corpus):
    lo = min(float(v.values.min()) for v in queries + corpus)
    if lo >= 0:
        return queries, corpus, False
    shift = lambda vs: [FeatureVector(v.layer_tag, v.values - lo, v.model_path, v.label) for v in vs]
    return shift(queries), shift(corpus), True


def run_retrieval_experiment(model, train_samples, train_graphs, test_samples, test_graphs,
                             metrics=METRICS, layers=LAYER_TAGS):
    """mAP of test queries against the train corpus for every (metric, layer) cell.

    Histogram intersection needs non-negative vectors; for layers that have
    negative entries both sides are shifted by the same global minimum and
    the cell is marked ``shifted``.
    """
    grid, curves = {}, {}
    for layer in layers:
        corpus = feature_table(model, train_samples, train_graphs, layer)
        queries = feature_table(model, test_samples, test_graphs, layer)
        for metric in metrics:
            q, c, shifted = (queries, corpus, False)
            if metric == "histogram_intersection":
                q, c, shifted = _shift_nonnegative(queries, corpus)
            results = [rank_query(v, c, metric) for v in q]
            cell = {"map": mean_average_precision(results), "shifted": shifted,
                    "queries_without_relevant": sum(r.no_relevant for r in results)}
            grid.setdefault(metric, {})[layer] = cell
            curves[(metric, layer)] = results
    best = max(((grid[m][l]["map"], m, l) for m in grid for l in grid[m]), key=lambda t: t[0])
    ref = grid.get("cosine", {}).get("softmax", {}).get("map")
    out = {
        "grid": grid,
        "best": {"metric": best[1], "layer": best[2], "map": best[0]},
        "softmax_cosine_is_best": ref is not None and ref >= best[0],
    }
    if ref is not None and ref < best[0]:
        out["deviation"] = (f"softmax+cosine mAP {ref:.4f} is below the best cell "
                            f"{best[1]}+{best[2]} ({best[0]:.4f})")
    pr_key = ("cosine", "softmax") if ref is not None else (best[1], best[2])
    out["pr_curve"] = {"metric": pr_key[0], "layer": pr_key[1],
                       "classes": {str(k): v for k, v in precision_recall_curve(curves[pr_key]).items()}}
    return out


# report output


def write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_metrics_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"])
        for m in history:
            w.writerow([m.epoch, repr(m.train_loss), repr(m.train_acc),
                        "" if m.val_loss is None else repr(m.val_loss),
                        "" if m.val_acc is None else repr(m.val_acc), repr(m.lr)])


def write_pr_curve_csv(retrieval, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "rank", "recall", "precision"])
        for label, points in retrieval["pr_curve"]["classes"].items():
            for k, (rc, pr) in enumerate(points, start=1):
                w.writerow([label, k, repr(rc), repr(pr)])


def default_workspace():
    return Path(os.environ.get("STEPGRAPH_WORKSPACE", "."))
