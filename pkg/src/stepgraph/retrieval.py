"""Feature-vector retrieval: distances, ranking, average precision, PR curves."""
import csv
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from stepgraph.gnn.model import LAYER_TAGS, forward

log = logging.getLogger(__name__)

METRICS = ("euclidean", "cosine", "histogram_intersection")


class UnknownLayerTag(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class NegativeEntries(ValueError):
    pass


class ZeroVector(ValueError):
    pass


class InconsistentLayerTags(ValueError):
    pass


class NoQueries(ValueError):
    pass


@dataclass
class FeatureVector:
    layer_tag: str
    values: np.ndarray
    model_path: str = ""
    label: Optional[int] = None


def extract_features(model, adj, x, layer_tag, model_path="", label=None) -> FeatureVector:
    """Forward one graph and keep the output of the named layer."""
    if layer_tag not in LAYER_TAGS:
        raise UnknownLayerTag(f"unknown layer {layer_tag!r}; choose from {LAYER_TAGS}")
    values = forward(model, adj, x).layer(layer_tag)
    return FeatureVector(layer_tag, np.array(values, dtype=np.float64), str(model_path), label)


def _values(v):
    return np.asarray(v.values if isinstance(v, FeatureVector) else v, dtype=np.float64)


def distance(a, b, metric="cosine"):
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"vector lengths differ: {a.shape} vs {b.shape}")
    if metric == "euclidean":
        return float(np.sqrt(np.sum((a - b) ** 2)))
    if metric == "cosine":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0 or nb == 0:
            raise ZeroVector("cosine distance is undefined for a zero vector")
        return float(1.0 - np.dot(a, b) / (na * nb))
    if metric == "histogram_intersection":
        if (a < 0).any() or (b < 0).any():
            raise NegativeEntries("histogram intersection needs non-negative vectors")
        denom = min(a.sum(), b.sum())
        if denom == 0:
            return 0.0 if a.sum() == b.sum() else 1.0
        return float(1.0 - np.minimum(a, b).sum() / denom)
    raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")


def average_precision(relevance):
    """Mean of precision@k over the ranks k holding a relevant item (0.0 when none)."""
    hits = 0
    total = 0.0
    for k, rel in enumerate(relevance, start=1):
        if rel:
            hits += 1
            total += hits / k
    return total / hits if hits else 0.0


@dataclass
class RankedEntry:
    corpus_id: str
    distance: float
    relevant: bool


@dataclass
class RankedRetrievalResult:
    query_id: str
    query_label: Optional[int]
    entries: List[RankedEntry] = field(default_factory=list)
    average_precision: float = 0.0
    no_relevant: bool = False

    @property
    def relevance(self):
        return [e.relevant for e in self.entries]


def rank_query(query: FeatureVector, corpus, metric="cosine") -> RankedRetrievalResult:
    """Rank ``corpus`` by ascending distance to ``query``; ties go to the smaller ``model_path``."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    tags = {v.layer_tag for v in corpus} | {query.layer_tag}
    if len(tags) != 1:
        raise InconsistentLayerTags(f"mixed layer tags: {sorted(tags)}")
    scored = sorted(((distance(query, v, metric), v.model_path, v) for v in corpus), key=lambda t: (t[0], t[1]))
    entries = [RankedEntry(path, d, query.label is not None and v.label == query.label) for d, path, v in scored]
    res = RankedRetrievalResult(query.model_path, query.label, entries)
    res.average_precision = average_precision(res.relevance)
    if not any(res.relevance):
        res.no_relevant = True
        if query.label is not None:
            log.warning("query %s has no relevant corpus items; AP set to 0", query.model_path)
    return res


def mean_average_precision(results) -> float:
    results = list(results)
    if not results:
        raise NoQueries("mAP over zero queries")
    return float(sum(r.average_precision for r in results) / len(results))


def pr_points(relevance, total_relevant=None):
    """``(recall, precision)`` after each rank, without interpolation."""
    total = sum(bool(r) for r in relevance) if total_relevant is None else total_relevant
    points, hits = [], 0
    for k, rel in enumerate(relevance, start=1):
        hits += bool(rel)
        points.append((hits / total if total else 0.0, hits / k))
    return points


def precision_recall_curve(results):
    """Per query class, recall and precision at each rank averaged over that class's queries.

    Queries without relevant items are left out. Returns ``{label: [(recall, precision), ...]}``.
    """
    by_class = {}
    for r in results:
        if r.no_relevant:
            continue
        by_class.setdefault(r.query_label, []).append(np.array(pr_points(r.relevance)))
    curves = {}
    for label in sorted(by_class, key=str):
        stacked = by_class[label]
        length = min(len(s) for s in stacked)
        mean = np.mean([s[:length] for s in stacked], axis=0)
        curves[label] = [(float(rc), float(pr)) for rc, pr in mean]
    return curves


# CSV output


def write_features_csv(vectors, path):
    vectors = list(vectors)
    width = len(vectors[0].values) if vectors else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model_path", "label", "layer"] + [f"f{i}" for i in range(width)])
        for v in vectors:
            w.writerow([v.model_path, "" if v.label is None else v.label, v.layer_tag] + [repr(float(x)) for x in v.values])


def read_features_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = [float(row[k]) for k in row if k.startswith("f") and k[1:].isdigit()]
            label = int(row["label"]) if row["label"] != "" else None
            out.append(FeatureVector(row["layer"], np.array(vals), row["model_path"], label))
    return out


def write_rankings_csv(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_id", "rank", "corpus_id", "distance", "relevant"])
        for r in results:
            for k, e in enumerate(r.entries, start=1):
                w.writerow([r.query_id, k, e.corpus_id, repr(e.distance), int(e.relevant)])


def write_pr_csv(curves, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "rank", "recall", "precision"])
        for label, points in curves.items():
            for k, (rc, pr) in enumerate(points, start=1):
                w.writerow([label, k, repr(rc), repr(pr)])
