"""Entity-instance graphs built from parsed STEP files.

Every DATA-section instance becomes a node labelled with its entity type and
every reference argument becomes a directed edge from the referencing
instance to the referenced one.
"""
import json
import logging
import warnings
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from stepgraph.step.model import (
    Binary,
    EnumValue,
    Number,
    Reference,
    StepFile,
    Text,
    iter_leaves,
)

log = logging.getLogger(__name__)

OOV_TOKEN = "<OOV>"
DEFAULT_ROOT_TYPES = frozenset({"PRODUCT_DEFINITION"})
GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"


class EmptyCorpus(ValueError):
    pass


class MalformedGraphml(ValueError):
    pass


class NoRootsFound(UserWarning):
    pass


@dataclass(frozen=True)
class GraphNode:
    instance_id: int
    type_token: str
    attrs: Tuple[str, ...] = ()


@dataclass
class CadGraph:
    nodes: List[GraphNode]
    edges: List[Tuple[int, int]]
    source_path: str = ""
    label: Optional[int] = None
    dangling_references: int = 0

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return len(self.edges)

    def type_tokens(self):
        return [n.type_token for n in self.nodes]


def type_token(types):
    """Single type name, or the sorted ``+``-joined names of a complex instance."""
    if len(types) == 1:
        return types[0]
    return "+".join(sorted(types))


def _attr_text(arg):
    if isinstance(arg, Number):
        return arg.text
    if isinstance(arg, Text):
        return arg.value
    if isinstance(arg, EnumValue):
        return f".{arg.name}."
    if isinstance(arg, Binary):
        return f'"{arg.hex}"'
    return None


def build_graph(step_file: StepFile, source_path="", label=None) -> CadGraph:
    """Convert a parsed file into a :class:`CadGraph`.

    Nodes follow ascending instance id. Edges keep one entry per reference
    occurrence, so an instance citing the same target twice yields two
    parallel edges. References to undefined ids are dropped and counted.
    """
    ids = sorted(step_file.instances)
    index = {iid: i for i, iid in enumerate(ids)}
    nodes, edges = [], []
    dangling = 0
    for i, iid in enumerate(ids):
        inst = step_file.instances[iid]
        attrs = []
        for type_args in inst.args:
            for leaf in iter_leaves(type_args):
                if not isinstance(leaf, Reference):
                    text = _attr_text(leaf)
                    if text is not None:
                        attrs.append(text)
        nodes.append(GraphNode(iid, type_token(inst.types), tuple(attrs)))
        for target, _ in inst.references():
            j = index.get(target)
            if j is None:
                dangling += 1
            else:
                edges.append((i, j))
    if dangling:
        log.warning("%s: dropped %d dangling reference(s)", source_path or "<graph>", dangling)
    return CadGraph(nodes, edges, str(source_path), label, dangling)


class EntityVocabulary:
    """Ordered entity-type tokens; the OOV token always sits at the last index."""

    def __init__(self, tokens: Sequence[str]):
        tokens = [t for t in tokens if t != OOV_TOKEN]
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate vocabulary tokens")
        self.tokens = tuple(tokens) + (OOV_TOKEN,)
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def oov_index(self):
        return len(self.tokens) - 1

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index and token != OOV_TOKEN

    def __eq__(self, other):
        return isinstance(other, EntityVocabulary) and self.tokens == other.tokens

    def __repr__(self):
        return f"EntityVocabulary({len(self)} tokens)"

    def index(self, token):
        return self._index.get(token, self.oov_index)

    def to_list(self):
        return list(self.tokens)

    @classmethod
    def from_list(cls, tokens):
        tokens = list(tokens)
        if not tokens or tokens[-1] != OOV_TOKEN:
            raise ValueError("serialized vocabulary must end with the OOV token")
        return cls(tokens[:-1])


def build_vocabulary(graphs) -> EntityVocabulary:
    """Sorted distinct type tokens over ``graphs``, plus the OOV slot."""
    graphs = list(graphs)
    if not graphs:
        raise EmptyCorpus("cannot build a vocabulary from zero graphs")
    seen = set()
    for g in graphs:
        seen.update(n.type_token for n in g.nodes)
    return EntityVocabulary(sorted(seen))


def encode_features(graph: CadGraph, vocab: EntityVocabulary):
    """One-hot node-type matrix (``num_nodes x len(vocab)``) and the number of OOV hits."""
    cols = np.fromiter((vocab.index(n.type_token) for n in graph.nodes), dtype=np.int64,
                       count=graph.num_nodes)
    x = np.zeros((graph.num_nodes, len(vocab)), dtype=np.float64)
    x[np.arange(graph.num_nodes), cols] = 1.0
    return x, int(np.count_nonzero(cols == vocab.oov_index))


def reachable(graph: CadGraph, start: int) -> List[int]:
    """Node indices reachable from ``start`` along directed edges (``start`` included), sorted."""
    succ = [[] for _ in graph.nodes]
    for s, t in graph.edges:
        succ[s].append(t)
    seen = {start}
    queue = deque([start])
    while queue:
        for t in succ[queue.popleft()]:
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return sorted(seen)


def subgraph(graph: CadGraph, keep: Sequence[int], suffix="") -> CadGraph:
    remap = {old: new for new, old in enumerate(keep)}
    edges = [(remap[s], remap[t]) for s, t in graph.edges if s in remap and t in remap]
    return CadGraph([graph.nodes[i] for i in keep], edges, graph.source_path + suffix, graph.label)


def decompose_assembly(graph: CadGraph, root_types=DEFAULT_ROOT_TYPES) -> List[CadGraph]:
    """Split ``graph`` into one component per product-definition root.

    A component holds every node reachable from its root; components may
    overlap. Without any root the whole graph is returned as the single
    component and :class:`NoRootsFound` is warned.
    """
    root_types = frozenset(root_types)
    roots = [i for i, n in enumerate(graph.nodes) if n.type_token in root_types]
    if not roots:
        warnings.warn(f"{graph.source_path or '<graph>'}: no assembly roots of type "
                      f"{sorted(root_types)}", NoRootsFound, stacklevel=2)
        return [graph]
    return [subgraph(graph, reachable(graph, r), f"#{graph.nodes[r].instance_id}") for r in roots]


# GraphML

_KEYS = (
    ("instance_id", "node", "int"),
    ("type", "node", "string"),
    ("attrs", "node", "string"),
    ("source_path", "graph", "string"),
    ("label", "graph", "int"),
)


def _q(tag):
    return f"{{{GRAPHML_NS}}}{tag}"


def graphml_bytes(graph: CadGraph) -> bytes:
    ET.register_namespace("", GRAPHML_NS)
    root = ET.Element(_q("graphml"))
    for name, domain, kind in _KEYS:
        ET.SubElement(root, _q("key"), {"id": name, "for": domain, "attr.name": name, "attr.type": kind})
    g = ET.SubElement(root, _q("graph"), {"id": "G", "edgedefault": "directed"})
    ET.SubElement(g, _q("data"), {"key": "source_path"}).text = graph.source_path
    if graph.label is not None:
        ET.SubElement(g, _q("data"), {"key": "label"}).text = str(graph.label)
    for i, node in enumerate(graph.nodes):
        el = ET.SubElement(g, _q("node"), {"id": f"n{i}"})
        ET.SubElement(el, _q("data"), {"key": "instance_id"}).text = str(node.instance_id)
        ET.SubElement(el, _q("data"), {"key": "type"}).text = node.type_token
        ET.SubElement(el, _q("data"), {"key": "attrs"}).text = json.dumps(list(node.attrs), ensure_ascii=False)
    for k, (s, t) in enumerate(graph.edges):
        ET.SubElement(g, _q("edge"), {"id": f"e{k}", "source": f"n{s}", "target": f"n{t}"})
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


def export_graphml(graph: CadGraph, destination):
    data = graphml_bytes(graph)
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)


def import_graphml(source) -> CadGraph:
    try:
        tree = ET.parse(source)
    except (ET.ParseError, OSError) as exc:
        raise MalformedGraphml(f"cannot read graphml: {exc}") from exc
    root = tree.getroot()
    if root.tag != _q("graphml"):
        raise MalformedGraphml(f"root element is {root.tag!r}, not graphml")
    keys = {k.get("id"): k.get("attr.name") for k in root.findall(_q("key"))}
    g = root.find(_q("graph"))
    if g is None:
        raise MalformedGraphml("no <graph> element")

    def data_of(el):
        return {keys.get(d.get("key"), d.get("key")): d.text or "" for d in el.findall(_q("data"))}

    meta = data_of(g)
    try:
        label = int(meta["label"]) if meta.get("label", "") != "" else None
        nodes, index = [], {}
        for el in g.findall(_q("node")):
            d = data_of(el)
            attrs = json.loads(d.get("attrs") or "[]")
            if not isinstance(attrs, list):
                raise ValueError("attrs is not a list")
            index[el.get("id")] = len(nodes)
            nodes.append(GraphNode(int(d["instance_id"]), d["type"], tuple(str(a) for a in attrs)))
        edges = [(index[el.get("source")], index[el.get("target")]) for el in g.findall(_q("edge"))]
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedGraphml(f"bad graph content: {exc!r}") from exc
    return CadGraph(nodes, edges, meta.get("source_path", ""), label)


# corpus statistics


@dataclass(frozen=True)
class SizeStats:
    count: int
    mean: float
    variance: float


@dataclass
class GraphStats:
    classes: Dict[object, SizeStats] = field(default_factory=dict)
    total: Optional[SizeStats] = None


def _size_stats(sizes):
    sizes = np.asarray(sizes, dtype=np.float64)
    mean = float(sizes.mean())
    return SizeStats(len(sizes), mean, float(np.mean((sizes - mean) ** 2)))


def graph_stats(groups: Mapping[object, Sequence]) -> GraphStats:
    """Per-class mean and population variance of node counts.

    ``groups`` maps a class key to graphs (or plain node counts).
    """
    out = GraphStats()
    everything = []
    for key in sorted(groups, key=str):
        sizes = [g if isinstance(g, (int, np.integer)) else g.num_nodes for g in groups[key]]
        if not sizes:
            raise ValueError(f"class {key!r} has no graphs")
        out.classes[key] = _size_stats(sizes)
        everything.extend(sizes)
    if not everything:
        raise EmptyCorpus("no graphs")
    out.total = _size_stats(everything)
    return out
