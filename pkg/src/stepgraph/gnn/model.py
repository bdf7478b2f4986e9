"""GCN classifier: three graph convolutions, a readout, and two dense layers.

Parameters live in a flat ``dict`` of float64 arrays so that the optimizer,
the finite-difference checks and the checkpoint code can treat them uniformly.
"""
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, Tuple

import numpy as np

from stepgraph.gnn.layers import (
    DimensionMismatch,
    attention_pool,
    degree_pool,
    log_softmax,
    mean_pool,
    propagate,
    relu,
    softmax,
)

POOLINGS = ("attention", "mean", "degree")
LAYER_TAGS = ("attention", "fc1_pre_relu", "fc1_post_relu", "fc2", "softmax")
CHECKPOINT_FORMAT = "stepgraph-gcn/1"


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class GcnConfig:
    num_features: int
    num_classes: int
    gcn_dims: Tuple[int, ...] = (64, 32, 32)
    bottleneck: int = 32
    pooling: str = "attention"
    seed: int = 0

    def __post_init__(self):
        self.gcn_dims = tuple(int(d) for d in self.gcn_dims)
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, not {self.pooling!r}")
        if self.num_features < 1 or self.num_classes < 1 or not self.gcn_dims or self.bottleneck < 1:
            raise ValueError("all layer widths must be positive")

    @property
    def embedding_dim(self):
        return self.gcn_dims[-1]

    def param_shapes(self):
        shapes = {}
        widths = (self.num_features,) + self.gcn_dims
        for i in range(len(self.gcn_dims)):
            shapes[f"gcn{i}"] = (widths[i], widths[i + 1])
        if self.pooling == "attention":
            shapes["pool"] = (self.embedding_dim, self.embedding_dim)
        shapes["fc1_w"] = (self.embedding_dim, self.bottleneck)
        shapes["fc1_b"] = (self.bottleneck,)
        shapes["fc2_w"] = (self.bottleneck, self.num_classes)
        shapes["fc2_b"] = (self.num_classes,)
        return shapes


@dataclass
class GcnModel:
    config: GcnConfig
    params: Dict[str, np.ndarray] = field(repr=False)

    def copy(self):
        return GcnModel(GcnConfig(**asdict(self.config)), {k: v.copy() for k, v in self.params.items()})

    def num_parameters(self):
        return sum(v.size for v in self.params.values())


def init_params(config: GcnConfig, seed=None) -> GcnModel:
    """Glorot-uniform weights and zero biases, drawn in a fixed order from ``seed``."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in config.param_shapes().items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-bound, bound, size=shape)
    return GcnModel(config, params)


@dataclass
class ForwardResult:
    logits: np.ndarray
    probs: np.ndarray
    cache: dict = field(repr=False)

    def layer(self, tag):
        """Intermediate output by layer tag (see ``LAYER_TAGS``)."""
        if tag not in LAYER_TAGS:
            raise KeyError(tag)
        return {
            "attention": self.cache["h"],
            "fc1_pre_relu": self.cache["z1"],
            "fc1_post_relu": self.cache["r1"],
            "fc2": self.logits,
            "softmax": self.probs,
        }[tag]


def forward(model: GcnModel, adj, x) -> ForwardResult:
    cfg, p = model.config, model.params
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.num_features:
        raise DimensionMismatch(f"features have shape {x.shape}, model expects width {cfg.num_features}")
    cache = {"adj": adj, "layers": []}
    h = x
    for i in range(len(cfg.gcn_dims)):
        ah, z = propagate(adj, h, p[f"gcn{i}"])
        h = relu(z)
        cache["layers"].append((ah, z))
    u = h
    cache["u"] = u
    if cfg.pooling == "attention":
        pooled, weights, c = attention_pool(u, p["pool"])
        cache["weights"], cache["c"] = weights, c
    elif cfg.pooling == "mean":
        pooled = mean_pool(u)
    else:
        pooled = degree_pool(u, adj.degrees)
    z1 = pooled @ p["fc1_w"] + p["fc1_b"]
    r1 = relu(z1)
    logits = r1 @ p["fc2_w"] + p["fc2_b"]
    cache.update(h=pooled, z1=z1, r1=r1)
    return ForwardResult(logits, softmax(logits), cache)


def cross_entropy(logits, label):
    return float(-log_softmax(logits)[label])


def loss_and_grads(model: GcnModel, adj, x, label, result=None):
    """Cross-entropy loss of one graph and the analytic gradient of every parameter.

    Returns ``(loss, grads, forward_result)``.
    """
    cfg, p = model.config, model.params
    if not 0 <= label < cfg.num_classes:
        raise ValueError(f"label {label} outside [0, {cfg.num_classes})")
    res = forward(model, adj, x) if result is None else result
    loss = cross_entropy(res.logits, label)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    c = res.cache
    g = {}

    dz2 = res.probs.copy()
    dz2[label] -= 1.0
    g["fc2_w"] = np.outer(c["r1"], dz2)
    g["fc2_b"] = dz2
    dz1 = (p["fc2_w"] @ dz2) * (c["z1"] > 0)
    g["fc1_w"] = np.outer(c["h"], dz1)
    g["fc1_b"] = dz1
    dh = p["fc1_w"] @ dz1

    u = c["u"]
    n = u.shape[0]
    if cfg.pooling == "attention":
        a, ctx = c["weights"], c["c"]
        m = u.mean(axis=0)
        du = np.outer(a, dh)
        ds = (u @ dh) * a * (1.0 - a)
        du += np.outer(ds, ctx)
        dq = (u.T @ ds) * (1.0 - ctx * ctx)
        g["pool"] = np.outer(dq, m)
        du += (p["pool"].T @ dq) / n
    elif cfg.pooling == "mean":
        du = np.broadcast_to(dh / n, u.shape).copy()
    else:
        du = np.outer(c["adj"].degrees, dh)

    dout = du
    for i in reversed(range(len(cfg.gcn_dims))):
        ah, z = c["layers"][i]
        dz = dout * (z > 0)
        g[f"gcn{i}"] = ah.T @ dz
        if i:
            # Â is symmetric, so the transpose product is another Â product
            dout = c["adj"].matmul(dz @ p[f"gcn{i}"].T)
    return loss, g, res


def predict(model, adj, x):
    return int(np.argmax(forward(model, adj, x).logits))


# checkpoints


def checkpoint_dict(model: GcnModel, vocabulary=None, meta=None):
    return {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(model.config),
        "vocabulary": list(vocabulary.tokens) if vocabulary is not None else None,
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in model.params.items()},
        "meta": meta or {},
    }


def save_checkpoint(path, model, vocabulary=None, meta=None):
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(model, vocabulary, meta), fh, allow_nan=False)
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(model, vocabulary_or_None, meta)``."""
    from stepgraph.graph import EntityVocabulary

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {doc.get('format')!r}")
    config = GcnConfig(**doc["config"])
    params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
    expected = config.param_shapes()
    if {k: tuple(v.shape) for k, v in params.items()} != expected:
        raise ValueError(f"{path}: parameter shapes do not match the stored config")
    vocab = EntityVocabulary.from_list(doc["vocabulary"]) if doc.get("vocabulary") else None
    return GcnModel(config, params), vocab, doc.get("meta", {})
