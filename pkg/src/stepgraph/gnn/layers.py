"""Forward kernels of the network: graph convolution, readouts, activations."""
import numpy as np

from stepgraph.gnn.adjacency import EmptyGraph


class DimensionMismatch(ValueError):
    pass


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())


def propagate(adj, h, w):
    """Return ``(Â·H, Â·H·W)`` after checking shapes."""
    if h.shape[0] != adj.n:
        raise DimensionMismatch(f"adjacency is {adj.shape} but H has {h.shape[0]} rows")
    if h.shape[1] != w.shape[0]:
        raise DimensionMismatch(f"H has {h.shape[1]} columns but W has {w.shape[0]} rows")
    ah = adj.matmul(h)
    return ah, ah @ w


def gcn_forward(adj, h, w):
    """One graph convolution: ``ReLU(Â·H·W)``."""
    return relu(propagate(adj, h, w)[1])


def attention_pool(u, w):
    """Attention readout of node embeddings ``u`` (N x D) with context matrix ``w`` (D x D).

    The context is ``c = tanh(w @ mean(u))``; node ``n`` gets the weight
    ``sigmoid(u_n . c)`` and the graph vector is the weighted sum of rows.
    Weights are not normalized across nodes. Returns ``(h, weights, c)``.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] == 0:
        raise EmptyGraph("attention pooling needs at least one node")
    if w.shape != (u.shape[1], u.shape[1]):
        raise DimensionMismatch(f"pool weight {w.shape} does not match embedding width {u.shape[1]}")
    c = np.tanh(w @ u.mean(axis=0))
    weights = sigmoid(u @ c)
    return u.T @ weights, weights, c


def mean_pool(u):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] == 0:
        raise EmptyGraph("pooling needs at least one node")
    return u.mean(axis=0)


def degree_pool(u, degrees):
    """Sum of rows of ``u`` weighted by node degree (self-loop included)."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] == 0:
        raise EmptyGraph("pooling needs at least one node")
    return u.T @ np.asarray(degrees, dtype=np.float64)
