"""Symmetrically normalized adjacency with self-loops, stored as CSR."""
from dataclasses import dataclass

import numpy as np

from stepgraph import _backend


class EmptyGraph(ValueError):
    pass


@dataclass
class NormalizedAdjacency:
    """``D^-1/2 (A + I) D^-1/2`` for the undirected, binary version of a graph.

    Rows are stored in CSR form with ascending column indices. ``degrees``
    are the degrees of ``A + I`` (self-loop included).
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    degrees: np.ndarray

    @property
    def n(self):
        return len(self.indptr) - 1

    @property
    def shape(self):
        return (self.n, self.n)

    def matmul(self, h):
        h = np.ascontiguousarray(h, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] != self.n:
            raise ValueError(f"cannot multiply {self.shape} adjacency by {h.shape}")
        return _backend.csr_matmul(self.indptr, self.indices, self.data, h)

    def to_dense(self):
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    def permuted(self, perm):
        """Adjacency of the graph whose node ``i`` is old node ``perm[i]``."""
        dense = self.to_dense()[np.ix_(perm, perm)]
        return _from_dense_pattern(dense != 0)


def _from_dense_pattern(mask):
    n = mask.shape[0]
    mask = mask | np.eye(n, dtype=bool)
    rows, cols = np.nonzero(mask)
    return _build(n, rows, cols)


def _build(n, rows, cols):
    """``rows``/``cols`` enumerate the nonzeros of ``A + I`` in row-major order."""
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    dinv = 1.0 / np.sqrt(deg)
    data = dinv[rows] * 1.0 * dinv[cols]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return NormalizedAdjacency(indptr, cols.astype(np.int64), data, deg)


def normalize_adjacency_edges(n, edges):
    if n < 1:
        raise EmptyGraph("graph has no nodes")
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    e = e[e[:, 0] != e[:, 1]]  # a self-reference adds nothing beyond the self-loop
    diag = np.arange(n, dtype=np.int64)
    rows = np.concatenate([e[:, 0], e[:, 1], diag])
    cols = np.concatenate([e[:, 1], e[:, 0], diag])
    keys = np.unique(rows * n + cols)
    return _build(n, keys // n, keys % n)


def normalize_adjacency(graph):
    """Normalized adjacency of a :class:`~stepgraph.graph.CadGraph`.

    Edge direction is discarded and parallel edges are collapsed.
    """
    return normalize_adjacency_edges(graph.num_nodes, graph.edges)
