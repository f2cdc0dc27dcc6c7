"""Graph samples, adjacency construction and node featurization."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .linalg import DenseMatrix


@dataclass(frozen=True, eq=False)
class Graph:
    """One undirected classification sample.

    ``edges`` is an ``(m, 2)`` int array holding each undirected edge once as
    ``(i, j)`` with ``i < j``, rows sorted lexicographically.  Use
    :func:`make_graph` to build a graph from an arbitrary edge list.
    """

    num_nodes: int
    edges: np.ndarray
    graph_label: int = 0
    node_labels: Optional[np.ndarray] = None
    node_attributes: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.num_nodes
        if n < 1:
            raise ValueError("a graph needs at least one node")
        e = self.edges
        if e.ndim != 2 or e.shape[1] != 2:
            raise ValueError("edges must be an (m, 2) array")
        if len(e):
            if e.min() < 0 or e.max() >= n:
                raise ValueError(f"edge endpoint out of range for a graph with {n} nodes")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must satisfy i < j (no self-loops)")
            keys = e[:, 0] * n + e[:, 1]
            if np.any(np.diff(keys) <= 0):
                raise ValueError("edges must be sorted and deduplicated")
        if self.node_labels is not None and len(self.node_labels) != n:
            raise ValueError("node_labels length differs from num_nodes")
        if self.node_attributes is not None and len(self.node_attributes) != n:
            raise ValueError("node_attributes length differs from num_nodes")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def same_as(self, other: "Graph") -> bool:
        """Structural equality, including labels and attributes."""

        def _eq(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (
            self.num_nodes == other.num_nodes
            and self.graph_label == other.graph_label
            and np.array_equal(self.edges, other.edges)
            and _eq(self.node_labels, other.node_labels)
            and _eq(self.node_attributes, other.node_attributes)
        )


def canonical_edges(pairs, num_nodes: int) -> np.ndarray:
    """Orient (i < j), drop self-loops, deduplicate and sort an edge list."""
    e = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    keep = lo != hi
    keys = np.unique(lo[keep] * num_nodes + hi[keep])
    return np.stack([keys // num_nodes, keys % num_nodes], axis=1)


def make_graph(num_nodes, edges=(), graph_label=0, node_labels=None, node_attributes=None) -> Graph:
    return Graph(
        num_nodes=int(num_nodes),
        edges=canonical_edges(edges, int(num_nodes)),
        graph_label=int(graph_label),
        node_labels=None if node_labels is None else np.asarray(node_labels, dtype=np.int64),
        node_attributes=None if node_attributes is None else np.asarray(node_attributes, dtype=np.float64),
    )


@dataclass(frozen=True)
class FeatureSpec:
    mode: str = "onehot_labels"
    label_vocabulary: tuple[int, ...] = ()
    degree_cap: int = 10

    def __post_init__(self):
        if self.mode not in ("onehot_labels", "degree", "constant_one"):
            raise ValueError(f"unknown feature mode {self.mode!r}")
        if self.degree_cap < 1:
            raise ValueError("degree_cap must be >= 1")
        if self.mode == "onehot_labels" and not self.label_vocabulary:
            raise ValueError("onehot_labels needs a non-empty label vocabulary")

    @property
    def dim(self) -> int:
        if self.mode == "onehot_labels":
            return len(self.label_vocabulary)
        if self.mode == "degree":
            return self.degree_cap + 1
        return 1


def adjacency(g: Graph) -> DenseMatrix:
    a = np.zeros((g.num_nodes, g.num_nodes))
    a[g.edges[:, 0], g.edges[:, 1]] = 1.0
    a[g.edges[:, 1], g.edges[:, 0]] = 1.0
    return a


def edges_from_adjacency(a: DenseMatrix) -> np.ndarray:
    rows, cols = np.nonzero(np.triu(a, k=1))
    return np.stack([rows, cols], axis=1).astype(np.int64)


def normalize_adjacency(a: DenseMatrix) -> DenseMatrix:
    """Symmetric normalization with self-loops: D^-1/2 (A + I) D^-1/2.

    D is the degree matrix of ``A + I``, so every degree is at least one.
    """
    a_hat = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


def degrees(g: Graph) -> np.ndarray:
    return np.bincount(g.edges.ravel(), minlength=g.num_nodes)


def node_features(g: Graph, spec: FeatureSpec) -> DenseMatrix:
    n = g.num_nodes
    x = np.zeros((n, spec.dim))
    if spec.mode == "constant_one":
        x[:, 0] = 1.0
    elif spec.mode == "degree":
        x[np.arange(n), np.minimum(degrees(g), spec.degree_cap)] = 1.0
    else:
        if g.node_labels is None:
            raise ValueError("onehot_labels features need node labels on every graph")
        vocab = np.asarray(spec.label_vocabulary)
        pos = np.searchsorted(vocab, g.node_labels)
        bad = (pos >= len(vocab)) | (vocab[np.minimum(pos, len(vocab) - 1)] != g.node_labels)
        if np.any(bad):
            raise ValueError(f"node label {g.node_labels[bad][0]} not in the feature vocabulary")
        x[np.arange(n), pos] = 1.0
    return x


def default_feature_spec(graphs: Sequence[Graph], degree_cap: int = 10) -> FeatureSpec:
    """One-hot node labels when every graph has them, capped degree one-hot otherwise."""
    if graphs and all(g.node_labels is not None for g in graphs):
        vocab = np.unique(np.concatenate([g.node_labels for g in graphs]))
        return FeatureSpec("onehot_labels", tuple(int(v) for v in vocab), degree_cap)
    return FeatureSpec("degree", (), degree_cap)
