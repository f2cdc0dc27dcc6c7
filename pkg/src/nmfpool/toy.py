"""Small hand-made graphs and a synthetic two-community benchmark generator."""
from __future__ import annotations

import numpy as np

from .dataset import DatasetBundle, dataset_stats
from .graph import Graph, make_graph


def toy_graphs() -> list[Graph]:
    """Fixed graphs of at most 8 nodes used by the gradient-check suite."""
    return [
        # two triangles joined by a bridge, plus a pendant node
        make_graph(7, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5), (5, 6)],
                   graph_label=1, node_labels=[0, 1, 2, 0, 1, 2, 0]),
        # 8-cycle with one chord
        make_graph(8, [(i, (i + 1) % 8) for i in range(8)] + [(0, 4)],
                   graph_label=0, node_labels=[0, 0, 1, 1, 2, 2, 0, 1]),
        # star on 6 nodes
        make_graph(6, [(0, i) for i in range(1, 6)], graph_label=1, node_labels=[2, 0, 0, 1, 1, 0]),
    ]


def _community_graph(rng, n_blocks: int, block_size: tuple[int, int], p_in: float, p_out: float):
    sizes = rng.integers(block_size[0], block_size[1] + 1, size=n_blocks)
    block = np.repeat(np.arange(n_blocks), sizes)
    n = len(block)
    same = block[:, None] == block[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    # chain consecutive nodes so no graph is disconnected
    upper[np.arange(n - 1), np.arange(1, n)] = True
    rows, cols = np.nonzero(upper)
    return n, np.stack([rows, cols], axis=1), block


def synthetic_bundle(n_graphs: int = 60, seed: int = 0, name: str = "SYNTH") -> DatasetBundle:
    """Two-class benchmark: graphs with 2 vs. 4 dense communities.

    Node labels are the community id modulo 3, so both structure and labels
    carry the class signal.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(n_graphs):
        label = i % 2
        blocks = 2 if label == 0 else 4
        n, edges, block = _community_graph(rng, blocks, (4, 7), 0.7, 0.03)
        graphs.append(make_graph(n, edges, graph_label=label, node_labels=block % 3))
    bundle = DatasetBundle(name, graphs, 2, (0, 1), (0.0, 0.0), raw_graph_labels=(0, 1))
    bundle.stats = dataset_stats(bundle)
    return bundle
