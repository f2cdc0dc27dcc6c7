"""Pool a small two-community graph and look at the soft assignment.

Run: python demos/01_coarsen_a_graph.py
"""
import numpy as np

from nmfpool import adjacency, coarsen, make_graph, normalize_adjacency
from nmfpool.nmf import NmfConfig

np.set_printoptions(precision=3, suppress=True)

# two triangles joined by a single bridge edge
g = make_graph(6, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)])
a = normalize_adjacency(adjacency(g))
print("normalized adjacency\n", a)

trace = coarsen(a, 2, NmfConfig(k=2, seed=0))
print("NMF residual", round(trace.nmf.final_objective, 4), "after", trace.nmf.iterations_run, "iterations")

# rows are nodes, columns are communities; weights are non-negative and may overlap
print("assignment S\n", trace.s)
print("dominant community per node", trace.s.argmax(axis=1))

# the pooled graph has one node per community
print("pooled adjacency S^T A S\n", trace.a_out)
