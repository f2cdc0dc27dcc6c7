"""TU-format benchmark ingestion, statistics, pool sizes and fold splitting.

The TU layout stores a whole dataset in a handful of text files sharing a
prefix::

    {name}_A.txt                 "i, j" per line, 1-based global node ids
    {name}_graph_indicator.txt   line t: 1-based graph id of node t
    {name}_graph_labels.txt      line g: raw class label of graph g
    {name}_node_labels.txt       optional, one categorical id per node
    {name}_node_attributes.txt   optional, comma separated reals per node
"""
from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .graph import Graph

log = logging.getLogger(__name__)

# Table values used for acceptance: graphs, classes, avg nodes, avg edges.
BENCHMARK_STATS = {
    "COLLAB": (5000, 3, 74.49, 2457.78),
    "DD": (1178, 2, 284.32, 715.66),
    "ENZYMES": (600, 6, 32.63, 62.14),
    "NCI1": (4110, 2, 29.87, 32.30),
    "PROTEINS": (1113, 2, 39.06, 72.82),
}

# Published (k1, k2) and pooling fraction per dataset.  NCI1 and DD do not
# follow the floor formula, so their pool sizes are pinned here.
POOL_TABLE = {
    "COLLAB": ((16, 8), 0.22),
    "DD": ((14, 2), 0.05),
    "ENZYMES": ((8, 4), 0.25),
    "NCI1": ((6, 3), 0.24),
    "PROTEINS": ((8, 4), 0.21),
}
POOL_OVERRIDES = {"NCI1": (6, 3), "DD": (14, 2)}

_ALIASES = {"D&D": "DD"}


class DatasetError(ValueError):
    """Malformed or inconsistent dataset files."""


def canonical_name(name: str) -> str:
    """Map benchmark names such as ``"D&D"`` or ``"enzymes"`` to their file prefix."""
    up = name.upper()
    if up in _ALIASES:
        return _ALIASES[up]
    return up if up in BENCHMARK_STATS else name


@dataclass
class DatasetBundle:
    name: str
    graphs: list[Graph]
    num_classes: int
    label_vocabulary: tuple
    stats: tuple[float, float]
    raw_graph_labels: tuple = ()
    warnings: list[str] = field(default_factory=list)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.graph_label for g in self.graphs], dtype=np.int64)

    def __len__(self):
        return len(self.graphs)


@dataclass(frozen=True)
class FoldPlan:
    """Stratified k-fold split.

    ``folds[i]`` is the test set of fold i, ``validation[i]`` the held-out
    validation subset of its training portion and ``train[i]`` the rest.
    """

    k: int
    seed: int
    folds: tuple[tuple[int, ...], ...]
    validation: tuple[tuple[int, ...], ...]
    train: tuple[tuple[int, ...], ...]


def _locate(root_dir: Path, name: str) -> Path:
    for d in (root_dir / name, root_dir):
        if (d / f"{name}_A.txt").exists():
            return d
    return root_dir / name if (root_dir / name).is_dir() else root_dir


def _scan_for_bad_line(path: Path, ncols: Optional[int], kind) -> None:
    """Slow path: find the first malformed line of ``path`` and raise on it."""
    with open(path, "r", newline=None) as fh:
        lines = fh.read().split("\n")
    while lines and not lines[-1].strip():
        lines.pop()
    width = None
    for lineno, line in enumerate(lines, start=1):
        parts = [p for p in re.split(r"\s*,\s*", line.strip())]
        try:
            [kind(p) for p in parts]
        except ValueError:
            raise DatasetError(f"{path.name}:{lineno}: malformed line {line.strip()!r}") from None
        want = ncols if ncols is not None else width
        if want is not None and len(parts) != want:
            raise DatasetError(f"{path.name}:{lineno}: expected {want} values, got {len(parts)}")
        width = len(parts)
    raise DatasetError(f"{path.name}: could not parse file")


def _read_table(path: Path, ncols: Optional[int], dtype) -> np.ndarray:
    kind = int if dtype is np.int64 else float
    if path.stat().st_size == 0:
        return np.zeros((0, ncols or 1), dtype=dtype)
    try:
        df = pd.read_csv(path, header=None, sep=",", skipinitialspace=True, dtype=dtype, engine="c")
    except pd.errors.EmptyDataError:
        return np.zeros((0, ncols or 1), dtype=dtype)
    except (ValueError, pd.errors.ParserError):
        _scan_for_bad_line(path, ncols, kind)
    values = df.to_numpy()
    if (ncols is not None and values.shape[1] != ncols) or (dtype is not np.int64 and not np.all(np.isfinite(values))):
        _scan_for_bad_line(path, ncols, kind)
    return values.astype(dtype, copy=False)


def parse_tu_dataset(root_dir, name: str) -> DatasetBundle:
    """Parse a TU benchmark from ``root_dir/name/`` (or ``root_dir/`` directly)."""
    name = canonical_name(name)
    base = _locate(Path(root_dir), name)
    warnings: list[str] = []

    def path_of(suffix):
        return base / f"{name}_{suffix}.txt"

    for mandatory in ("A", "graph_indicator", "graph_labels"):
        if not path_of(mandatory).exists():
            raise DatasetError(f"missing mandatory file {path_of(mandatory)}")

    indicator = _read_table(path_of("graph_indicator"), 1, np.int64)[:, 0]
    raw_labels = _read_table(path_of("graph_labels"), 1, np.int64)[:, 0]
    edges = _read_table(path_of("A"), 2, np.int64)
    n_graphs = len(raw_labels)
    n_nodes = len(indicator)
    if n_graphs == 0 or n_nodes == 0:
        raise DatasetError(f"{name}: empty dataset")

    # graph ids must start at 1, never decrease and never skip an id
    steps = np.diff(indicator)
    if indicator[0] != 1 or np.any((steps != 0) & (steps != 1)):
        bad = 1 if indicator[0] != 1 else int(np.nonzero((steps != 0) & (steps != 1))[0][0]) + 2
        raise DatasetError(f"{path_of('graph_indicator').name}:{bad}: graph ids are not monotone-contiguous")
    if indicator[-1] != n_graphs:
        raise DatasetError(
            f"{name}: graph_indicator names {indicator[-1]} graphs but graph_labels has {n_graphs} lines"
        )
    offsets = np.searchsorted(indicator, np.arange(1, n_graphs + 2))  # node offset per graph

    if len(edges):
        bad = np.nonzero((edges < 1).any(axis=1) | (edges > n_nodes).any(axis=1))[0]
        if len(bad):
            raise DatasetError(f"{path_of('A').name}:{bad[0] + 1}: node id out of range 1..{n_nodes}")
    src, dst = edges[:, 0] - 1, edges[:, 1] - 1
    cross = np.nonzero(indicator[src] != indicator[dst])[0]
    if len(cross):
        raise DatasetError(f"{path_of('A').name}:{cross[0] + 1}: edge joins two different graphs")

    loops = src == dst
    if np.any(loops):
        warnings.append(f"{name}: dropped {int(loops.sum())} self-loop lines")
    src, dst = src[~loops], dst[~loops]
    directed = np.unique(src * n_nodes + dst)
    reverse = (directed % n_nodes) * n_nodes + directed // n_nodes
    one_way = int(np.count_nonzero(~np.isin(reverse, directed)))
    if one_way:
        warnings.append(f"{name}: symmetrized {one_way} edges listed in one direction only")
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    keys = np.unique(lo * n_nodes + hi)
    lo, hi = keys // n_nodes, keys % n_nodes
    edge_split = np.searchsorted(lo, offsets)

    node_labels = None
    if path_of("node_labels").exists():
        node_labels = _read_table(path_of("node_labels"), None, np.int64)[:, 0]
        if len(node_labels) != n_nodes:
            raise DatasetError(f"{path_of('node_labels').name}: {len(node_labels)} lines for {n_nodes} nodes")
    node_attrs = None
    if path_of("node_attributes").exists():
        try:
            node_attrs = _read_table(path_of("node_attributes"), None, np.float64)
            if len(node_attrs) != n_nodes:
                raise DatasetError(f"{len(node_attrs)} lines for {n_nodes} nodes")
        except (DatasetError, OSError) as exc:
            warnings.append(f"{name}: ignoring unreadable node attributes ({exc})")
            node_attrs = None

    vocab = np.unique(raw_labels)
    mapped = np.searchsorted(vocab, raw_labels)

    graphs = []
    for g in range(n_graphs):
        a, b = offsets[g], offsets[g + 1]
        e0, e1 = edge_split[g], edge_split[g + 1]
        e = np.stack([lo[e0:e1] - a, hi[e0:e1] - a], axis=1)
        graphs.append(
            Graph(
                num_nodes=int(b - a),
                edges=e,
                graph_label=int(mapped[g]),
                node_labels=None if node_labels is None else node_labels[a:b],
                node_attributes=None if node_attrs is None else node_attrs[a:b],
            )
        )

    for w in warnings:
        log.warning(w)
    bundle = DatasetBundle(
        name=name,
        graphs=graphs,
        num_classes=len(vocab),
        label_vocabulary=tuple(int(v) for v in vocab),
        stats=(0.0, 0.0),
        raw_graph_labels=tuple(int(v) for v in vocab),
        warnings=warnings,
    )
    bundle.stats = dataset_stats(bundle)
    return bundle


def dataset_stats(bundle: DatasetBundle) -> tuple[float, float]:
    if not bundle.graphs:
        raise DatasetError("statistics of an empty dataset are undefined")
    nodes = np.array([g.num_nodes for g in bundle.graphs], dtype=np.float64)
    edges = np.array([g.num_edges for g in bundle.graphs], dtype=np.float64)
    return float(nodes.mean()), float(edges.mean())


def pool_sizes(avg_nodes: float, p: float, depth: int = 2) -> list[int]:
    """Pool sizes ``k1 = floor(avg_nodes * p)`` and ``k2 = floor(k1 / 2)``."""
    if not 0 < p < 1:
        raise ValueError("pool fraction must lie in (0, 1)")
    if depth not in (1, 2):
        raise ValueError("depth must be 1 or 2")
    k1 = math.floor(avg_nodes * p)
    ks = [k1, k1 // 2][:depth]
    if min(ks) < 1:
        raise ValueError(f"pool sizes {ks} fall below 1 (avg_nodes={avg_nodes}, p={p})")
    return ks


def published_pool_sizes(name: str, avg_nodes: Optional[float] = None, depth: int = 2) -> list[int]:
    """Pool sizes used for a benchmark, honouring the pinned overrides."""
    key = canonical_name(name)
    if key in POOL_OVERRIDES:
        return list(POOL_OVERRIDES[key][:depth])
    if key not in POOL_TABLE:
        raise KeyError(f"no pooling fraction recorded for {name!r}")
    if avg_nodes is None:
        avg_nodes = BENCHMARK_STATS[key][2]
    return pool_sizes(avg_nodes, POOL_TABLE[key][1], depth)


def stratified_folds(labels, k: int = 3, seed: int = 0, val_fraction: float = 0.1) -> FoldPlan:
    """Deterministic stratified k-fold split with a stratified validation holdout.

    ``labels`` may be a :class:`DatasetBundle` or a sequence of class ids.
    Members of each class are shuffled and dealt round-robin across folds,
    starting where the previous class stopped so fold sizes stay balanced.
    """
    if isinstance(labels, DatasetBundle):
        labels = labels.labels
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("need at least 2 folds")
    if not 0 <= val_fraction < 1:
        raise ValueError("val_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    folds: list[list[int]] = [[] for _ in range(k)]
    start = 0
    for c in classes:
        members = np.nonzero(labels == c)[0]
        if len(members) < k:
            raise ValueError(f"class {c} has {len(members)} members, fewer than {k} folds")
        members = rng.permutation(members)
        for pos, idx in enumerate(members):
            folds[(start + pos) % k].append(int(idx))
        start = (start + len(members)) % k

    tests, vals, trains = [], [], []
    for i in range(k):
        test = sorted(folds[i])
        pool = np.array(sorted(j for f in range(k) if f != i for j in folds[f]), dtype=np.int64)
        val: list[int] = []
        for c in classes:
            members = pool[labels[pool] == c]
            n_val = int(round(val_fraction * len(members)))
            if n_val:
                val.extend(int(v) for v in rng.choice(members, size=n_val, replace=False))
        val_set = set(val)
        tests.append(tuple(test))
        vals.append(tuple(sorted(val)))
        trains.append(tuple(int(j) for j in pool if int(j) not in val_set))
    return FoldPlan(k=k, seed=seed, folds=tuple(tests), validation=tuple(vals), train=tuple(trains))


def default_data_root() -> Optional[Path]:
    root = os.environ.get("NMFPOOL_DATA")
    return Path(root) if root else None


def write_tu_dataset(graphs, root_dir, name: str, graph_labels=None) -> Path:
    """Write ``graphs`` in TU format under ``root_dir/name/``; returns that directory.

    Graph labels are written as stored on each graph unless ``graph_labels``
    supplies raw labels.
    """
    out = Path(root_dir) / name
    out.mkdir(parents=True, exist_ok=True)
    offset = 0
    edge_lines, indicator = [], []
    for gid, g in enumerate(graphs, start=1):
        for i, j in g.edges:
            edge_lines.append(f"{i + offset + 1}, {j + offset + 1}")
            edge_lines.append(f"{j + offset + 1}, {i + offset + 1}")
        indicator.extend([str(gid)] * g.num_nodes)
        offset += g.num_nodes
    labels = graph_labels if graph_labels is not None else [g.graph_label for g in graphs]

    def dump(suffix, lines):
        (out / f"{name}_{suffix}.txt").write_text("".join(f"{line}\n" for line in lines))

    dump("A", edge_lines)
    dump("graph_indicator", indicator)
    dump("graph_labels", [str(int(v)) for v in labels])
    if graphs and all(g.node_labels is not None for g in graphs):
        dump("node_labels", [str(int(v)) for g in graphs for v in g.node_labels])
    if graphs and all(g.node_attributes is not None for g in graphs):
        dump("node_attributes", [", ".join(repr(float(x)) for x in row) for g in graphs for row in g.node_attributes])
    return out
