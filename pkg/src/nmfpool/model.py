"""Model assembly, training loop, cross-validation and gradient checking.

A model is ``GC -> [NMFPool -> GC]* -> mean readout -> linear``.  Graph
convolutions carry no bias; the linear head does.  The NMF coarsening of a
graph depends only on its adjacency, so each graph's pooling hierarchy is
computed once (:func:`prepare_graph`) and reused for every epoch.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dataset import DatasetBundle, FoldPlan, stratified_folds
from .graph import FeatureSpec, Graph, adjacency, default_feature_spec, node_features, normalize_adjacency
from .layers import (
    ChebParams,
    GcParams,
    LinearParams,
    PoolTrace,
    cheb_backward,
    cheb_forward,
    coarsen,
    gc_backward,
    gc_forward,
    linear_backward,
    linear_forward,
    nmfpool_backward,
    pool_features,
    readout_backward,
    readout_mean,
    scaled_laplacian,
)
from .linalg import DenseMatrix, row_softmax_cross_entropy
from .nmf import NmfConfig

log = logging.getLogger(__name__)

HIDDEN_CHOICES = (16, 32, 64, 128)


@dataclass(frozen=True)
class ModelConfig:
    conv_layers: int = 2
    pool_layers: int = 1
    hidden_dim: int = 64
    pool_ks: tuple[int, ...] = (8,)
    conv_kind: str = "gcn"
    feature_spec: Optional[FeatureSpec] = None
    lr0: float = 0.1
    lr_decay: float = 0.1
    patience: int = 10
    max_epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    renormalize_pooled: bool = False
    min_lr: float = 1e-4
    improvement_tol: float = 1e-4
    val_fraction: float = 0.1
    nmf_max_iters: int = 200
    nmf_rel_tol: float = 1e-4

    @property
    def cheb_order(self) -> Optional[int]:
        if self.conv_kind == "gcn":
            return None
        return int(self.conv_kind.split(":", 1)[1])

    def problems(self) -> list[str]:
        """Every consistency problem of this configuration (empty when valid)."""
        out = []
        if self.conv_layers not in (1, 2, 3):
            out.append(f"conv_layers must be 1, 2 or 3 (got {self.conv_layers})")
        if self.pool_layers not in (0, 1, 2):
            out.append(f"pool_layers must be 0, 1 or 2 (got {self.pool_layers})")
        if self.pool_layers and self.conv_layers != self.pool_layers + 1:
            out.append(
                f"with {self.pool_layers} pooling layers the model needs {self.pool_layers + 1} "
                f"convolutions (got {self.conv_layers})"
            )
        if len(self.pool_ks) != self.pool_layers:
            out.append(f"{self.pool_layers} pooling layers need {self.pool_layers} pool sizes (got {len(self.pool_ks)})")
        if any(k < 1 for k in self.pool_ks):
            out.append("pool sizes must be >= 1")
        if len(self.pool_ks) == 2 and not self.pool_ks[0] > self.pool_ks[1]:
            out.append(f"pool sizes must be strictly decreasing (got {list(self.pool_ks)})")
        if self.hidden_dim not in HIDDEN_CHOICES:
            out.append(f"hidden_dim must be one of {HIDDEN_CHOICES} (got {self.hidden_dim})")
        if self.conv_kind != "gcn":
            try:
                if not self.conv_kind.startswith("cheb:") or self.cheb_order < 1:
                    raise ValueError
            except ValueError:
                out.append(f"conv_kind must be 'gcn' or 'cheb:K' with K >= 1 (got {self.conv_kind!r})")
        for name in ("lr0", "lr_decay", "min_lr"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be positive")
        if not self.lr_decay < 1:
            out.append("lr_decay must be below 1")
        for name in ("patience", "max_epochs", "batch_size"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pool_ks"] = list(self.pool_ks)
        d["feature_spec"] = None if self.feature_spec is None else {
            "mode": self.feature_spec.mode,
            "label_vocabulary": list(self.feature_spec.label_vocabulary),
            "degree_cap": self.feature_spec.degree_cap,
        }
        return d


@dataclass
class LayerStack:
    cfg: ModelConfig
    feature_spec: FeatureSpec
    input_dim: int
    num_classes: int
    convs: list
    head: LinearParams

    def describe(self) -> list[str]:
        kind = "GC" if self.cfg.conv_kind == "gcn" else f"Cheb(K={self.cfg.cheb_order})"
        out = [kind]
        for k in self.cfg.pool_ks:
            out += [f"Pool({k})", kind]
        out += [kind] * (self.cfg.conv_layers - 1 - self.cfg.pool_layers)
        return out + ["Readout", "Linear"]

    def tensors(self) -> list[tuple[str, DenseMatrix, DenseMatrix]]:
        """``(name, value, grad)`` for every learnable tensor."""
        out = []
        for i, p in enumerate(self.convs):
            if isinstance(p, GcParams):
                out.append((f"conv{i}.theta", p.theta, p.grad_theta))
            else:
                out += [(f"conv{i}.theta{k}", t, g) for k, (t, g) in enumerate(zip(p.thetas, p.grads))]
        out.append(("head.weight", self.head.weight, self.head.grad_weight))
        out.append(("head.bias", self.head.bias, self.head.grad_bias))
        return out

    def num_parameters(self) -> int:
        return sum(v.size for _, v, _ in self.tensors())

    def zero_grad(self) -> None:
        for _, _, g in self.tensors():
            g.fill(0.0)

    def snapshot(self) -> list[DenseMatrix]:
        return [v.copy() for _, v, _ in self.tensors()]

    def restore(self, values: Sequence[DenseMatrix]) -> None:
        for (_, v, _), saved in zip(self.tensors(), values):
            v[...] = saved


def _glorot(rng, fan_in: int, fan_out: int) -> DenseMatrix:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def build_model(cfg: ModelConfig, num_classes: int, input_dim: int, feature_spec: Optional[FeatureSpec] = None) -> LayerStack:
    cfg.validate()
    spec = feature_spec or cfg.feature_spec
    if spec is None:
        raise ValueError("a feature spec is needed to build a model")
    if spec.dim != input_dim:
        raise ValueError(f"feature spec yields {spec.dim} features, model expects {input_dim}")
    rng = np.random.default_rng(cfg.seed)
    h = cfg.hidden_dim
    convs = []
    for i in range(cfg.conv_layers):
        d_in = input_dim if i == 0 else h
        if cfg.conv_kind == "gcn":
            convs.append(GcParams(_glorot(rng, d_in, h)))
        else:
            convs.append(ChebParams([_glorot(rng, d_in, h) for _ in range(cfg.cheb_order)]))
    head = LinearParams(_glorot(rng, h, num_classes), np.zeros((1, num_classes)))
    return LayerStack(cfg, spec, input_dim, num_classes, convs, head)


@dataclass(frozen=True, eq=False)
class PreparedGraph:
    """Parameter-independent inputs of one graph: features and per-level operators."""

    x: DenseMatrix
    operators: tuple  # per level: normalized adjacency (gcn) or scaled Laplacian (cheb)
    traces: tuple[PoolTrace, ...]
    label: int


def prepare_graph(cfg: ModelConfig, g: Graph, feature_spec: FeatureSpec) -> PreparedGraph:
    a = normalize_adjacency(adjacency(g))
    levels = [a]
    traces = []
    for i, k in enumerate(cfg.pool_ks):
        trace = coarsen(a, k, NmfConfig(k=k, max_iters=cfg.nmf_max_iters, rel_tol=cfg.nmf_rel_tol, seed=cfg.seed + i))
        traces.append(trace)
        a = normalize_adjacency(trace.a_out) if cfg.renormalize_pooled else trace.a_out
        levels.append(a)
    if cfg.conv_kind == "gcn":
        ops = tuple(levels)
    else:
        ops = tuple(scaled_laplacian(lvl)[0] for lvl in levels)
    return PreparedGraph(node_features(g, feature_spec), ops, tuple(traces), g.graph_label)


def _conv_forward(p, op, z):
    return gc_forward(op, z, p) if isinstance(p, GcParams) else cheb_forward(op, z, p)


def _conv_backward(p, cache, d):
    if isinstance(p, GcParams):
        d_z, g = gc_backward(cache, d)
        p.grad_theta += g
    else:
        d_z, gs = cheb_backward(cache, d)
        for acc, g in zip(p.grads, gs):
            acc += g
    return d_z


def forward_prepared(stack: LayerStack, pg: PreparedGraph):
    """Returns ``(logits, caches)``."""
    z = pg.x
    caches = []
    level = 0
    for i, p in enumerate(stack.convs):
        if i > 0 and i - 1 < len(pg.traces):
            z = pool_features(pg.traces[i - 1], z)
            level = i
        z, cache = _conv_forward(p, pg.operators[level], z)
        caches.append(cache)
    pooled = readout_mean(z)
    logits = linear_forward(pooled, stack.head)
    return logits, (caches, z.shape[0], pooled)


def backward_prepared(stack: LayerStack, pg: PreparedGraph, caches, d_logits: DenseMatrix) -> DenseMatrix:
    """Accumulates parameter gradients into ``stack``; returns d(features)."""
    conv_caches, n_last, pooled = caches
    d_pooled, d_w, d_b = linear_backward(pooled, stack.head, d_logits)
    stack.head.grad_weight += d_w
    stack.head.grad_bias += d_b
    d = readout_backward(n_last, d_pooled)
    for i in range(len(stack.convs) - 1, -1, -1):
        d = _conv_backward(stack.convs[i], conv_caches[i], d)
        if i > 0 and i - 1 < len(pg.traces):
            d = nmfpool_backward(pg.traces[i - 1], d)
    return d


def forward_graph(stack: LayerStack, g: Graph):
    """Full forward pass of one raw graph; returns ``(logits, caches)``."""
    return forward_prepared(stack, prepare_graph(stack.cfg, g, stack.feature_spec))


def loss_and_backward(stack: LayerStack, pg: PreparedGraph) -> tuple[float, DenseMatrix]:
    logits, caches = forward_prepared(stack, pg)
    loss, d_logits = row_softmax_cross_entropy(logits, pg.label)
    backward_prepared(stack, pg, caches, d_logits)
    return loss, logits


def evaluate(stack: LayerStack, prepared: Sequence[PreparedGraph]) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over ``prepared``."""
    if not prepared:
        return float("nan"), float("nan")
    total, correct = 0.0, 0
    for pg in prepared:
        logits, _ = forward_prepared(stack, pg)
        loss, _ = row_softmax_cross_entropy(logits, pg.label)
        total += loss
        correct += int(np.argmax(logits[0]) == pg.label)
    return total / len(prepared), correct / len(prepared)


class PlateauSchedule:
    """Decay the learning rate when validation loss stops improving.

    ``step`` is called once per epoch with that epoch's validation loss.
    After ``patience`` consecutive epochs without an improvement larger than
    ``tol`` the rate is multiplied by ``decay``.
    """

    def __init__(self, lr0: float, decay: float, patience: int, min_lr: float, tol: float = 1e-4,
                 initial_loss: float = float("inf")):
        self.lr = lr0
        self.decay = decay
        self.patience = patience
        self.min_lr = min_lr
        self.tol = tol
        self.best = initial_loss
        self.bad_epochs = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best - self.tol:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.decay
                self.bad_epochs = 0
        return self.lr

    @property
    def exhausted(self) -> bool:
        return self.lr < self.min_lr


@dataclass
class FoldResult:
    test_accuracy: float
    epochs_run: int
    wall_time: float
    best_epoch: int
    best_val_loss: float
    train_curve: list[float]
    val_curve: list[float]
    lr_curve: list[float]
    train_accuracy: float = float("nan")


def prepare_dataset(bundle: DatasetBundle, cfg: ModelConfig) -> tuple[FeatureSpec, list[PreparedGraph]]:
    spec = cfg.feature_spec or default_feature_spec(bundle.graphs)
    return spec, [prepare_graph(cfg, g, spec) for g in bundle.graphs]


def train_fold(
    bundle: DatasetBundle,
    plan: FoldPlan,
    fold: int,
    cfg: ModelConfig,
    prepared: Optional[tuple[FeatureSpec, list[PreparedGraph]]] = None,
) -> FoldResult:
    """Train on one fold with mini-batch SGD and report best-snapshot test accuracy.

    The snapshot with the lowest validation loss (epoch 0 = initialization
    included) is restored before testing.
    """
    cfg.validate()
    train_idx, val_idx, test_idx = plan.train[fold], plan.validation[fold], plan.folds[fold]
    if not train_idx or not test_idx:
        raise ValueError(f"fold {fold} has an empty training or test split")
    spec, graphs = prepared if prepared is not None else prepare_dataset(bundle, cfg)
    train = [graphs[i] for i in train_idx]
    val = [graphs[i] for i in val_idx] or train
    test = [graphs[i] for i in test_idx]

    start = time.perf_counter()
    stack = build_model(cfg, bundle.num_classes, spec.dim, spec)
    rng = np.random.default_rng([cfg.seed, fold])

    init_train, _ = evaluate(stack, train)
    best_val, _ = evaluate(stack, val)
    schedule = PlateauSchedule(cfg.lr0, cfg.lr_decay, cfg.patience, cfg.min_lr, cfg.improvement_tol, best_val)
    best_params, best_epoch = stack.snapshot(), 0
    train_curve, val_curve, lr_curve = [init_train], [best_val], []

    epoch = 0
    while epoch < cfg.max_epochs and not schedule.exhausted:
        epoch += 1
        lr = schedule.lr
        lr_curve.append(lr)
        order = rng.permutation(len(train))
        running = 0.0
        for b in range(0, len(order), cfg.batch_size):
            batch = order[b:b + cfg.batch_size]
            stack.zero_grad()
            for j in batch:
                loss, _ = loss_and_backward(stack, train[j])
                running += loss
            scale = lr / len(batch)
            for _, value, grad in stack.tensors():
                value -= scale * grad
        train_curve.append(running / len(train))
        val_loss, _ = evaluate(stack, val)
        val_curve.append(val_loss)
        if val_loss < best_val:
            best_val, best_epoch, best_params = val_loss, epoch, stack.snapshot()
        schedule.step(val_loss)
        if not np.isfinite(val_loss):
            log.warning("fold %d: validation loss diverged at epoch %d", fold, epoch)
            break

    stack.restore(best_params)
    _, test_acc = evaluate(stack, test)
    _, train_acc = evaluate(stack, train)
    return FoldResult(
        test_accuracy=test_acc,
        epochs_run=epoch,
        wall_time=time.perf_counter() - start,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        train_curve=train_curve,
        val_curve=val_curve,
        lr_curve=lr_curve,
        train_accuracy=train_acc,
    )


@dataclass
class TrainReport:
    dataset: str
    config_echo: ModelConfig
    per_fold: list[FoldResult]
    mean_accuracy: float = field(init=False)
    std_over_folds: float = field(init=False)

    def __post_init__(self):
        acc = np.array([f.test_accuracy for f in self.per_fold])
        self.mean_accuracy = float(acc.mean())
        self.std_over_folds = float(acc.std())  # population std over folds

    @property
    def mean_best_val_loss(self) -> float:
        return float(np.mean([f.best_val_loss for f in self.per_fold]))

    def to_json_dict(self, curves: bool = True) -> dict:
        folds = []
        for f in self.per_fold:
            entry = {
                "test_accuracy": f.test_accuracy,
                "epochs": f.epochs_run,
                "seconds": f.wall_time,
                "best_epoch": f.best_epoch,
                "best_val_loss": f.best_val_loss,
                "train_accuracy": f.train_accuracy,
            }
            if curves:
                entry.update(train_curve=f.train_curve, val_curve=f.val_curve, lr_curve=f.lr_curve)
            folds.append(entry)
        return {
            "dataset": self.dataset,
            "config": self.config_echo.to_dict(),
            "folds": folds,
            "mean_accuracy": self.mean_accuracy,
            "std_over_folds": self.std_over_folds,
            "snapshot_selection": "min_validation_loss",
            "artifact_version": __version__,
        }


def _fold_worker(args):
    bundle, plan, fold, cfg = args
    return train_fold(bundle, plan, fold, cfg)


def cross_validate(bundle: DatasetBundle, cfg: ModelConfig, n_folds: int = 3, jobs: int = 1,
                   plan: Optional[FoldPlan] = None) -> TrainReport:
    """Stratified k-fold cross-validation; folds run in ``jobs`` worker processes."""
    cfg.validate()
    if plan is None:
        plan = stratified_folds(bundle, n_folds, cfg.seed, cfg.val_fraction)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fold_worker, [(bundle, plan, i, cfg) for i in range(plan.k)]))
    else:
        prepared = prepare_dataset(bundle, cfg)
        results = [train_fold(bundle, plan, i, cfg, prepared) for i in range(plan.k)]
    return TrainReport(bundle.name, cfg, results)


def gradcheck_model(cfg: ModelConfig, toy_graph: Graph, step: float = 1e-6, corrupt: bool = False,
                    num_classes: Optional[int] = None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    The error of one tensor is ``|g_a - g_n| / max(|g_a|, |g_n|)`` in the
    Euclidean norm; the maximum over all learnable tensors is returned.
    ``corrupt`` doubles the analytic gradient (harness self-test).
    """
    if toy_graph.num_nodes > 8:
        raise ValueError("gradient checks run on toy graphs of at most 8 nodes")
    spec = cfg.feature_spec or default_feature_spec([toy_graph])
    num_classes = num_classes or max(2, toy_graph.graph_label + 1)
    pg = prepare_graph(cfg, toy_graph, spec)
    stack = build_model(cfg, num_classes, spec.dim, spec)
    stack.zero_grad()
    loss_and_backward(stack, pg)

    def loss_at() -> float:
        logits, _ = forward_prepared(stack, pg)
        return row_softmax_cross_entropy(logits, pg.label)[0]

    worst = 0.0
    for _, value, grad in stack.tensors():
        analytic = grad.copy() * (2.0 if corrupt else 1.0)
        numeric = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + step
            up = loss_at()
            value[idx] = orig - step
            down = loss_at()
            value[idx] = orig
            numeric[idx] = (up - down) / (2.0 * step)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    return worst
