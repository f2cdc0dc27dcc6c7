"""Forward and backward passes of the graph layers.

Every ``*_forward`` returns its output plus a cache; the matching
``*_backward`` takes that cache and the upstream gradient and returns the
gradient with respect to the layer input together with parameter gradients.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .linalg import DenseMatrix, ShapeError, matmul, relu, relu_mask, transpose
from .nmf import NmfConfig, NmfFactors, effective_rank, factorize

NEG_CLAMP_TOL = 1e-12


@dataclass
class GcParams:
    theta: DenseMatrix
    grad_theta: DenseMatrix = None

    def __post_init__(self):
        if self.grad_theta is None:
            self.grad_theta = np.zeros_like(self.theta)
        if self.grad_theta.shape != self.theta.shape:
            raise ShapeError("grad_theta must match theta")


@dataclass
class ChebParams:
    thetas: list
    grads: list = None

    def __post_init__(self):
        if len(self.thetas) < 1:
            raise ValueError("Chebyshev layer needs K >= 1 coefficient matrices")
        if self.grads is None:
            self.grads = [np.zeros_like(t) for t in self.thetas]

    @property
    def order(self) -> int:
        return len(self.thetas)


@dataclass
class LinearParams:
    weight: DenseMatrix
    bias: DenseMatrix
    grad_weight: DenseMatrix = None
    grad_bias: DenseMatrix = None

    def __post_init__(self):
        if self.grad_weight is None:
            self.grad_weight = np.zeros_like(self.weight)
        if self.grad_bias is None:
            self.grad_bias = np.zeros_like(self.bias)


class GcCache(NamedTuple):
    a: DenseMatrix
    az: DenseMatrix
    pre: DenseMatrix
    theta: DenseMatrix


def gc_forward(a_norm: DenseMatrix, z: DenseMatrix, p: GcParams) -> tuple[DenseMatrix, GcCache]:
    """``ReLU(a_norm @ z @ theta)``."""
    if a_norm.shape[0] != a_norm.shape[1] or a_norm.shape[1] != z.shape[0]:
        raise ShapeError(f"adjacency {a_norm.shape} does not match features {z.shape}")
    az = matmul(a_norm, z)
    pre = matmul(az, p.theta)
    return relu(pre), GcCache(a_norm, az, pre, p.theta)


def gc_backward(cache: GcCache, d_out: DenseMatrix) -> tuple[DenseMatrix, DenseMatrix]:
    """Returns ``(d_z, d_theta)``."""
    if d_out.shape != cache.pre.shape:
        raise ShapeError(f"upstream gradient {d_out.shape} does not match layer output {cache.pre.shape}")
    g = d_out * relu_mask(cache.pre)
    d_theta = matmul(transpose(cache.az), g)
    d_z = matmul(transpose(cache.a), matmul(g, transpose(cache.theta)))
    return d_z, d_theta


def largest_eigenvalue(m: DenseMatrix, max_iters: int = 100, rel_tol: float = 1e-7, seed: int = 0) -> float:
    """Power-iteration estimate of the dominant eigenvalue of a symmetric PSD matrix."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = m @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        new_lam = float(v @ w)
        v = w / norm
        if lam != 0.0 and abs(new_lam - lam) <= rel_tol * abs(new_lam):
            lam = new_lam
            break
        lam = new_lam
    return float(v @ (m @ v))


def laplacian(a: DenseMatrix) -> DenseMatrix:
    return np.diag(a.sum(axis=1)) - a


def scaled_laplacian(a: DenseMatrix) -> tuple[DenseMatrix, float]:
    """``2 L / lambda_max - I`` for ``L = D - A``; returns ``(l_hat, lambda_max)``.

    A graph without edges has ``lambda_max = 0``; then ``-I`` is returned and
    a warning is issued.
    """
    n = a.shape[0]
    lap = laplacian(a)
    lam = largest_eigenvalue(lap)
    if lam <= 0.0:
        warnings.warn("Laplacian is zero (graph without edges); using -I as scaled Laplacian")
        return -np.eye(n), 0.0
    return 2.0 * lap / lam - np.eye(n), lam


def chebyshev_terms(l_hat: DenseMatrix, x: DenseMatrix, order: int) -> list[DenseMatrix]:
    """``[T_0(L) x, ..., T_{order-1}(L) x]`` by the three-term recurrence."""
    terms = [x]
    if order > 1:
        terms.append(matmul(l_hat, x))
    for _ in range(2, order):
        terms.append(2.0 * matmul(l_hat, terms[-1]) - terms[-2])
    return terms


class ChebCache(NamedTuple):
    l_hat: DenseMatrix
    terms: list
    pre: DenseMatrix
    thetas: list


def cheb_forward(l_hat: DenseMatrix, x: DenseMatrix, p: ChebParams) -> tuple[DenseMatrix, ChebCache]:
    if l_hat.shape[0] != l_hat.shape[1] or l_hat.shape[1] != x.shape[0]:
        raise ShapeError(f"scaled Laplacian {l_hat.shape} does not match features {x.shape}")
    terms = chebyshev_terms(l_hat, x, p.order)
    pre = matmul(terms[0], p.thetas[0])
    for t, theta in zip(terms[1:], p.thetas[1:]):
        pre = pre + matmul(t, theta)
    return relu(pre), ChebCache(l_hat, terms, pre, list(p.thetas))


def cheb_backward(cache: ChebCache, d_out: DenseMatrix) -> tuple[DenseMatrix, list[DenseMatrix]]:
    """Returns ``(d_x, [d_theta_0, ..., d_theta_{K-1}])``."""
    if d_out.shape != cache.pre.shape:
        raise ShapeError(f"upstream gradient {d_out.shape} does not match layer output {cache.pre.shape}")
    g = d_out * relu_mask(cache.pre)
    grads = [matmul(transpose(t), g) for t in cache.terms]
    # gradients w.r.t. each recurrence term, then unwound back to x
    d_terms = [matmul(g, transpose(theta)) for theta in cache.thetas]
    l_t = transpose(cache.l_hat)
    for k in range(len(d_terms) - 1, 1, -1):
        d_terms[k - 1] = d_terms[k - 1] + 2.0 * matmul(l_t, d_terms[k])
        d_terms[k - 2] = d_terms[k - 2] - d_terms[k]
    d_x = d_terms[0]
    if len(d_terms) > 1:
        d_x = d_x + matmul(l_t, d_terms[1])
    return d_x, grads


@dataclass(frozen=True, eq=False)
class PoolTrace:
    """Outcome of one NMF coarsening step.

    ``s`` is the n x k' assignment operator (the transposed NMF encoding);
    the coarsened adjacency is ``s.T @ a_in @ s``.
    """

    s: DenseMatrix
    a_in: DenseMatrix
    a_out: DenseMatrix
    nmf: NmfFactors
    k_requested: int
    k_effective: int


def _clamp_tiny_negatives(a: DenseMatrix) -> DenseMatrix:
    if np.any(a < 0):
        a = np.where((a < 0) & (a >= -NEG_CLAMP_TOL), 0.0, a)
    return a


def coarsen(a: DenseMatrix, k: int, cfg: Optional[NmfConfig] = None) -> PoolTrace:
    """Factorize ``a`` and build the coarsened adjacency.

    ``k`` is clamped to ``max(1, n - 1)``.  The coarsened adjacency is
    symmetrized to scrub floating-point asymmetry.
    """
    if k < 1:
        raise ValueError("pool size must be >= 1")
    cfg = cfg if cfg is not None else NmfConfig(k=k)
    n = a.shape[0]
    a = _clamp_tiny_negatives(a)
    k_eff = effective_rank(k, n, n)
    factors = factorize(a, NmfConfig(k=k_eff, max_iters=cfg.max_iters, rel_tol=cfg.rel_tol, seed=cfg.seed))
    s = transpose(factors.h)
    a_out = matmul(transpose(s), matmul(a, s))
    a_out = 0.5 * (a_out + transpose(a_out))
    return PoolTrace(s=s, a_in=a, a_out=a_out, nmf=factors, k_requested=k, k_effective=k_eff)


def pool_features(trace: PoolTrace, z: DenseMatrix) -> DenseMatrix:
    if z.shape[0] != trace.s.shape[0]:
        raise ShapeError(f"features {z.shape} do not match assignment {trace.s.shape}")
    return matmul(transpose(trace.s), z)


def nmfpool_forward(a: DenseMatrix, z: DenseMatrix, k: int, cfg: Optional[NmfConfig] = None):
    """Returns ``(a_next, z_next, trace)``."""
    if a.shape[0] != z.shape[0]:
        raise ShapeError(f"adjacency {a.shape} does not match features {z.shape}")
    trace = coarsen(a, k, cfg)
    return trace.a_out, pool_features(trace, z), trace


def nmfpool_backward(trace: PoolTrace, d_z_next: DenseMatrix) -> DenseMatrix:
    """The assignment is treated as a constant: ``d_z = s @ d_z_next``."""
    if d_z_next.shape[0] != trace.s.shape[1]:
        raise ShapeError(f"gradient {d_z_next.shape} does not match assignment {trace.s.shape}")
    return matmul(trace.s, d_z_next)


def readout_mean(z: DenseMatrix) -> DenseMatrix:
    return z.mean(axis=0, keepdims=True)


def readout_backward(n: int, d_out: DenseMatrix) -> DenseMatrix:
    return np.repeat(d_out / n, n, axis=0)


def linear_forward(x: DenseMatrix, p: LinearParams) -> DenseMatrix:
    return matmul(x, p.weight) + p.bias


def linear_backward(x: DenseMatrix, p: LinearParams, d_out: DenseMatrix):
    """Returns ``(d_x, d_weight, d_bias)``."""
    return matmul(d_out, transpose(p.weight)), matmul(transpose(x), d_out), d_out.sum(axis=0, keepdims=True)
