"""Non-negative matrix factorization with Frobenius multiplicative updates.

Minimizes ``||A - W H||_F`` over non-negative ``W`` (n x k) and ``H`` (k x m)
using the Lee & Seung update pair, which never increases the objective and
keeps both factors non-negative.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import EPS_DIV, DenseMatrix, elementwise, frobenius_norm, matmul, transpose


@dataclass(frozen=True)
class NmfConfig:
    k: int
    max_iters: int = 200
    rel_tol: float = 1e-4
    seed: int = 0
    init: str = "random_uniform"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("NMF rank k must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.init != "random_uniform":
            raise ValueError(f"unsupported init {self.init!r}")


@dataclass(frozen=True, eq=False)
class NmfFactors:
    w: DenseMatrix
    h: DenseMatrix
    final_objective: float = float("nan")
    iterations_run: int = 0
    converged: bool = False
    k_requested: Optional[int] = None
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.w.shape[1]


def _check_nonnegative(a: DenseMatrix, what: str) -> None:
    if np.any(a < 0):
        raise ValueError(f"{what} has negative entries; NMF needs a non-negative input")


def nmf_objective(a: DenseMatrix, f: NmfFactors) -> float:
    return frobenius_norm(a - matmul(f.w, f.h))


def effective_rank(k: int, n: int, m: int) -> int:
    """Clamp ``k`` below ``min(n, m)``; never below 1."""
    return min(k, max(1, min(n, m) - 1))


def initial_factors(a: DenseMatrix, k: int, seed: int) -> tuple[DenseMatrix, DenseMatrix]:
    """Uniform draws on (0, s] with ``s = sqrt(mean(a) / k)``."""
    n, m = a.shape
    mean = float(a.mean())
    scale = np.sqrt(mean / k) if mean > 0 else 1.0
    rng = np.random.default_rng(seed)
    w = scale * (1.0 - rng.random((n, k)))
    h = scale * (1.0 - rng.random((k, m)))
    return w, h


def multiplicative_step(a: DenseMatrix, f: NmfFactors) -> NmfFactors:
    """One H update followed by one W update (denominators guarded by EPS_DIV)."""
    _check_nonnegative(a, "input matrix")
    _check_nonnegative(f.w, "W")
    _check_nonnegative(f.h, "H")
    w, h = f.w, f.h
    wt = transpose(w)
    h = elementwise(h, elementwise(matmul(wt, a), matmul(matmul(wt, w), h), "div_guarded"), "mul")
    ht = transpose(h)
    w = elementwise(w, elementwise(matmul(a, ht), matmul(w, matmul(h, ht)), "div_guarded"), "mul")
    return NmfFactors(
        w, h, final_objective=frobenius_norm(a - matmul(w, h)), iterations_run=f.iterations_run + 1,
        k_requested=f.k_requested,
    )


def factorize(a: DenseMatrix, cfg: NmfConfig, init: Optional[tuple[DenseMatrix, DenseMatrix]] = None) -> NmfFactors:
    """Factorize ``a`` into ``W @ H`` with at most ``cfg.max_iters`` update steps.

    ``k`` is clamped to ``min(n, m) - 1`` (or 1) when it does not fit the
    input; ``k_requested`` on the result records the original value.
    Stops early once the relative objective change drops below
    ``cfg.rel_tol``.  ``init`` overrides the seeded initialization.
    """
    if not np.all(np.isfinite(a)):
        raise ValueError("input matrix contains NaN or Inf")
    _check_nonnegative(a, "input matrix")
    n, m = a.shape
    k = effective_rank(cfg.k, n, m)
    w, h = init if init is not None else initial_factors(a, k, cfg.seed)
    f = NmfFactors(w, h, k_requested=cfg.k)
    prev = nmf_objective(a, f)
    history = [prev]
    converged = False
    for _ in range(cfg.max_iters):
        f = multiplicative_step(a, f)
        obj = f.final_objective
        history.append(obj)
        if abs(prev - obj) / max(prev, EPS_DIV) < cfg.rel_tol:
            converged = True
            break
        prev = obj
    return NmfFactors(
        f.w, f.h,
        final_objective=nmf_objective(a, f),
        iterations_run=f.iterations_run,
        converged=converged,
        k_requested=cfg.k,
        history=tuple(history),
    )
