"""Dense float64 matrix kernel shared by every other module.

A ``DenseMatrix`` is simply a two-dimensional, C-contiguous ``numpy.ndarray``
of dtype float64 with at least one row and one column.  The helpers here add
shape validation and a few guarded primitives on top of numpy.
"""
from __future__ import annotations

import numpy as np

DenseMatrix = np.ndarray

EPS_DIV = 1e-9


class ShapeError(ValueError):
    """Raised when operands have incompatible shapes."""


def as_matrix(values) -> DenseMatrix:
    """Coerce ``values`` to a validated float64 matrix.

    1-D input is treated as a single row.  Empty or non-finite input is
    rejected.
    """
    a = np.array(values, dtype=np.float64, order="C")
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {a.ndim}-D input")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"matrix must be at least 1x1, got {a.shape[0]}x{a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains NaN or Inf")
    return a


def _shape(a: DenseMatrix) -> str:
    return "x".join(str(s) for s in a.shape)


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {_shape(a)} by {_shape(b)}")
    return a @ b


def transpose(a: DenseMatrix) -> DenseMatrix:
    return np.ascontiguousarray(a.T)


def elementwise(a: DenseMatrix, b: DenseMatrix, op: str) -> DenseMatrix:
    """Hadamard product (``op="mul"``) or guarded division (``op="div_guarded"``).

    Guarded division replaces every denominator entry ``d`` with
    ``max(d, EPS_DIV)``.
    """
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op} needs equal shapes, got {_shape(a)} and {_shape(b)}")
    if op == "mul":
        return a * b
    if op == "div_guarded":
        return a / np.maximum(b, EPS_DIV)
    raise ValueError(f"unknown elementwise op {op!r}")


def relu(a: DenseMatrix) -> DenseMatrix:
    return np.maximum(a, 0.0)


def relu_mask(a: DenseMatrix) -> DenseMatrix:
    return (a > 0).astype(np.float64)


def frobenius_norm(a: DenseMatrix) -> float:
    # scaled by the largest magnitude so tiny entries do not underflow to zero
    big = float(np.max(np.abs(a)))
    if big == 0.0 or not np.isfinite(big):
        return big
    scaled = a / big
    return big * float(np.sqrt(np.sum(scaled * scaled)))


def row_softmax_cross_entropy(logits: DenseMatrix, label: int) -> tuple[float, DenseMatrix]:
    """Softmax cross-entropy of a single row of logits.

    Returns ``(loss, grad)`` where ``grad = softmax(logits) - onehot(label)``
    has the same 1xC shape as ``logits``.
    """
    if logits.ndim != 2 or logits.shape[0] != 1:
        raise ShapeError(f"expected 1xC logits, got {_shape(logits)}")
    n_classes = logits.shape[1]
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    top = int(np.argmax(logits))
    shifted = logits - logits[0, top]
    exp = np.exp(shifted)
    # log(sum) = log1p(sum of the non-maximal terms), accurate when they are tiny
    rest = float(np.delete(exp[0], top).sum())
    loss = float(np.log1p(rest) - shifted[0, label])
    grad = exp / (1.0 + rest)
    if label == top:
        # 1 / (1 + rest) - 1 without cancellation
        grad[0, label] = -rest / (1.0 + rest)
    else:
        grad[0, label] -= 1.0
    return loss, grad
