import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nmfpool.linalg import (
    EPS_DIV,
    ShapeError,
    as_matrix,
    elementwise,
    frobenius_norm,
    matmul,
    relu,
    relu_mask,
    row_softmax_cross_entropy,
    transpose,
)


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def finite_matrices(max_side=5):
    shape = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=st.floats(-10, 10)))


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ShapeError):
        as_matrix(np.zeros((0, 0)))
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])
    assert as_matrix([1, 2, 3]).shape == (1, 3)


def test_matmul_identity_and_small_case():
    b = np.array([[1.0, -2.0], [3.5, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), b), b)
    np.testing.assert_array_equal(matmul(np.array([[1.0, 2], [3, 4]]), np.array([[0.0], [1]])), [[2], [4]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(7, 5)), rng.normal(size=(5, 3))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), atol=1e-12, rtol=0)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match="2x3.*2x3"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative_and_transpose_rule():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m, k, n, p = rng.integers(1, 8, size=4)
        a, b, c = rng.normal(size=(m, k)), rng.normal(size=(k, n)), rng.normal(size=(n, p))
        left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) <= 1e-9 * max(1.0, np.max(np.abs(left)))
        np.testing.assert_allclose(transpose(matmul(a, b)), matmul(transpose(b), transpose(a)), atol=1e-12)


def test_transpose_cases():
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(transpose(transpose(a)), a)
    s = a.T @ a
    np.testing.assert_array_equal(transpose(s), s)
    np.testing.assert_array_equal(transpose(np.array([[1.0, 2, 3]])), [[1], [2], [3]])


def test_elementwise():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    np.testing.assert_array_equal(elementwise(a, np.ones_like(a), "mul"), a)
    np.testing.assert_array_equal(elementwise(a, b, "mul"), elementwise(b, a, "mul"))
    np.testing.assert_allclose(elementwise(np.array([[1.0]]), np.array([[0.0]]), "div_guarded"), [[1e9]])
    assert EPS_DIV == 1e-9
    with pytest.raises(ShapeError):
        elementwise(a, b.T, "mul")
    with pytest.raises(ValueError):
        elementwise(a, b, "pow")


def test_relu_and_mask():
    x = np.array([[-1.0, 2.0]])
    np.testing.assert_array_equal(relu(x), [[0, 2]])
    np.testing.assert_array_equal(relu_mask(x), [[0, 1]])


@given(finite_matrices())
def test_relu_properties(a):
    r = relu(a)
    np.testing.assert_array_equal(relu(r), r)
    assert np.all(r >= 0)


@given(finite_matrices())
def test_frobenius_nonnegative_zero_iff_zero(a):
    f = frobenius_norm(a)
    assert f >= 0
    assert (f == 0) == (not np.any(a))


def test_frobenius_cases():
    assert frobenius_norm(np.zeros((3, 2))) == 0
    assert frobenius_norm(np.array([[3.0, 4.0]])) == 5
    a = np.random.default_rng(1).normal(size=(6, 4))
    assert abs(frobenius_norm(a) - np.sqrt(np.trace(a.T @ a))) < 1e-12


def test_cross_entropy_uniform():
    loss, grad = row_softmax_cross_entropy(np.zeros((1, 2)), 1)
    assert abs(loss - np.log(2)) < 1e-15
    np.testing.assert_allclose(grad, [[0.5, -0.5]])


def test_cross_entropy_matches_extended_precision():
    mpmath.mp.dps = 50
    rng = np.random.default_rng(11)
    for _ in range(25):
        c = int(rng.integers(2, 7))
        logits = rng.normal(scale=5, size=(1, c))
        label = int(rng.integers(c))
        loss, grad = row_softmax_cross_entropy(logits, label)
        exps = [mpmath.exp(mpmath.mpf(float(v))) for v in logits[0]]
        expected = -mpmath.log(exps[label] / mpmath.fsum(exps))
        assert abs(loss - float(expected)) < 1e-12
        assert abs(grad.sum()) < 1e-12


def test_cross_entropy_stable_for_large_logits():
    loss, grad = row_softmax_cross_entropy(np.array([[1000.0, 0.0]]), 0)
    assert np.isfinite(loss) and loss < 1e-300 + 1e-12
    assert np.all(np.isfinite(grad))


@pytest.mark.parametrize("gap", [20.0, 47.3, 300.0])
def test_cross_entropy_saturated_relative_accuracy(gap):
    # the winning class still gets a loss and gradient accurate to relative precision
    mpmath.mp.dps = 400
    logits = np.array([[gap + 3.0, 3.0, 1.5]])
    loss, grad = row_softmax_cross_entropy(logits, 0)
    exps = [mpmath.exp(mpmath.mpf(float(v))) for v in logits[0]]
    total = mpmath.fsum(exps)
    expected_loss = -mpmath.log(exps[0] / total)
    expected_grad = [e / total - (1 if i == 0 else 0) for i, e in enumerate(exps)]
    assert abs(loss - float(expected_loss)) <= 1e-12 * float(expected_loss)
    for got, want in zip(grad[0], expected_grad):
        assert abs(got - float(want)) <= 1e-12 * abs(float(want)) + 1e-300


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError):
        row_softmax_cross_entropy(np.zeros((1, 3)), 3)


def test_operations_deterministic():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(9, 9)), rng.normal(size=(9, 9))
    assert matmul(a, b).tobytes() == matmul(a, b).tobytes()
    assert frobenius_norm(a) == frobenius_norm(a)
