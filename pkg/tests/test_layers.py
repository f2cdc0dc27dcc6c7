import numpy as np
import pytest

from nmfpool.graph import adjacency, make_graph, normalize_adjacency
from nmfpool.layers import (
    ChebParams,
    GcParams,
    LinearParams,
    cheb_backward,
    cheb_forward,
    coarsen,
    gc_backward,
    gc_forward,
    laplacian,
    linear_backward,
    linear_forward,
    nmfpool_backward,
    nmfpool_forward,
    readout_backward,
    readout_mean,
    scaled_laplacian,
)
from nmfpool.linalg import ShapeError
from nmfpool.nmf import NmfConfig


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def small_graph():
    g = make_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)])
    return adjacency(g)


def test_gc_identity_adjacency_and_relu():
    z = np.array([[1.0, -2.0], [0.5, 3.0]])
    out, _ = gc_forward(np.eye(2), z, GcParams(np.eye(2)))
    np.testing.assert_array_equal(out, np.maximum(z, 0))


def test_gc_matches_scalar_loops():
    rng = np.random.default_rng(0)
    a = normalize_adjacency(small_graph())
    z, theta = rng.standard_normal((5, 3)), rng.standard_normal((3, 4))
    out, _ = gc_forward(a, z, GcParams(theta))
    expected = np.zeros((5, 4))
    for i in range(5):
        for c in range(4):
            s = sum(a[i, j] * z[j, f] * theta[f, c] for j in range(5) for f in range(3))
            expected[i, c] = max(s, 0.0)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_gc_shape_mismatch():
    with pytest.raises(ShapeError):
        gc_forward(np.eye(3), np.ones((2, 2)), GcParams(np.eye(2)))


def test_gc_backward_zero_cases():
    rng = np.random.default_rng(1)
    a, z, theta = normalize_adjacency(small_graph()), rng.standard_normal((5, 3)), rng.standard_normal((3, 2))
    _, cache = gc_forward(a, z, GcParams(theta))
    d_z, d_theta = gc_backward(cache, np.zeros((5, 2)))
    assert not d_z.any() and not d_theta.any()
    # all pre-activations negative: ReLU blocks every gradient
    _, cache = gc_forward(np.eye(2), np.ones((2, 1)), GcParams(-np.ones((1, 1))))
    d_z, d_theta = gc_backward(cache, np.ones((2, 1)))
    assert not d_z.any() and not d_theta.any()


def test_gc_backward_matches_finite_differences():
    rng = np.random.default_rng(2)
    a = normalize_adjacency(small_graph())
    z, theta, up = rng.standard_normal((5, 3)), rng.standard_normal((3, 2)), rng.standard_normal((5, 2))
    loss = lambda: float(np.sum(gc_forward(a, z, GcParams(theta))[0] * up))
    _, cache = gc_forward(a, z, GcParams(theta))
    d_z, d_theta = gc_backward(cache, up)
    np.testing.assert_allclose(d_z, numeric_grad(loss, z), atol=1e-6)
    np.testing.assert_allclose(d_theta, numeric_grad(loss, theta), atol=1e-6)


def test_scaled_laplacian_two_nodes():
    l_hat, lam = scaled_laplacian(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert lam == pytest.approx(2.0, rel=1e-6)
    np.testing.assert_allclose(l_hat, [[0.0, -1.0], [-1.0, 0.0]], atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_scaled_laplacian_spectrum_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((9, 9)) < 0.4, 1).astype(float)
    a = upper + upper.T
    if not a.any():
        a[0, 1] = a[1, 0] = 1.0
    l_hat, lam = scaled_laplacian(a)
    exact = np.linalg.eigvalsh(laplacian(a)).max()
    assert lam == pytest.approx(exact, rel=1e-5)
    ev = np.linalg.eigvalsh(l_hat)
    assert ev.min() >= -1 - 1e-6 and ev.max() <= 1 + 1e-4


def test_scaled_laplacian_empty_graph_warns():
    with pytest.warns(UserWarning):
        l_hat, lam = scaled_laplacian(np.zeros((3, 3)))
    assert lam == 0.0
    np.testing.assert_array_equal(l_hat, -np.eye(3))


def cheb_setup(order, seed=3):
    rng = np.random.default_rng(seed)
    l_hat, _ = scaled_laplacian(small_graph())
    x = rng.standard_normal((5, 3))
    thetas = [rng.standard_normal((3, 4)) for _ in range(order)]
    return l_hat, x, thetas


def test_cheb_order_one_is_dense_layer():
    l_hat, x, thetas = cheb_setup(1)
    out, _ = cheb_forward(l_hat, x, ChebParams(thetas))
    np.testing.assert_allclose(out, np.maximum(x @ thetas[0], 0), atol=1e-12)


def test_cheb_order_two_and_three_match_polynomials():
    l_hat, x, thetas = cheb_setup(3)
    out2, _ = cheb_forward(l_hat, x, ChebParams(thetas[:2]))
    np.testing.assert_allclose(out2, np.maximum(x @ thetas[0] + l_hat @ x @ thetas[1], 0), atol=1e-12)
    out3, _ = cheb_forward(l_hat, x, ChebParams(thetas))
    t2 = (2 * np.linalg.matrix_power(l_hat, 2) - np.eye(5)) @ x
    np.testing.assert_allclose(out3, np.maximum(x @ thetas[0] + l_hat @ x @ thetas[1] + t2 @ thetas[2], 0), atol=1e-10)


def test_cheb_tied_coefficients_reduce_to_propagation():
    # theta_1 = -theta_0 gives (I - L_hat) x theta_0
    l_hat, x, thetas = cheb_setup(2)
    out, _ = cheb_forward(l_hat, x, ChebParams([thetas[0], -thetas[0]]))
    np.testing.assert_allclose(out, np.maximum((np.eye(5) - l_hat) @ x @ thetas[0], 0), atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_cheb_backward_matches_finite_differences(order):
    l_hat, x, thetas = cheb_setup(order, seed=order)
    up = np.random.default_rng(9).standard_normal((5, 4))
    params = ChebParams(thetas)
    loss = lambda: float(np.sum(cheb_forward(l_hat, x, params)[0] * up))
    _, cache = cheb_forward(l_hat, x, params)
    d_x, grads = cheb_backward(cache, up)
    np.testing.assert_allclose(d_x, numeric_grad(loss, x), atol=1e-6)
    for theta, g in zip(params.thetas, grads):
        np.testing.assert_allclose(g, numeric_grad(loss, theta), atol=1e-6)


def test_nmfpool_shapes_and_symmetry():
    a = normalize_adjacency(small_graph())
    z = np.random.default_rng(0).standard_normal((5, 3))
    a_next, z_next, trace = nmfpool_forward(a, z, 2, NmfConfig(k=2))
    assert a_next.shape == (2, 2) and z_next.shape == (2, 3) and trace.s.shape == (5, 2)
    assert np.abs(a_next - a_next.T).max() <= 1e-10
    assert trace.s.min() >= 0 and a_next.min() >= 0
    np.testing.assert_allclose(a_next, trace.s.T @ a @ trace.s, atol=1e-9)


def test_nmfpool_features_match_scalar_loops():
    a = small_graph()
    z = np.random.default_rng(1).standard_normal((5, 2))
    _, z_next, trace = nmfpool_forward(a, z, 3)
    s = trace.s
    for i in range(3):
        for f in range(2):
            assert z_next[i, f] == pytest.approx(sum(s[j, i] * z[j, f] for j in range(5)), abs=1e-12)


def test_nmfpool_k_one_and_clamp():
    a = small_graph()
    a_next, z_next, trace = nmfpool_forward(a, np.ones((5, 2)), 1)
    assert a_next.shape == (1, 1) and z_next.shape == (1, 2)
    big = coarsen(a, 50)
    assert big.k_effective == 4 and big.k_requested == 50


def test_nmfpool_backward_routes_through_assignment():
    a = small_graph()
    _, _, trace = nmfpool_forward(a, np.ones((5, 1)), 2)
    d = np.zeros((2, 1))
    d[1, 0] = 1.0
    np.testing.assert_array_equal(nmfpool_backward(trace, d), trace.s[:, [1]])
    with pytest.raises(ShapeError):
        nmfpool_backward(trace, np.zeros((3, 1)))


def test_coarsen_rejects_real_negatives():
    a = small_graph()
    a[0, 1] = -0.5
    with pytest.raises(ValueError):
        coarsen(a, 2)
    b = small_graph()
    b[0, 3] = b[3, 0] = -1e-14
    assert coarsen(b, 2).a_in.min() >= 0


def test_readout_and_linear():
    z = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(readout_mean(z), [[2.0, 3.0]])
    np.testing.assert_array_equal(readout_mean(np.array([[5.0, -1.0]])), [[5.0, -1.0]])
    np.testing.assert_array_equal(readout_backward(2, np.array([[1.0, 4.0]])), [[0.5, 2.0], [0.5, 2.0]])
    rng = np.random.default_rng(4)
    p = LinearParams(rng.standard_normal((2, 3)), rng.standard_normal((1, 3)))
    x = rng.standard_normal((1, 2))
    up = rng.standard_normal((1, 3))
    loss = lambda: float(np.sum(linear_forward(x, p) * up))
    d_x, d_w, d_b = linear_backward(x, p, up)
    np.testing.assert_allclose(d_x, numeric_grad(loss, x), atol=1e-7)
    np.testing.assert_allclose(d_w, numeric_grad(loss, p.weight), atol=1e-7)
    np.testing.assert_allclose(d_b, numeric_grad(loss, p.bias), atol=1e-7)
