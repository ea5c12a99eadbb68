import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lama_ct import checks, regnet
from lama_ct.regnet import ConvLayer, RegularizerNet


def conv_matrix(w, h, wd):
    """Dense matrix of a zero-padded 'same' cross-correlation, built entry by entry."""
    o_ch, c_ch, k, _ = w.shape
    p = k // 2
    mat = np.zeros((o_ch * h * wd, c_ch * h * wd))
    for o in range(o_ch):
        for i in range(h):
            for j in range(wd):
                row = (o * h + i) * wd + j
                for c in range(c_ch):
                    for a in range(k):
                        for b in range(k):
                            ii, jj = i + a - p, j + b - p
                            if 0 <= ii < h and 0 <= jj < wd:
                                mat[row, (c * h + ii) * wd + jj] += w[o, c, a, b]
    return mat


def small_net(seed=0, channels=(3, 2), k=3, knee=0.01):
    return regnet.random_net(channels=channels, kernel_size=k, seed=seed, probe_shape=(8, 8), knee=knee)


# -- construction ------------------------------------------------------------------


def test_layer_validation():
    with pytest.raises(ValueError):
        ConvLayer(np.zeros((1, 1, 2, 2)))
    with pytest.raises(ValueError):
        ConvLayer(np.zeros((1, 1, 3)))
    with pytest.raises(ValueError):
        ConvLayer(np.full((1, 1, 1, 1), np.nan))


def test_net_channel_chain_checked():
    with pytest.raises(ValueError):
        RegularizerNet((ConvLayer(np.zeros((2, 1, 3, 3))), ConvLayer(np.zeros((1, 3, 3, 3)))))
    with pytest.raises(ValueError):
        RegularizerNet((ConvLayer(np.zeros((2, 2, 3, 3))),))
    with pytest.raises(ValueError):
        RegularizerNet((ConvLayer(np.zeros((1, 1, 1, 1))),), activation_knee=0.0)


def test_layer_does_not_freeze_caller_array():
    w = np.ones((1, 1, 1, 1))
    ConvLayer(w)
    w[0, 0, 0, 0] = 2.0  # still writable


def test_activation_is_c1():
    knee = 0.01
    t = np.array([-knee, knee])
    np.testing.assert_allclose(regnet.activation(t, knee), [0.0, knee])
    np.testing.assert_allclose(regnet.activation_grad(t, knee), [0.0, 1.0])
    assert regnet.activation(np.array(0.0), knee) == pytest.approx(knee / 4)


# -- forward --------------------------------------------------------------------------


def test_identity_forward_and_zero_weights(rng):
    y = rng.standard_normal((5, 6))
    np.testing.assert_array_equal(regnet.feature_forward(regnet.identity_net(), y)[0], y)
    assert not regnet.feature_forward(regnet.zero_net(3), y).any()


def test_forward_matches_dense_oracle():
    net = small_net(seed=3, channels=(3, 2))
    y = np.random.default_rng(7).standard_normal((4, 4))
    w1, w2 = (layer.kernels for layer in net.layers)
    h = conv_matrix(w1, 4, 4) @ y.ravel()
    h = regnet.activation(h, net.activation_knee)
    want = (conv_matrix(w2, 4, 4) @ h).reshape(2, 4, 4)
    np.testing.assert_allclose(regnet.feature_forward(net, y), want, rtol=0, atol=1e-12)


def test_conv_transpose_is_adjoint(rng):
    w = rng.standard_normal((3, 2, 5, 5))
    x = rng.standard_normal((2, 6, 7))
    g = rng.standard_normal((3, 6, 7))
    lhs = np.vdot(regnet.conv2d(x, w), g)
    rhs = np.vdot(x, regnet.conv2d_transpose(g, w))
    assert lhs == pytest.approx(rhs, rel=1e-12)


# -- Jacobians -------------------------------------------------------------------------


def test_jacobian_transpose_trivial_cases(rng):
    y = rng.standard_normal((4, 4))
    w = rng.standard_normal((1, 4, 4))
    np.testing.assert_array_equal(regnet.jacobian_transpose_apply(regnet.identity_net(), y, w), w[0])
    net = small_net()
    assert not regnet.jacobian_transpose_apply(net, y, np.zeros((2, 4, 4))).any()
    with pytest.raises(ValueError):
        regnet.jacobian_transpose_apply(net, y, np.zeros((3, 4, 4)))


@pytest.mark.parametrize("seed", range(5))
def test_jacobian_dot_product_against_finite_differences(seed):
    net = small_net(seed=seed)
    rng = np.random.default_rng(seed)
    y, v = rng.standard_normal((2, 8, 8))
    w = rng.standard_normal((2, 8, 8))
    h = 1e-6
    jv = (regnet.feature_forward(net, y + h * v) - regnet.feature_forward(net, y - h * v)) / (2 * h)
    lhs = np.vdot(jv, w)
    rhs = np.vdot(v, regnet.jacobian_transpose_apply(net, y, w))
    assert abs(lhs - rhs) / abs(rhs) < 1e-6
    # forward-mode product agrees with the transpose exactly up to rounding
    assert np.vdot(regnet.jacobian_apply(net, y, v), w) == pytest.approx(rhs, rel=1e-12)


# -- L2,1 and smoothing -------------------------------------------------------------------


def test_l21_examples(rng):
    one = rng.standard_normal((1, 5, 5))
    assert regnet.l21_norm(one) == pytest.approx(np.abs(one).sum(), rel=1e-15)
    pair = np.stack([np.full((3, 4), 3.0), np.full((3, 4), 4.0)])
    assert regnet.l21_norm(pair) == pytest.approx(5.0 * 12)
    stack = rng.standard_normal((4, 6, 5))
    direct = sum(
        np.sqrt(sum(stack[c, i, j] ** 2 for c in range(4))) for i in range(6) for j in range(5)
    )
    assert regnet.l21_norm(stack) == pytest.approx(direct, rel=1e-13)


def test_smoothed_value_huber_examples():
    net = regnet.identity_net()
    assert regnet.smoothed_value(net, np.array([[0.05]]), 0.1) == pytest.approx(0.0125, rel=1e-15)
    assert regnet.smoothed_value(net, np.array([[1.0]]), 0.1) == pytest.approx(0.95, rel=1e-15)
    with pytest.raises(ValueError):
        regnet.smoothed_value(net, np.array([[1.0]]), 0.0)
    with pytest.raises(ValueError):
        regnet.smoothed_gradient(net, np.array([[1.0]]), -1.0)


@pytest.mark.parametrize("seed", range(3))
def test_smoothed_value_independent_evaluation(seed):
    net = small_net(seed=seed)
    y = np.random.default_rng(seed).standard_normal((8, 8))
    g = regnet.feature_forward(net, y)
    eps = 0.05
    total = 0.0
    for i in range(8):
        for j in range(8):
            r = float(np.linalg.norm(g[:, i, j]))
            total += r * r / (2 * eps) if r <= eps else r - eps / 2
    assert regnet.smoothed_value(net, y, eps) == pytest.approx(total, rel=1e-13)


@given(st.floats(1e-3, 10.0), st.integers(0, 2**32 - 1))
def test_sandwich(eps, seed):
    net = small_net(seed=seed % 7)
    y = np.random.default_rng(seed).standard_normal((6, 6))
    r = regnet.smoothed_value(net, y, eps)
    full = regnet.l21_norm(regnet.feature_forward(net, y))
    assert r <= full + 1e-12
    assert full <= r + 36 * eps / 2 + 1e-12


def test_identity_gradient_inside_knee(rng):
    y = rng.uniform(-0.09, 0.09, (4, 4))
    np.testing.assert_allclose(regnet.smoothed_gradient(regnet.identity_net(), y, 0.1), y / 0.1, rtol=1e-15)


def test_gradient_continuous_at_knee():
    # two channels (0.6, 0.8) have norm exactly 1 = eps; both branch weights give g
    net = RegularizerNet((ConvLayer(np.array([[[[0.6]]], [[[0.8]]]])),))
    y = np.array([[1.0]])
    g = regnet.smoothed_gradient(net, y, 1.0)
    assert g[0, 0] == pytest.approx(0.6 * 0.6 + 0.8 * 0.8, rel=1e-15)
    below = regnet.smoothed_gradient(net, y, 1.0 + 1e-9)[0, 0]
    above = regnet.smoothed_gradient(net, y, 1.0 - 1e-9)[0, 0]
    assert below == pytest.approx(g[0, 0], abs=1e-8)
    assert above == pytest.approx(g[0, 0], abs=1e-8)


@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
@pytest.mark.parametrize("seed", range(4))
def test_smoothed_gradient_finite_differences(eps, seed):
    net = small_net(seed=seed)
    y = np.random.default_rng(100 + seed).standard_normal((8, 8))
    assert checks.check_regularizer_gradient(net, y, eps).passed


# -- Lipschitz estimate ------------------------------------------------------------------------


@pytest.mark.parametrize("eps", [1.0, 0.25, 1e-3])
def test_identity_lipschitz_exact(eps):
    assert regnet.estimate_lipschitz(regnet.identity_net(), eps, (6, 6)) == pytest.approx(1 / eps, rel=1e-12)


def test_tv_lipschitz_matches_operator_norm():
    # M^2 of the forward-difference pair on an n x n grid approaches 8
    est = regnet.estimate_lipschitz(regnet.tv_net(1.0), 1.0, (32, 32), power_iters=300)
    assert 7.5 < est <= 8.0


def test_halving_eps_doubles_curvature_term():
    net = small_net(seed=2)
    a = regnet.estimate_lipschitz(net, 0.2, (8, 8), seed=5)
    b = regnet.estimate_lipschitz(net, 0.1, (8, 8), seed=5)
    assert b <= 2 * a + 1e-9
    assert b > a


def test_lipschitz_random_pair_audit():
    net = small_net(seed=1)
    eps = 0.1
    lhat = regnet.estimate_lipschitz(net, eps, (8, 8))
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(1000):
        y1 = rng.standard_normal((8, 8))
        y2 = y1 + 0.05 * rng.standard_normal((8, 8))
        d = np.linalg.norm(regnet.smoothed_gradient(net, y1, eps) - regnet.smoothed_gradient(net, y2, eps))
        worst = max(worst, d / np.linalg.norm(y1 - y2))
    assert worst <= lhat


def test_lipschitz_argument_errors():
    with pytest.raises(ValueError):
        regnet.estimate_lipschitz(regnet.identity_net(), 0.0, (4, 4))
    with pytest.raises(ValueError):
        regnet.estimate_lipschitz(regnet.identity_net(), 1.0, (4, 4), probes=0)


# -- presets ------------------------------------------------------------------------------------


def test_tv_preset_features(rng):
    y = rng.standard_normal((5, 5))
    g = regnet.feature_forward(regnet.tv_net(2.0), y)
    np.testing.assert_allclose(g[0, :, :-1], 2.0 * (y[:, 1:] - y[:, :-1]), rtol=1e-14)
    np.testing.assert_allclose(g[1, :-1, :], 2.0 * (y[1:, :] - y[:-1, :]), rtol=1e-14)
    assert regnet.tv_net().is_linear


def test_random_net_is_seeded_and_scaled():
    a = regnet.random_net(seed=4)
    b = regnet.random_net(seed=4)
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.kernels, lb.kernels)
    assert a.out_channels == 16 and len(a.layers) == 3
    m = regnet._jacobian_norm(regnet.random_net(channels=(8,), seed=1), (16, 16), 1)
    assert m == pytest.approx(1.0, rel=1e-6)
