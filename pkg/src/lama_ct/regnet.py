"""Learnable feature extractor ``g`` and its smoothed L2,1 regularizer.

A :class:`RegularizerNet` is a stack of zero-padded "same" convolutions
(cross-correlations, as in CNN libraries) with a C1 smoothed ReLU between
layers and none after the last one. Features are stored channel-first,
``(d, H, W)``; position ``i`` of the L2,1 norm is a pixel and its vector
runs over the ``d`` channels.

The gradient of the smoothed regularizer is the transpose-convolution
chain of the forward pass, so no autodiff framework is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ConvLayer",
    "RegularizerNet",
    "activation",
    "activation_grad",
    "conv2d",
    "conv2d_transpose",
    "feature_forward",
    "jacobian_apply",
    "jacobian_transpose_apply",
    "l21_norm",
    "smoothed_value",
    "smoothed_gradient",
    "smoothed_value_and_gradient",
    "estimate_lipschitz",
    "identity_net",
    "zero_net",
    "tv_net",
    "random_net",
]


@dataclass(frozen=True)
class ConvLayer:
    kernels: np.ndarray  # (out_channels, in_channels, k, k)

    def __post_init__(self):
        w = np.array(self.kernels, dtype=np.float64, order="C", copy=True)
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
            raise ValueError(f"kernels must be (out, in, k, k) with odd k, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "kernels", w)

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]


@dataclass(frozen=True)
class RegularizerNet:
    layers: tuple[ConvLayer, ...]
    activation_knee: float = 0.01
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        layers = tuple(
            l if isinstance(l, ConvLayer) else ConvLayer(np.asarray(l)) for l in self.layers
        )
        if not layers:
            raise ValueError("a RegularizerNet needs at least one layer")
        if layers[0].in_channels != 1:
            raise ValueError("the first layer must take a single input channel")
        for a, b in zip(layers, layers[1:]):
            if a.out_channels != b.in_channels:
                raise ValueError(
                    f"channel mismatch: {a.out_channels} outputs feed {b.in_channels} inputs"
                )
        if not self.activation_knee > 0:
            raise ValueError("activation_knee must be positive")
        object.__setattr__(self, "layers", layers)

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    @property
    def is_linear(self) -> bool:
        return len(self.layers) == 1

    @property
    def is_zero(self) -> bool:
        return all(not np.any(l.kernels) for l in self.layers)


def activation(t, knee):
    """Smoothed ReLU: 0 below ``-knee``, quadratic on ``|t| < knee``, identity above."""
    return np.where(t >= knee, t, np.where(t <= -knee, 0.0, (t + knee) ** 2 / (4.0 * knee)))


def activation_grad(t, knee):
    return np.where(t >= knee, 1.0, np.where(t <= -knee, 0.0, (t + knee) / (2.0 * knee)))


def conv2d(x, w):
    """Zero-padded 'same' cross-correlation of ``x (C, H, W)`` with ``w (O, C, k, k)``."""
    k = w.shape[-1]
    p = k // 2
    if k == 1:
        return np.tensordot(w[:, :, 0, 0], x, axes=(1, 0))
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (C, H, W, k, k)
    return np.einsum("ocab,chwab->ohw", w, win, optimize=True)


def conv2d_transpose(g, w):
    """Adjoint of :func:`conv2d` in its input: maps ``(O, H, W)`` back to ``(C, H, W)``."""
    return conv2d(g, np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]))


def _as_input(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError(f"expected a 2-D image or sinogram, got shape {y.shape}")
    return y[None]


def _forward(net, y):
    """Run the stack, keeping the pre-activations needed by both Jacobians."""
    h = _as_input(y)
    pre = []
    for i, layer in enumerate(net.layers):
        if i:
            pre.append(h)
            h = activation(h, net.activation_knee)
        h = conv2d(h, layer.kernels)
    return h, pre


def feature_forward(net: RegularizerNet, y) -> np.ndarray:
    """Features ``g(y)`` shaped ``(d, H, W)``."""
    return _forward(net, y)[0]


def jacobian_apply(net, y, v, _pre=None):
    """Directional derivative ``J(y) v`` (forward mode)."""
    pre = _forward(net, y)[1] if _pre is None else _pre
    t = _as_input(v)
    for i, layer in enumerate(net.layers):
        if i:
            t = activation_grad(pre[i - 1], net.activation_knee) * t
        t = conv2d(t, layer.kernels)
    return t


def jacobian_transpose_apply(net, y, w, _pre=None):
    """``J(y)^T w``: transpose convolutions interleaved with ``a'`` scaling."""
    pre = _forward(net, y)[1] if _pre is None else _pre
    w = np.asarray(w, dtype=np.float64)
    shape = np.shape(y)
    if w.shape != (net.out_channels,) + tuple(shape):
        raise ValueError(f"w has shape {w.shape}, expected {(net.out_channels,) + tuple(shape)}")
    d = w
    for i in range(len(net.layers) - 1, -1, -1):
        d = conv2d_transpose(d, net.layers[i].kernels)
        if i:
            d = activation_grad(pre[i - 1], net.activation_knee) * d
    return d[0]


def l21_norm(fs) -> float:
    """Sum over positions of the Euclidean norm across channels (axis 0)."""
    fs = np.asarray(fs, dtype=np.float64)
    return float(np.sqrt((fs * fs).sum(axis=0)).sum())


def _huber_parts(g, eps):
    nrm = np.sqrt((g * g).sum(axis=0))
    inner = nrm <= eps
    return nrm, inner


def _check_eps(eps):
    if not eps > 0:
        raise ValueError(f"smoothing factor must be positive, got {eps}")


def smoothed_value(net: RegularizerNet, y, eps: float) -> float:
    _check_eps(eps)
    g = feature_forward(net, y)
    nrm, inner = _huber_parts(g, eps)
    return float(np.where(inner, nrm * nrm / (2.0 * eps), nrm - eps / 2.0).sum())


def smoothed_value_and_gradient(net: RegularizerNet, y, eps: float):
    """One forward pass and one transpose pass: ``(r_eps(y), grad r_eps(y))``."""
    _check_eps(eps)
    g, pre = _forward(net, y)
    nrm, inner = _huber_parts(g, eps)
    value = float(np.where(inner, nrm * nrm / (2.0 * eps), nrm - eps / 2.0).sum())
    # outer positions have nrm > eps > 0, so the division is safe there
    scale = np.where(inner, 1.0 / eps, 1.0 / np.where(inner, 1.0, nrm))
    grad = jacobian_transpose_apply(net, y, g * scale, _pre=pre)
    return value, grad


def smoothed_gradient(net: RegularizerNet, y, eps: float) -> np.ndarray:
    return smoothed_value_and_gradient(net, y, eps)[1]


def _power_norm(apply, shape, rng, iters):
    """Largest singular value of a linear map given ``v -> M^T M v``."""
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    sigma2 = 0.0
    for _ in range(iters):
        w = apply(v)
        sigma2 = float(np.linalg.norm(w))
        if sigma2 == 0.0:
            return 0.0
        v = w / sigma2
    return math.sqrt(sigma2)


def estimate_lipschitz(
    net: RegularizerNet,
    eps: float,
    shape,
    probes: int = 4,
    seed: int = 0,
    power_iters: int = 50,
    spread: float = 1.0,
    step: float = 1e-2,
) -> float:
    """Empirical Lipschitz constant of ``grad r_eps``: ``sqrt(m) L_g + M^2 / eps``.

    ``M`` is the largest Jacobian norm found by power iteration on
    ``J^T J`` at ``probes`` random points of scale ``spread``; ``L_g`` is
    the largest secant quotient ``||J(y1) - J(y2)|| / ||y1 - y2||`` over
    pairs a relative distance ``step`` apart. Both are sampled, so the
    result is an estimate rather than a certified bound. Linear nets give
    ``L_g = 0`` exactly.
    """
    _check_eps(eps)
    if probes < 1:
        raise ValueError("probes must be >= 1")
    shape = tuple(shape)
    rng = np.random.default_rng(seed)
    m = shape[0] * shape[1]
    big_m = 0.0
    big_lg = 0.0
    for _ in range(probes):
        y1 = spread * rng.standard_normal(shape)
        pre1 = _forward(net, y1)[1]
        big_m = max(
            big_m,
            _power_norm(
                lambda v: jacobian_transpose_apply(net, y1, jacobian_apply(net, y1, v, pre1), pre1),
                shape,
                rng,
                power_iters,
            ),
        )
        if net.is_linear:
            continue
        dy = step * spread * rng.standard_normal(shape)
        y2 = y1 + dy
        pre2 = _forward(net, y2)[1]

        def diff_normal(v):
            d = jacobian_apply(net, y1, v, pre1) - jacobian_apply(net, y2, v, pre2)
            return jacobian_transpose_apply(net, y1, d, pre1) - jacobian_transpose_apply(
                net, y2, d, pre2
            )

        big_lg = max(big_lg, _power_norm(diff_normal, shape, rng, power_iters) / np.linalg.norm(dy))
    return math.sqrt(m) * big_lg + big_m**2 / eps


# ---------------------------------------------------------------- presets


def identity_net(knee: float = 0.01) -> RegularizerNet:
    """Single 1x1 identity layer: ``r_eps`` becomes the pixelwise Huber sum."""
    return RegularizerNet((ConvLayer(np.ones((1, 1, 1, 1))),), knee, name="identity")


def zero_net(channels: int = 1, knee: float = 0.01) -> RegularizerNet:
    return RegularizerNet((ConvLayer(np.zeros((channels, 1, 1, 1))),), knee, name="zero")


def tv_net(weight: float = 1.0, knee: float = 0.01) -> RegularizerNet:
    """Isotropic TV: forward differences to the right and downward, scaled by ``weight``."""
    w = np.zeros((2, 1, 3, 3))
    w[0, 0, 1, 1], w[0, 0, 1, 2] = -1.0, 1.0
    w[1, 0, 1, 1], w[1, 0, 2, 1] = -1.0, 1.0
    return RegularizerNet((ConvLayer(weight * w),), knee, name="tv")


def random_net(
    channels=(16, 16, 16),
    kernel_size: int = 3,
    knee: float = 0.01,
    seed: int = 0,
    probe_shape=(16, 16),
    gain: float = 1.0,
) -> RegularizerNet:
    """He-initialized conv stack rescaled so its sampled Jacobian norm is about ``gain``."""
    rng = np.random.default_rng(seed)
    layers = []
    c_in = 1
    for c_out in channels:
        fan_in = c_in * kernel_size * kernel_size
        layers.append(rng.standard_normal((c_out, c_in, kernel_size, kernel_size)) * math.sqrt(2.0 / fan_in))
        c_in = c_out
    net = RegularizerNet(tuple(ConvLayer(w) for w in layers), knee, name="random")
    # exact for one layer, approximate otherwise (the activation is not homogeneous)
    scale = (gain / _jacobian_norm(net, probe_shape, seed)) ** (1.0 / len(layers))
    return RegularizerNet(tuple(ConvLayer(w * scale) for w in layers), knee, name="random")


def _jacobian_norm(net, shape, seed, iters=50):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(shape)
    pre = _forward(net, y)[1]
    return _power_norm(
        lambda v: jacobian_transpose_apply(net, y, jacobian_apply(net, y, v, pre), pre), shape, rng, iters
    )
