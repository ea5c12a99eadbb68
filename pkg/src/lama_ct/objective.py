"""Dual-domain objective and its gradients.

``f(x, z) = 1/2 ||A x - z||^2 + lam/2 ||P0 z - s||^2`` couples the image
``x`` and the full-view sinogram ``z``; ``Phi = f + R(x) + Q(z)`` adds the
L2,1 feature regularizers and ``Phi_eps`` their smoothed versions.

Every function accepts an optional precomputed ``ax = A x`` so the solver
can avoid repeating projections; passing it never changes the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import regnet, tomo
from .regnet import RegularizerNet
from .tomo import Geometry, ViewSelector

__all__ = [
    "Problem",
    "Iterate",
    "f_value",
    "grad_f_x",
    "grad_f_z",
    "phi_value",
    "phi_eps_value",
    "grad_phi_eps",
    "phi_eps_and_grad",
    "grad_norm",
    "data_lipschitz",
    "block_lipschitz",
]


@dataclass(frozen=True)
class Problem:
    geometry: Geometry
    selector: ViewSelector
    measured: np.ndarray
    lam: float = 1.0
    reg_x: RegularizerNet | None = None
    reg_z: RegularizerNet | None = None

    def __post_init__(self):
        s = np.ascontiguousarray(self.measured, dtype=np.float64)
        if self.selector.full_view_count != self.geometry.n_views_full:
            raise ValueError("selector and geometry disagree on the full view count")
        if s.shape != (self.selector.sparse_view_count, self.geometry.n_detectors):
            raise ValueError(
                f"measured sinogram shape {s.shape} does not match the selector "
                f"({self.selector.sparse_view_count} x {self.geometry.n_detectors})"
            )
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        object.__setattr__(self, "measured", s)


@dataclass
class Iterate:
    x: np.ndarray
    z: np.ndarray
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def _check(p, x, z):
    if np.shape(x) != p.geometry.image_shape:
        raise ValueError(f"x has shape {np.shape(x)}, expected {p.geometry.image_shape}")
    if np.shape(z) != p.geometry.sino_shape:
        raise ValueError(f"z has shape {np.shape(z)}, expected {p.geometry.sino_shape}")


def _ax(p, x, ax):
    return tomo.project(x, p.geometry) if ax is None else ax


def f_value(p: Problem, x, z, ax=None) -> float:
    _check(p, x, z)
    r = _ax(p, x, ax) - z
    c = tomo.select(z, p.selector) - p.measured
    return 0.5 * float(np.vdot(r, r)) + 0.5 * p.lam * float(np.vdot(c, c))


def grad_f_x(p: Problem, x, z, ax=None) -> np.ndarray:
    """``A^T (A x - z)``."""
    _check(p, x, z)
    return tomo.backproject(_ax(p, x, ax) - z, p.geometry)


def grad_f_z(p: Problem, x, z, ax=None) -> np.ndarray:
    """``-(A x - z) + lam P0^T (P0 z - s)``."""
    _check(p, x, z)
    consistency = tomo.embed(tomo.select(z, p.selector) - p.measured, p.selector)
    return (z - _ax(p, x, ax)) + p.lam * consistency


def _reg_value(net, y):
    return 0.0 if net is None else regnet.l21_norm(regnet.feature_forward(net, y))


def _reg_smooth(net, y, eps):
    if net is None:
        return 0.0, np.zeros_like(y, dtype=np.float64)
    return regnet.smoothed_value_and_gradient(net, y, eps)


def phi_value(p: Problem, x, z, ax=None) -> float:
    """Nonsmooth objective ``f + ||g_R(x)||_{2,1} + ||g_Q(z)||_{2,1}``."""
    return f_value(p, x, z, ax) + _reg_value(p.reg_x, x) + _reg_value(p.reg_z, z)


def phi_eps_value(p: Problem, it: Iterate, ax=None) -> float:
    r = 0.0 if p.reg_x is None else regnet.smoothed_value(p.reg_x, it.x, it.eps)
    q = 0.0 if p.reg_z is None else regnet.smoothed_value(p.reg_z, it.z, it.eps)
    return f_value(p, it.x, it.z, ax) + r + q


def phi_eps_and_grad(p: Problem, it: Iterate, ax=None):
    """``(Phi_eps, grad_x, grad_z, A x)`` with one projection and one back-projection."""
    _check(p, it.x, it.z)
    ax = _ax(p, it.x, ax)
    rv, rg = _reg_smooth(p.reg_x, it.x, it.eps)
    qv, qg = _reg_smooth(p.reg_z, it.z, it.eps)
    value = f_value(p, it.x, it.z, ax) + rv + qv
    gx = grad_f_x(p, it.x, it.z, ax) + rg
    gz = grad_f_z(p, it.x, it.z, ax) + qg
    return value, gx, gz, ax


def grad_phi_eps(p: Problem, it: Iterate, ax=None):
    _, gx, gz, _ = phi_eps_and_grad(p, it, ax)
    return gx, gz


def grad_norm(gx, gz) -> float:
    """Euclidean norm of the stacked ``(x, z)`` gradient."""
    return math.sqrt(float(np.vdot(gx, gx)) + float(np.vdot(gz, gz)))


def data_lipschitz(p: Problem, iters: int = 100, seed: int = 0) -> float:
    """Largest eigenvalue of the Hessian of ``f`` by power iteration.

    The Hessian acts as ``(x, z) -> (A^T(Ax - z), z - Ax + lam P0^T P0 z)``.
    """
    rng = np.random.default_rng(seed)
    geo = p.geometry
    x = rng.standard_normal(geo.image_shape)
    z = rng.standard_normal(geo.sino_shape)
    lam_max = 0.0
    for _ in range(iters):
        nrm = grad_norm(x, z)
        x, z = x / nrm, z / nrm
        r = tomo.project(x, geo) - z
        hx = tomo.backproject(r, geo)
        hz = -r + p.lam * tomo.embed(tomo.select(z, p.selector), p.selector)
        lam_max = grad_norm(hx, hz)
        x, z = hx, hz
    return lam_max


def block_lipschitz(p: Problem, iters: int = 100, seed: int = 0) -> tuple[float, float]:
    """Per-block constants ``(||A||^2, 1 + lam)`` of ``grad_x f`` and ``grad_z f``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(p.geometry.image_shape)
    norm_sq = 0.0
    for _ in range(iters):
        x /= math.sqrt(float(np.vdot(x, x)))
        x = tomo.backproject(tomo.project(x, p.geometry), p.geometry)
        norm_sq = math.sqrt(float(np.vdot(x, x)))
    return norm_sq, 1.0 + p.lam
