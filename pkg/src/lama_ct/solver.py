"""Learned alternating minimization with a convergence safeguard.

Each outer iteration at smoothing level ``eps_k``:

1. builds a PALM-style candidate (z-block first, then the x-block using
   the new z) with linearized regularizer steps;
2. accepts it only if it decreases ``Phi_eps`` sufficiently *and* the
   current gradient is bounded by the displacement;
3. otherwise falls back to an alternating gradient step with backtracking
   until a sufficient-decrease test holds;
4. shrinks ``eps`` by ``gamma`` once ``||grad Phi_eps||`` at the new
   iterate drops below ``sigma * gamma * eps``.

Inequalities are inclusive (``<=`` accepts) and the line-search steps
restart from ``(bar_alpha0, bar_beta0)`` every iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics, objective, regnet, tomo
from .errors import ConfigError, LineSearchFailure, NumericalFailure
from .objective import Iterate, Problem

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "SolveResult",
    "resolve_config",
    "palm_candidate",
    "safeguard_check",
    "candidate_certificate",
    "descent_certificate",
    "bcd_step",
    "line_search",
    "eps_update",
    "lama_solve",
    "lipschitz_estimate",
    "backtrack_bound",
    "descent_constant",
    "loss_report",
    "CANDIDATE",
    "SAFEGUARD",
]

log = logging.getLogger(__name__)

CANDIDATE = "candidate-accepted"
SAFEGUARD = "safeguard"
STEP_RULES = ("joint", "block")


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes and safeguard constants.

    ``alpha``/``beta`` left as ``None`` become ``step_scale / L_f`` with
    ``L_f`` the largest Hessian eigenvalue of the data term, and
    ``alpha_hat``/``beta_hat`` default to half of those. Unset
    ``bar_alpha0``/``bar_beta0`` and ``eta`` become ``0.5 / max(1, L_f)``
    and ``1e-3 / max(1, L_f)``, so they follow the units of the data.

    With ``step_rule="block"`` the default ``beta`` (x-step) and ``alpha``
    (z-step) use the per-block constants ``||A||^2`` and ``1 + lam``
    instead of the joint ``L_f``.
    """

    alpha: float | None = None
    beta: float | None = None
    alpha_hat: float | None = None
    beta_hat: float | None = None
    bar_alpha0: float | None = None
    bar_beta0: float | None = None
    rho: float = 0.5
    delta: float = 1e-4
    eta: float | None = None
    sigma: float = 1.0
    gamma: float = 0.5
    eps0: float = 1.0
    eps_tol: float = 1e-4
    max_iters: int = 2000
    max_backtracks: int = 60
    grad_tol: float = 1e-12
    step_scale: float = 0.2
    step_rule: str = "joint"

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("alpha_hat", "beta_hat"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("bar_alpha0", "bar_beta0", "rho", "delta", "gamma"):
            v = getattr(self, name)
            if v is not None and not 0 < v < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("eta must be > 0")
        for name in ("sigma", "eps0", "step_scale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not self.eps_tol >= 0:
            raise ConfigError("eps_tol must be >= 0")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if self.max_backtracks < 1:
            raise ConfigError("max_backtracks must be >= 1")
        if self.step_rule not in STEP_RULES:
            raise ConfigError(f"step_rule must be one of {STEP_RULES}, got {self.step_rule!r}")
        if not self.grad_tol >= 0:
            raise ConfigError("grad_tol must be >= 0")

    @property
    def resolved(self) -> bool:
        return None not in (
            self.alpha,
            self.beta,
            self.alpha_hat,
            self.beta_hat,
            self.bar_alpha0,
            self.bar_beta0,
            self.eta,
        )


@dataclass
class IterationRecord:
    k: int
    branch: str
    backtracks: int
    eps: float
    phi_prev: float
    phi: float
    grad_norm_prev: float
    grad_norm: float
    eps_reduced: bool
    dx: float
    dz: float
    step_x: float = math.nan
    step_z: float = math.nan


@dataclass
class SolveResult:
    final: Iterate
    trace: list[IterationRecord]
    reason: str
    config: SolverConfig
    iterates: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def x(self):
        return self.final.x

    @property
    def z(self):
        return self.final.z


def resolve_config(p: Problem, cfg: SolverConfig, power_iters: int = 60) -> SolverConfig:
    """Fill unset steps and safeguard constants from the data-term Lipschitz constant."""
    if cfg.resolved:
        return cfg
    l_f = objective.data_lipschitz(p, iters=power_iters)
    unit = max(1.0, l_f)

    def pick(value, default):
        return default if value is None else value

    if cfg.step_rule == "block":
        l_x, l_z = objective.block_lipschitz(p, iters=power_iters)
    else:
        l_x = l_z = l_f
    alpha = pick(cfg.alpha, cfg.step_scale / l_z)
    beta = pick(cfg.beta, cfg.step_scale / l_x)
    return replace(
        cfg,
        alpha=alpha,
        beta=beta,
        alpha_hat=pick(cfg.alpha_hat, alpha / 2.0),
        beta_hat=pick(cfg.beta_hat, beta / 2.0),
        bar_alpha0=pick(cfg.bar_alpha0, 0.5 / unit),
        bar_beta0=pick(cfg.bar_beta0, 0.5 / unit),
        eta=pick(cfg.eta, 1e-3 / unit),
    )


def _require_resolved(cfg, who):
    if not cfg.resolved:
        raise ConfigError(f"{who} needs concrete step sizes; call resolve_config first")


def _reg_grad(net, y, eps):
    if net is None:
        return np.zeros_like(y)
    return regnet.smoothed_gradient(net, y, eps)


def _sqnorm(a):
    return float(np.vdot(a, a))


def palm_candidate(p: Problem, it: Iterate, cfg: SolverConfig, ax=None):
    """Candidate ``(u_x, u_z)``: gradient step on ``f`` then linearized regularizer step."""
    _require_resolved(cfg, "palm_candidate")
    ax = tomo.project(it.x, p.geometry) if ax is None else ax
    b = it.z - cfg.alpha * objective.grad_f_z(p, it.x, it.z, ax)
    u_z = b - cfg.alpha_hat * _reg_grad(p.reg_z, b, it.eps)
    c = it.x - cfg.beta * objective.grad_f_x(p, it.x, u_z, ax)
    u_x = c - cfg.beta_hat * _reg_grad(p.reg_x, c, it.eps)
    return u_x, u_z


def candidate_certificate(phi_prev, phi_new, grad_prev, dx, dz, eta) -> bool:
    """Sufficient decrease plus gradient bounded by displacement."""
    decrease = phi_new - phi_prev <= -eta * (dx * dx + dz * dz)
    bounded = grad_prev <= (dx + dz) / eta
    return bool(decrease and bounded)


def descent_certificate(phi_prev, phi_new, dx, dz, delta) -> bool:
    return bool(phi_new - phi_prev <= -delta * (dx * dx + dz * dz))


def safeguard_check(p: Problem, it: Iterate, u_x, u_z, eta: float) -> bool:
    phi_prev, gx, gz, _ = objective.phi_eps_and_grad(p, it)
    phi_new = objective.phi_eps_value(p, Iterate(u_x, u_z, it.eps))
    dx = math.sqrt(_sqnorm(u_x - it.x))
    dz = math.sqrt(_sqnorm(u_z - it.z))
    return candidate_certificate(phi_prev, phi_new, objective.grad_norm(gx, gz), dx, dz, eta)


class _BCDCache:
    """Quantities of one iterate that every backtracking trial reuses."""

    def __init__(self, p, it, ax=None, gz=None):
        self.ax = tomo.project(it.x, p.geometry) if ax is None else ax
        if gz is None:
            gz = objective.grad_f_z(p, it.x, it.z, self.ax) + _reg_grad(p.reg_z, it.z, it.eps)
        self.gz = gz
        self.grad_r = _reg_grad(p.reg_x, it.x, it.eps)


def _bcd(p, it, bar_alpha, bar_beta, cache):
    v_z = it.z - bar_alpha * cache.gz
    v_x = it.x - bar_beta * (objective.grad_f_x(p, it.x, v_z, cache.ax) + cache.grad_r)
    return v_x, v_z


def bcd_step(p: Problem, it: Iterate, bar_alpha: float, bar_beta: float):
    """Alternating gradient step; ``grad R_eps`` is taken at the old ``x``."""
    return _bcd(p, it, bar_alpha, bar_beta, _BCDCache(p, it))


def line_search(p: Problem, it: Iterate, cfg: SolverConfig, phi_prev=None, cache=None):
    """Backtrack ``(bar_alpha, bar_beta) <- rho * (...)`` until sufficient decrease.

    Returns ``(v_x, v_z, backtracks, (step_x, step_z), phi_new, A v_x)``
    where ``step_z`` is the z-step ``bar_alpha`` and ``step_x`` the x-step
    ``bar_beta`` actually used.
    """
    _require_resolved(cfg, "line_search")
    cache = _BCDCache(p, it) if cache is None else cache
    if phi_prev is None:
        phi_prev = objective.phi_eps_value(p, it, cache.ax)
    bar_alpha, bar_beta = cfg.bar_alpha0, cfg.bar_beta0
    for ell in range(cfg.max_backtracks + 1):
        v_x, v_z = _bcd(p, it, bar_alpha, bar_beta, cache)
        a_vx = tomo.project(v_x, p.geometry)
        phi_new = objective.phi_eps_value(p, Iterate(v_x, v_z, it.eps), a_vx)
        dx = math.sqrt(_sqnorm(v_x - it.x))
        dz = math.sqrt(_sqnorm(v_z - it.z))
        if descent_certificate(phi_prev, phi_new, dx, dz, cfg.delta):
            return v_x, v_z, ell, (bar_beta, bar_alpha), phi_new, a_vx
        bar_alpha *= cfg.rho
        bar_beta *= cfg.rho
    raise LineSearchFailure(
        f"no sufficient decrease after {cfg.max_backtracks} backtracks at eps={it.eps:g}"
    )


def eps_update(grad_norm: float, eps: float, sigma: float, gamma: float) -> float:
    return gamma * eps if grad_norm < sigma * gamma * eps else eps


def lipschitz_estimate(p: Problem, eps: float, probes: int = 4, seed: int = 0, l_f=None) -> float:
    """Empirical Lipschitz constant of ``grad Phi_eps``: ``L_f + max(L_R, L_Q)``."""
    l_f = objective.data_lipschitz(p) if l_f is None else l_f
    l_r = 0.0
    if p.reg_x is not None and not p.reg_x.is_zero:
        l_r = regnet.estimate_lipschitz(p.reg_x, eps, p.geometry.image_shape, probes, seed)
    l_q = 0.0
    if p.reg_z is not None and not p.reg_z.is_zero:
        l_q = regnet.estimate_lipschitz(p.reg_z, eps, p.geometry.sino_shape, probes, seed)
    return l_f + max(l_r, l_q)


def backtrack_bound(lipschitz: float, cfg: SolverConfig) -> int:
    """Largest backtrack count the descent-lemma argument allows, plus one.

    Sufficient decrease is guaranteed once ``max(bar_alpha, bar_beta) *
    rho**ell <= 1 / (delta + L/2)``.
    """
    _require_resolved(cfg, "backtrack_bound")
    t = 1.0 / ((cfg.delta + lipschitz / 2.0) * max(cfg.bar_alpha0, cfg.bar_beta0))
    ell = 0 if t >= 1.0 else math.ceil(math.log(t) / math.log(cfg.rho))
    return ell + 1


def descent_constant(lipschitz: float, cfg: SolverConfig) -> float:
    """``C`` with ``||grad Phi_eps(x_k)||^2 <= C (Phi_eps(x_k) - Phi_eps(x_{k+1}))``.

    Candidate steps give ``2/eta^3``. A safeguard step with step sizes at
    least ``s`` gives ``2 (1/s + L)^2 / delta``, using ``s`` from
    :func:`backtrack_bound`.
    """
    s = min(cfg.bar_alpha0, cfg.bar_beta0) * cfg.rho ** backtrack_bound(lipschitz, cfg)
    return max(2.0 / cfg.eta**3, 2.0 * (1.0 / s + lipschitz) ** 2 / cfg.delta)


def _finite(*values):
    return all(math.isfinite(v) for v in values)


def lama_solve(
    p: Problem,
    x0,
    z0,
    cfg: SolverConfig | None = None,
    record_iterates: bool = False,
    callback=None,
) -> SolveResult:
    """Run the safeguarded alternating minimization from ``(x0, z0)``.

    Stops when ``eps`` falls to ``eps_tol``, when the gradient norm at the
    new iterate is below ``grad_tol`` (``"stationary"``), or after
    ``max_iters`` iterations. ``callback(record, x, z)`` is called after
    every iteration.
    """
    cfg = resolve_config(p, cfg or SolverConfig())
    geo = p.geometry
    x = np.array(x0, dtype=np.float64)
    z = np.array(z0, dtype=np.float64)
    if x.shape != geo.image_shape or z.shape != geo.sino_shape:
        raise ValueError("initial iterate does not match the problem geometry")
    eps = cfg.eps0
    trace: list[IterationRecord] = []
    iterates = [(x.copy(), z.copy())] if record_iterates else []

    phi, gx, gz, ax = objective.phi_eps_and_grad(p, Iterate(x, z, eps))
    gnorm = objective.grad_norm(gx, gz)
    if not _finite(phi, gnorm):
        raise NumericalFailure("objective is not finite at the initial iterate")

    def result(reason):
        return SolveResult(Iterate(x, z, eps), trace, reason, cfg, iterates)

    if gnorm < cfg.grad_tol:
        return result("stationary")
    if eps <= cfg.eps_tol:
        return result("eps_tol")

    for k in range(cfg.max_iters):
        it = Iterate(x, z, eps)
        u_x, u_z = palm_candidate(p, it, cfg, ax)
        a_ux = tomo.project(u_x, geo)
        phi_u = objective.phi_eps_value(p, Iterate(u_x, u_z, eps), a_ux)
        dx = math.sqrt(_sqnorm(u_x - x))
        dz = math.sqrt(_sqnorm(u_z - z))
        if _finite(phi_u) and candidate_certificate(phi, phi_u, gnorm, dx, dz, cfg.eta):
            branch, ell, steps = CANDIDATE, 0, (math.nan, math.nan)
            x_new, z_new, ax_new = u_x, u_z, a_ux
        else:
            cache = _BCDCache(p, it, ax, gz)
            try:
                x_new, z_new, ell, steps, _, ax_new = line_search(p, it, cfg, phi, cache)
            except LineSearchFailure as exc:
                exc.trace = list(trace)
                raise
            branch = SAFEGUARD
            dx = math.sqrt(_sqnorm(x_new - x))
            dz = math.sqrt(_sqnorm(z_new - z))

        phi_new, gx_new, gz_new, _ = objective.phi_eps_and_grad(p, Iterate(x_new, z_new, eps), ax_new)
        gnorm_new = objective.grad_norm(gx_new, gz_new)
        if not _finite(phi_new, gnorm_new):
            raise NumericalFailure(f"non-finite objective at iteration {k}")
        eps_next = eps_update(gnorm_new, eps, cfg.sigma, cfg.gamma)
        rec = IterationRecord(
            k=k,
            branch=branch,
            backtracks=ell,
            eps=eps,
            phi_prev=phi,
            phi=phi_new,
            grad_norm_prev=gnorm,
            grad_norm=gnorm_new,
            eps_reduced=eps_next < eps,
            dx=dx,
            dz=dz,
            step_x=steps[0],
            step_z=steps[1],
        )
        trace.append(rec)
        x, z, ax = x_new, z_new, ax_new
        if record_iterates:
            iterates.append((x.copy(), z.copy()))
        if callback is not None:
            callback(rec, x, z)

        if eps_next < eps:
            eps = eps_next
            phi, gx, gz, _ = objective.phi_eps_and_grad(p, Iterate(x, z, eps), ax)
            gnorm = objective.grad_norm(gx, gz)
        else:
            phi, gx, gz, gnorm = phi_new, gx_new, gz_new, gnorm_new
        if eps <= cfg.eps_tol:
            return result("eps_tol")
        if gnorm_new < cfg.grad_tol:
            return result("stationary")
    return result("max_iters")


def loss_report(p: Problem, result: SolveResult, ground_truth, mu: float = 0.01) -> float:
    """Training-style loss of one reconstruction against its ground truth.

    ``||x - x_hat||^2 + ||z - A x_hat||^2 + mu (1 - SSIM(x, x_hat))``.
    """
    gt = np.asarray(ground_truth, dtype=np.float64)
    x, z = result.final.x, result.final.z
    loss = _sqnorm(x - gt) + _sqnorm(z - tomo.project(gt, p.geometry))
    if mu:
        data_range = float(gt.max() - gt.min()) or 1.0
        loss += mu * (1.0 - metrics.ssim(x, gt, data_range))
    return loss
