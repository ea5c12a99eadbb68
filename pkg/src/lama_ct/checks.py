"""Invariant checks shared by ``lama-ct verify`` and the test-suite.

Each check returns a :class:`CheckResult`; none of them raise on a failed
invariant, so a battery can report every failure at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import objective, regnet, tomo
from .objective import Iterate, Problem
from .solver import CANDIDATE, SAFEGUARD, SolverConfig, backtrack_bound

__all__ = [
    "CheckResult",
    "adjoint_errors",
    "check_adjoint",
    "fd_gradient",
    "relative_error",
    "check_regularizer_gradient",
    "check_objective_gradients",
    "check_huber_reduction",
    "huber_sum",
    "trace_violations",
    "check_trace",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}" + (f": {self.detail}" if self.detail else "")


def adjoint_errors(geo: tomo.Geometry, pairs: int = 100, seed: int = 0, backproject=None) -> np.ndarray:
    """``|<Ax, z> - <x, A^T z>| / |<Ax, z>|`` over random nonnegative pairs.

    Entries are drawn uniform on ``[0, 1)`` so the inner products carry no
    cancellation and the ratio measures rounding alone.
    """
    backproject = tomo.backproject if backproject is None else backproject
    rng = np.random.default_rng(seed)
    errs = np.empty(pairs)
    for i in range(pairs):
        x = rng.random(geo.image_shape)
        z = rng.random(geo.sino_shape)
        lhs = float(np.vdot(tomo.project(x, geo), z))
        rhs = float(np.vdot(x, backproject(z, geo)))
        errs[i] = abs(lhs - rhs) / abs(lhs)
    return errs


def check_adjoint(geo, pairs=20, seed=0, tol=1e-12, backproject=None) -> CheckResult:
    errs = adjoint_errors(geo, pairs, seed, backproject)
    worst = float(errs.max())
    return CheckResult("adjoint", worst < tol, f"max rel err {worst:.2e} (tol {tol:g})")


def fd_gradient(fun, y, step=None) -> np.ndarray:
    """Central differences on every coordinate, step ``1e-5 (1 + ||y||_inf)``."""
    y = np.array(y, dtype=np.float64)
    h = 1e-5 * (1.0 + float(np.max(np.abs(y)))) if step is None else step
    g = np.empty_like(y)
    flat, gflat = y.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = fun(y)
        flat[i] = keep - h
        down = fun(y)
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * h)
    return g


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(a - b)) / scale


def check_regularizer_gradient(net, y, eps, tol=1e-6, name="regularizer gradient") -> CheckResult:
    fd = fd_gradient(lambda v: regnet.smoothed_value(net, v, eps), y)
    err = relative_error(regnet.smoothed_gradient(net, y, eps), fd)
    return CheckResult(name, err < tol, f"rel err {err:.2e} at eps={eps:g}")


def check_objective_gradients(p: Problem, it: Iterate, tol=1e-6) -> list[CheckResult]:
    """Finite-difference checks of ``grad_x f``, ``grad_z f`` and ``grad Phi_eps``."""
    x, z = it.x, it.z
    out = []
    fx = fd_gradient(lambda v: objective.f_value(p, v, z), x)
    fz = fd_gradient(lambda v: objective.f_value(p, x, v), z)
    px = fd_gradient(lambda v: objective.phi_eps_value(p, Iterate(v, z, it.eps)), x)
    pz = fd_gradient(lambda v: objective.phi_eps_value(p, Iterate(x, v, it.eps)), z)
    gx, gz = objective.grad_phi_eps(p, it)
    for name, got, want in (
        ("grad_f_x", objective.grad_f_x(p, x, z), fx),
        ("grad_f_z", objective.grad_f_z(p, x, z), fz),
        ("grad_phi_eps[x]", gx, px),
        ("grad_phi_eps[z]", gz, pz),
    ):
        err = relative_error(got, want)
        out.append(CheckResult(name, err < tol, f"rel err {err:.2e}"))
    return out


def huber_sum(y, eps) -> float:
    """Pixelwise Huber: ``y^2 / (2 eps)`` inside ``|y| <= eps``, ``|y| - eps/2`` outside."""
    a = np.abs(np.asarray(y, dtype=np.float64))
    return float(np.sum(np.where(a <= eps, a * a / (2.0 * eps), a - eps / 2.0)))


def check_huber_reduction(y, eps, tol=1e-12) -> CheckResult:
    got = regnet.smoothed_value(regnet.identity_net(), y, eps)
    want = huber_sum(y, eps)
    err = abs(got - want) / max(abs(want), 1e-300)
    return CheckResult("huber reduction", err < tol, f"rel err {err:.2e}")


def _segments(trace):
    seg = []
    for rec in trace:
        if seg and rec.eps != seg[-1].eps:
            yield seg
            seg = []
        seg.append(rec)
    if seg:
        yield seg


def trace_violations(trace, cfg: SolverConfig, lipschitz=None, tol: float = 1e-10) -> list[str]:
    """Re-evaluate every logged inequality; an empty list means a clean trace.

    Checks per record: the branch's acceptance inequality, the ``eps``
    reduction rule, and (if ``lipschitz`` maps ``eps`` to an estimate) the
    backtrack bound. Per fixed-``eps`` segment: ``phi`` is non-increasing
    within ``tol`` (relative to ``max(1, |phi|)``) and each record's
    ``phi_prev`` equals the previous ``phi``.
    """
    bad = []
    for rec in trace:
        move = rec.dx * rec.dx + rec.dz * rec.dz
        drop = rec.phi - rec.phi_prev
        if rec.branch == CANDIDATE:
            if not drop <= -cfg.eta * move:
                bad.append(f"k={rec.k}: candidate sufficient decrease fails ({drop:.3e})")
            if not rec.grad_norm_prev <= (rec.dx + rec.dz) / cfg.eta:
                bad.append(f"k={rec.k}: candidate gradient bound fails")
        elif rec.branch == SAFEGUARD:
            if not drop <= -cfg.delta * move:
                bad.append(f"k={rec.k}: line-search decrease fails ({drop:.3e})")
            if lipschitz is not None:
                bound = backtrack_bound(lipschitz(rec.eps), cfg)
                if rec.backtracks > bound:
                    bad.append(f"k={rec.k}: {rec.backtracks} backtracks exceed bound {bound}")
        else:
            bad.append(f"k={rec.k}: unknown branch {rec.branch!r}")
        threshold = cfg.sigma * cfg.gamma * rec.eps
        if rec.eps_reduced != (rec.grad_norm < threshold):
            bad.append(f"k={rec.k}: eps reduction flag disagrees with grad norm {rec.grad_norm:.3e}")
    for seg in _segments(trace):
        for prev, rec in zip(seg, seg[1:]):
            if rec.phi_prev != prev.phi:
                bad.append(f"k={rec.k}: phi_prev does not chain to the previous phi")
        for rec in seg:
            if rec.phi > rec.phi_prev + tol * max(1.0, abs(rec.phi_prev)):
                bad.append(f"k={rec.k}: phi increased at fixed eps")
    return bad


def check_trace(trace, cfg, lipschitz=None, tol=1e-10) -> CheckResult:
    bad = trace_violations(trace, cfg, lipschitz, tol)
    detail = f"{len(trace)} iterations clean" if not bad else f"{len(bad)} violations, first: {bad[0]}"
    return CheckResult("descent certificates", not bad, detail)
