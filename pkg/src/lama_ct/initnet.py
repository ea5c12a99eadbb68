"""Recurrent sinogram initializer.

A view-shift operator ``Psi`` maps the measured sparse views to the views
one full-view angle step later. The full sinogram is assembled as
``[s0, Psi(s0), ..., Psi^(p-1)(s0)]`` interleaved so that ``Psi^i(s0)``
fills rows ``i, i + p, i + 2p, ...``; its FBP is the initial image.

Kinds:

``nearest``
    ``Psi`` is the identity (every skipped view copies the previous
    measured one).
``linear-interp``
    ``Psi^i(s0)`` blends each measured view with its successor by weight
    ``i/p``. The successor of the last view is the first view mirrored on
    the detector axis, since a parallel-beam view at ``theta + pi`` is the
    reversed view at ``theta``.
``learned``
    ``Psi(s) = s + g(s)`` with ``g`` a single-output conv stack, applied
    ``i`` times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import regnet, tomo
from .regnet import RegularizerNet
from .tomo import Geometry, ViewSelector

__all__ = ["ViewShiftOperator", "interp_step", "view_shift", "assemble_full", "init_reconstruct", "KINDS"]

KINDS = ("nearest", "linear-interp", "learned")


@dataclass(frozen=True)
class ViewShiftOperator:
    kind: str
    rate: int
    net: RegularizerNet | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown view-shift kind {self.kind!r}; expected one of {KINDS}")
        if self.rate < 1:
            raise ValueError("rate must be >= 1")
        if self.kind == "learned":
            if self.net is None:
                raise ValueError("a learned view-shift operator needs weights")
            if self.net.out_channels != 1:
                raise ValueError("learned view-shift nets must have one output channel")


def _successor(s):
    return np.vstack((s[1:], s[:1, ::-1]))


def interp_step(op: ViewShiftOperator, s) -> np.ndarray:
    """One application of ``Psi``: the estimate one angle step later."""
    return view_shift(op, s, 1)


def view_shift(op: ViewShiftOperator, s0, steps: int) -> np.ndarray:
    """``Psi^steps(s0)``."""
    s0 = np.asarray(s0, dtype=np.float64)
    if s0.ndim != 2:
        raise ValueError("expected a (views, detectors) sinogram")
    if op.kind == "nearest" or steps == 0:
        return s0.copy()
    if op.kind == "linear-interp":
        # written as an increment so equal neighbours reproduce s0 exactly
        return s0 + (steps / op.rate) * (_successor(s0) - s0)
    s = s0
    for _ in range(steps):
        s = s + regnet.feature_forward(op.net, s)[0]
    return s


def assemble_full(op: ViewShiftOperator, s0, sel: ViewSelector) -> np.ndarray:
    s0 = np.asarray(s0, dtype=np.float64)
    if sel.offset != 0:
        raise ValueError("assembly expects the measured views at offset 0")
    if op.rate != sel.rate:
        raise ValueError(f"operator rate {op.rate} differs from selector rate {sel.rate}")
    if s0.ndim != 2 or s0.shape[0] * sel.rate != sel.full_view_count:
        raise ValueError(f"sparse sinogram shape {s0.shape} does not fit the selector")
    full = np.empty((sel.full_view_count, s0.shape[1]))
    for i in range(sel.rate):
        full[i :: sel.rate] = view_shift(op, s0, i)
    return full


def init_reconstruct(op: ViewShiftOperator, s0, sel: ViewSelector, geo: Geometry, filter_kind: str = "ram-lak"):
    """``(x0, z0)``: the assembled sinogram and its FBP."""
    z0 = assemble_full(op, s0, sel)
    return tomo.fbp(z0, geo, filter_kind), z0
