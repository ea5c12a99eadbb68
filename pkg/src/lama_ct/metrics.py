"""Image and sinogram quality metrics."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["MetricReport", "psnr", "ssim", "rmse_sinogram", "report"]

SSIM_WINDOW = 8


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    sino_rmse: float

    @staticmethod
    def csv_header() -> str:
        return ",".join(f.name for f in fields(MetricReport))

    def csv_row(self) -> str:
        return ",".join(repr(float(v)) for v in astuple(self))


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, data_range: float = 1.0) -> float:
    """``10 log10(range^2 / MSE)``; ``inf`` for identical inputs."""
    a, b = _pair(a, b)
    if not data_range > 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def ssim(a, b, data_range: float = 1.0, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all ``window x window`` patches (uniform weights, stride 1).

    Local statistics are plain patch means and population (co)variances;
    ``C1 = (0.01 L)^2`` and ``C2 = (0.03 L)^2``.
    """
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < window:
        raise ValueError(f"images must be 2-D and at least {window}x{window}")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def local_mean(img):
        return sliding_window_view(img, (window, window)).mean(axis=(-2, -1))

    mu_a, mu_b = local_mean(a), local_mean(b)
    var_a = local_mean(a * a) - mu_a**2
    var_b = local_mean(b * b) - mu_b**2
    cov = local_mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def rmse_sinogram(z, z_ref) -> float:
    z, z_ref = _pair(z, z_ref)
    return math.sqrt(float(np.mean((z - z_ref) ** 2)))


def report(x, x_ref, z, z_ref, data_range: float | None = None) -> MetricReport:
    if data_range is None:
        data_range = float(np.max(x_ref) - np.min(x_ref)) or 1.0
    return MetricReport(psnr(x, x_ref, data_range), ssim(x, x_ref, data_range), rmse_sinogram(z, z_ref))
