"""Parallel-beam tomography: Joseph projector, its exact transpose, FBP, phantoms.

Images are ``(n, n)`` float64 arrays with row 0 at the top (``y`` up),
sinograms are ``(views, detectors)`` float64 arrays. View ``j`` of a
geometry with ``V`` views sits at angle ``j * pi / V``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels

__all__ = [
    "Geometry",
    "ViewSelector",
    "project",
    "backproject",
    "fbp",
    "fbp_sparse",
    "select",
    "embed",
    "shepp_logan",
    "disk_phantom",
    "disk_sinogram",
    "SHEPP_LOGAN_ELLIPSES",
]


@dataclass(frozen=True)
class Geometry:
    """Parallel-beam scan over ``[0, pi)``.

    Spacings default to unit pixels with detector bins of the same width,
    and enough bins to cover the image diagonal.
    """

    image_size: int
    n_views_full: int
    n_detectors: int | None = None
    detector_spacing: float | None = None
    pixel_spacing: float | None = None

    def __post_init__(self):
        if int(self.image_size) != self.image_size or self.image_size < 2:
            raise ValueError(f"image_size must be an integer >= 2, got {self.image_size}")
        if int(self.n_views_full) != self.n_views_full or self.n_views_full < 2:
            raise ValueError(f"n_views_full must be an integer >= 2, got {self.n_views_full}")
        if self.pixel_spacing is None:
            object.__setattr__(self, "pixel_spacing", 1.0)
        if self.detector_spacing is None:
            object.__setattr__(self, "detector_spacing", float(self.pixel_spacing))
        if self.n_detectors is None:
            object.__setattr__(self, "n_detectors", int(math.ceil(math.sqrt(2.0) * self.image_size)))
        if self.n_detectors < self.image_size:
            raise ValueError("n_detectors must be >= image_size")
        if not (self.pixel_spacing > 0 and self.detector_spacing > 0):
            raise ValueError("spacings must be positive")

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_views_full) * (np.pi / self.n_views_full)

    @property
    def image_shape(self) -> tuple[int, int]:
        return (self.image_size, self.image_size)

    @property
    def sino_shape(self) -> tuple[int, int]:
        return (self.n_views_full, self.n_detectors)


@dataclass(frozen=True)
class ViewSelector:
    """Selection ``P_i`` of every ``rate``-th view starting at ``offset``."""

    rate: int
    full_view_count: int
    offset: int = 0

    def __post_init__(self):
        if self.rate < 1:
            raise ValueError("rate must be a positive integer")
        if not 0 <= self.offset < self.rate:
            raise ValueError(f"offset must lie in [0, {self.rate})")
        if self.full_view_count % self.rate:
            raise ValueError(
                f"rate {self.rate} does not divide view count {self.full_view_count}"
            )

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.offset, self.full_view_count, self.rate)

    @property
    def sparse_view_count(self) -> int:
        return self.full_view_count // self.rate

    def shifted(self, offset: int) -> "ViewSelector":
        return ViewSelector(self.rate, self.full_view_count, offset)


def _as_image(img, geo):
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.shape != geo.image_shape:
        raise ValueError(f"image shape {img.shape} does not match geometry {geo.image_shape}")
    return img


def _as_sino(sino, geo):
    sino = np.ascontiguousarray(sino, dtype=np.float64)
    if sino.shape != geo.sino_shape:
        raise ValueError(f"sinogram shape {sino.shape} does not match geometry {geo.sino_shape}")
    return sino


def project(img, geo: Geometry) -> np.ndarray:
    """Forward Radon transform ``A x`` by Joseph interpolation."""
    img = _as_image(img, geo)
    return kernels.joseph_forward(
        img, geo.angles, geo.n_detectors, geo.pixel_spacing, geo.detector_spacing
    )


def backproject(sino, geo: Geometry) -> np.ndarray:
    """Exact transpose ``A^T z`` of :func:`project` (same ray weights)."""
    sino = _as_sino(sino, geo)
    return kernels.joseph_adjoint(
        sino, geo.angles, geo.image_size, geo.pixel_spacing, geo.detector_spacing
    )


def _ramp_filter(size, kind):
    # Ramp built from the band-limited spatial kernel, as in Kak & Slaney
    n = np.concatenate((np.arange(1, size // 2 + 1, 2), np.arange(size // 2 - 1, 0, -2)))
    h = np.zeros(size)
    h[0] = 0.25
    h[1::2] = -1.0 / (np.pi * n) ** 2
    ramp = 2.0 * np.real(np.fft.fft(h))
    if kind == "hann":
        ramp *= 0.5 * (1.0 + np.cos(2.0 * np.pi * np.fft.fftfreq(size)))
    elif kind != "ram-lak":
        raise ValueError(f"unknown filter {kind!r}; expected 'ram-lak' or 'hann'")
    return ramp


def fbp(sino, geo: Geometry, filter_kind: str = "ram-lak") -> np.ndarray:
    """Filtered back-projection.

    Rows are zero-padded to the next power of two >= ``2 * n_detectors``,
    ramp filtered in frequency space, then back-projected pixel by pixel
    with linear detector interpolation and scaled by ``pi / (2 V)``.
    """
    sino = _as_sino(sino, geo)
    n_views, n_det = sino.shape
    if n_views < 2:
        raise ValueError("fbp needs at least two views")
    size = max(64, 1 << int(math.ceil(math.log2(2 * n_det))))
    ramp = _ramp_filter(size, filter_kind)
    padded = np.zeros((n_views, size))
    padded[:, :n_det] = sino
    filtered = np.real(np.fft.ifft(np.fft.fft(padded, axis=1) * ramp, axis=1))[:, :n_det]
    filtered = np.ascontiguousarray(filtered / geo.detector_spacing)
    img = kernels.pixel_backproject(
        filtered, geo.angles, geo.image_size, geo.pixel_spacing, geo.detector_spacing
    )
    return img * (np.pi / (2.0 * n_views))


def fbp_sparse(s0, sel: ViewSelector, geo: Geometry, filter_kind: str = "ram-lak") -> np.ndarray:
    """FBP using only the measured views (zero-filled, renormalized by ``rate``)."""
    return sel.rate * fbp(embed(s0, sel), geo, filter_kind)


def select(sino, sel: ViewSelector) -> np.ndarray:
    """``P_i z``: the rows ``offset, offset + rate, ...`` of a full sinogram."""
    sino = np.asarray(sino, dtype=np.float64)
    if sino.ndim != 2 or sino.shape[0] != sel.full_view_count:
        raise ValueError(
            f"sinogram has {sino.shape[0] if sino.ndim else 0} views, selector expects "
            f"{sel.full_view_count}"
        )
    return sino[sel.indices].copy()


def embed(sparse, sel: ViewSelector) -> np.ndarray:
    """``P_i^T s``: scatter sparse rows into a zero full-view sinogram."""
    sparse = np.asarray(sparse, dtype=np.float64)
    if sparse.ndim != 2 or sparse.shape[0] * sel.rate != sel.full_view_count:
        raise ValueError(
            f"sparse sinogram with shape {sparse.shape} does not fit selector "
            f"(rate {sel.rate}, {sel.full_view_count} views)"
        )
    out = np.zeros((sel.full_view_count, sparse.shape[1]))
    out[sel.indices] = sparse
    return out


# (intensity, semi-axis x, semi-axis y, centre x, centre y, rotation in degrees)
SHEPP_LOGAN_ELLIPSES = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def _pixel_centres(n):
    # normalized coordinates in [-1, 1], y pointing up
    t = (np.arange(n) - (n - 1) / 2.0) * (2.0 / n)
    return np.meshgrid(t, -t)


def shepp_logan(n: int) -> np.ndarray:
    """Modified (Toft) Shepp-Logan phantom sampled at pixel centres, clamped to [0, 1]."""
    if n < 2:
        raise ValueError("phantom size must be >= 2")
    x, y = _pixel_centres(n)
    img = np.zeros((n, n))
    for value, a, b, x0, y0, deg in SHEPP_LOGAN_ELLIPSES:
        phi = np.deg2rad(deg)
        dx, dy = x - x0, y - y0
        xr = dx * np.cos(phi) + dy * np.sin(phi)
        yr = -dx * np.sin(phi) + dy * np.cos(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    return np.clip(img, 0.0, 1.0)


def disk_phantom(n: int, radius: float = 0.5, value: float = 1.0) -> np.ndarray:
    """Centred disk of constant ``value``; ``radius`` in normalized units."""
    if n < 2:
        raise ValueError("phantom size must be >= 2")
    x, y = _pixel_centres(n)
    return np.where(x**2 + y**2 <= radius**2, float(value), 0.0)


def disk_sinogram(geo: Geometry, radius: float = 0.5, value: float = 1.0) -> np.ndarray:
    """Exact line integrals of a centred disk; every view is the same row.

    ``radius`` is normalized like :func:`disk_phantom` (1 = half the image width).
    """
    r = radius * geo.image_size * geo.pixel_spacing / 2.0
    u = (np.arange(geo.n_detectors) - (geo.n_detectors - 1) / 2.0) * geo.detector_spacing
    row = 2.0 * value * np.sqrt(np.clip(r * r - u * u, 0.0, None))
    return np.tile(row, (geo.n_views_full, 1))
