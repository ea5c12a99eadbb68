"""Pure-numpy versions of the ray-tracing kernels.

Used when the compiled ``_kernels`` extension is unavailable, or when
``LAMA_CT_PURE=1`` is set. Arithmetic mirrors the Cython source line for
line so the two backends agree to rounding in the final summation.
"""

import numpy as np


def _view_rays(theta, n, n_det, pixel_spacing, det_spacing):
    """Sample positions of every ray of one view along its major axis.

    Returns ``(steep, length, lines, frac)`` where ``lines`` indexes the
    rows (steep views) or columns (flat views) the rays step through and
    ``frac`` is the fractional pixel coordinate along the other axis,
    shaped ``(n_det, n)``.
    """
    c = np.cos(theta)
    s = np.sin(theta)
    c0 = (n - 1) / 2.0
    d0 = (n_det - 1) / 2.0
    u = (np.arange(n_det) - d0) * det_spacing
    lines = np.arange(n)
    steep = abs(c) >= abs(s)
    if steep:
        length = pixel_spacing / abs(c)
        slope = s / c
        base = u / (c * pixel_spacing) - c0 * slope + c0
    else:
        length = pixel_spacing / abs(s)
        slope = c / s
        base = c0 - u / (s * pixel_spacing) - c0 * slope
    frac = base[:, None] + lines[None, :] * slope
    return steep, length, lines, frac


def _split(frac, n):
    i0 = np.floor(frac).astype(np.int64)
    w1 = frac - i0
    w0 = 1.0 - w1
    i1 = i0 + 1
    ok0 = (i0 >= 0) & (i0 < n)
    ok1 = (i1 >= 0) & (i1 < n)
    return i0, i1, np.where(ok0, w0, 0.0), np.where(ok1, w1, 0.0), ok0, ok1


def joseph_forward(image, thetas, n_det, pixel_spacing, det_spacing):
    n = image.shape[0]
    out = np.zeros((len(thetas), n_det))
    for v, theta in enumerate(thetas):
        steep, length, lines, frac = _view_rays(theta, n, n_det, pixel_spacing, det_spacing)
        i0, i1, w0, w1, ok0, ok1 = _split(frac, n)
        i0 = np.where(ok0, i0, 0)
        i1 = np.where(ok1, i1, 0)
        rows = np.broadcast_to(lines[None, :], frac.shape)
        if steep:
            vals = w0 * image[rows, i0] + w1 * image[rows, i1]
        else:
            vals = w0 * image[i0, rows] + w1 * image[i1, rows]
        out[v] = length * vals.sum(axis=1)
    return out


def joseph_adjoint(sino, thetas, n, pixel_spacing, det_spacing):
    n_det = sino.shape[1]
    acc = np.zeros(n * n)
    for v, theta in enumerate(thetas):
        steep, length, lines, frac = _view_rays(theta, n, n_det, pixel_spacing, det_spacing)
        i0, i1, w0, w1, ok0, ok1 = _split(frac, n)
        i0 = np.where(ok0, i0, 0)
        i1 = np.where(ok1, i1, 0)
        rows = np.broadcast_to(lines[None, :], frac.shape)
        val = length * sino[v][:, None]
        if steep:
            idx0 = rows * n + i0
            idx1 = rows * n + i1
        else:
            idx0 = i0 * n + rows
            idx1 = i1 * n + rows
        acc += np.bincount(idx0.ravel(), weights=(w0 * val).ravel(), minlength=n * n)
        acc += np.bincount(idx1.ravel(), weights=(w1 * val).ravel(), minlength=n * n)
    return acc.reshape(n, n)


def pixel_backproject(sino, thetas, n, pixel_spacing, det_spacing):
    """Pixel-driven linear-interpolation back-projection (unscaled)."""
    n_det = sino.shape[1]
    c0 = (n - 1) / 2.0
    d0 = (n_det - 1) / 2.0
    xs = (np.arange(n) - c0) * pixel_spacing
    ys = (c0 - np.arange(n)) * pixel_spacing
    out = np.zeros((n, n))
    for v, theta in enumerate(thetas):
        c = np.cos(theta)
        s = np.sin(theta)
        t = xs[None, :] * c + ys[:, None] * s
        fk = t / det_spacing + d0
        k0 = np.floor(fk).astype(np.int64)
        w1 = fk - k0
        w0 = 1.0 - w1
        k1 = k0 + 1
        ok0 = (k0 >= 0) & (k0 < n_det)
        ok1 = (k1 >= 0) & (k1 < n_det)
        row = sino[v]
        out += np.where(ok0, w0 * row[np.where(ok0, k0, 0)], 0.0) + np.where(
            ok1, w1 * row[np.where(ok1, k1, 0)], 0.0
        )
    return out
