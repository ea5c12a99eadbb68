# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ray-tracing kernels (Joseph projector, its transpose, FBP back-projection).

Every function here has a numpy twin in ``_kernels_py`` with identical
per-sample arithmetic.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, floor, fabs

cnp.import_array()


cdef inline void _ray_span(double base, double slope, Py_ssize_t n,
                           Py_ssize_t* lo, Py_ssize_t* hi) noexcept nogil:
    # rows j with -1 < base + j*slope < n, widened by one row each side
    cdef double a, b
    if slope == 0.0:
        if base > -1.0 and base < n:
            lo[0] = 0
            hi[0] = n
        else:
            lo[0] = 0
            hi[0] = 0
        return
    a = (-1.0 - base) / slope
    b = (n - base) / slope
    if a > b:
        a, b = b, a
    lo[0] = <Py_ssize_t>floor(a) - 1
    hi[0] = <Py_ssize_t>floor(b) + 2
    if lo[0] < 0:
        lo[0] = 0
    if hi[0] > n:
        hi[0] = n
    if hi[0] < lo[0]:
        hi[0] = lo[0]


def joseph_forward(double[:, ::1] image, double[::1] thetas, Py_ssize_t n_det,
                   double pixel_spacing, double det_spacing):
    cdef Py_ssize_t n = image.shape[0]
    cdef Py_ssize_t n_views = thetas.shape[0]
    out_arr = np.zeros((n_views, n_det))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t v, k, j, i0, i1, lo, hi
    cdef double c, s, length, u, slope, base, frac, w0, w1, acc
    cdef bint steep
    cdef double c0 = (n - 1) / 2.0
    cdef double d0 = (n_det - 1) / 2.0
    with nogil:
        for v in range(n_views):
            c = cos(thetas[v])
            s = sin(thetas[v])
            steep = fabs(c) >= fabs(s)
            if steep:
                length = pixel_spacing / fabs(c)
                slope = s / c
            else:
                length = pixel_spacing / fabs(s)
                slope = c / s
            for k in range(n_det):
                u = (k - d0) * det_spacing
                if steep:
                    base = u / (c * pixel_spacing) - c0 * slope + c0
                else:
                    base = c0 - u / (s * pixel_spacing) - c0 * slope
                _ray_span(base, slope, n, &lo, &hi)
                acc = 0.0
                for j in range(lo, hi):
                    frac = base + j * slope
                    i0 = <Py_ssize_t>floor(frac)
                    i1 = i0 + 1
                    if i1 < 0 or i0 >= n:
                        continue
                    w1 = frac - i0
                    w0 = 1.0 - w1
                    if steep:
                        if i0 >= 0:
                            acc = acc + w0 * image[j, i0]
                        if i1 < n:
                            acc = acc + w1 * image[j, i1]
                    else:
                        if i0 >= 0:
                            acc = acc + w0 * image[i0, j]
                        if i1 < n:
                            acc = acc + w1 * image[i1, j]
                out[v, k] = length * acc
    return out_arr


def joseph_adjoint(double[:, ::1] sino, double[::1] thetas, Py_ssize_t n,
                   double pixel_spacing, double det_spacing):
    cdef Py_ssize_t n_views = sino.shape[0]
    cdef Py_ssize_t n_det = sino.shape[1]
    out_arr = np.zeros((n, n))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t v, k, j, i0, i1, lo, hi
    cdef double c, s, length, u, slope, base, frac, w0, w1, val
    cdef bint steep
    cdef double c0 = (n - 1) / 2.0
    cdef double d0 = (n_det - 1) / 2.0
    with nogil:
        for v in range(n_views):
            c = cos(thetas[v])
            s = sin(thetas[v])
            steep = fabs(c) >= fabs(s)
            if steep:
                length = pixel_spacing / fabs(c)
                slope = s / c
            else:
                length = pixel_spacing / fabs(s)
                slope = c / s
            for k in range(n_det):
                val = length * sino[v, k]
                if val == 0.0:
                    continue
                u = (k - d0) * det_spacing
                if steep:
                    base = u / (c * pixel_spacing) - c0 * slope + c0
                else:
                    base = c0 - u / (s * pixel_spacing) - c0 * slope
                _ray_span(base, slope, n, &lo, &hi)
                for j in range(lo, hi):
                    frac = base + j * slope
                    i0 = <Py_ssize_t>floor(frac)
                    i1 = i0 + 1
                    if i1 < 0 or i0 >= n:
                        continue
                    w1 = frac - i0
                    w0 = 1.0 - w1
                    if steep:
                        if i0 >= 0:
                            out[j, i0] += w0 * val
                        if i1 < n:
                            out[j, i1] += w1 * val
                    else:
                        if i0 >= 0:
                            out[i0, j] += w0 * val
                        if i1 < n:
                            out[i1, j] += w1 * val
    return out_arr


def pixel_backproject(double[:, ::1] sino, double[::1] thetas, Py_ssize_t n,
                      double pixel_spacing, double det_spacing):
    cdef Py_ssize_t n_views = sino.shape[0]
    cdef Py_ssize_t n_det = sino.shape[1]
    out_arr = np.zeros((n, n))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t v, r, col, k0, k1
    cdef double c, s, x, y, fk, w0, w1, acc
    cdef double c0 = (n - 1) / 2.0
    cdef double d0 = (n_det - 1) / 2.0
    with nogil:
        for v in range(n_views):
            c = cos(thetas[v])
            s = sin(thetas[v])
            for r in range(n):
                y = (c0 - r) * pixel_spacing
                for col in range(n):
                    x = (col - c0) * pixel_spacing
                    fk = (x * c + y * s) / det_spacing + d0
                    k0 = <Py_ssize_t>floor(fk)
                    k1 = k0 + 1
                    w1 = fk - k0
                    w0 = 1.0 - w1
                    acc = 0.0
                    if k0 >= 0 and k0 < n_det:
                        acc = w0 * sino[v, k0]
                    if k1 >= 0 and k1 < n_det:
                        acc = acc + w1 * sino[v, k1]
                    out[r, col] += acc
    return out_arr
