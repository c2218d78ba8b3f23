# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pixel kernels.

Arithmetic mirrors ``_fallback`` operation for operation so both backends
return bit-identical arrays.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, floor

cnp.import_array()

cdef double EDGE_EPS = 1e-9


def rasterize(double[::1] xs, double[::1] ys, double[::1] qs, long long[:, ::1] tris,
              int height, int width, double background):
    """Z-buffer a triangle soup; returns float64 depth (height, width).

    ``xs``/``ys`` are pixel coordinates (pixel (r, c) has its center at
    (c + 0.5, r + 0.5)); ``qs`` are inverse depths, interpolated linearly
    in screen space.
    """
    zbuf_arr = np.full((height, width), background, dtype=np.float64)
    cdef double[:, ::1] zbuf = zbuf_arr
    cdef Py_ssize_t t, ntri = tris.shape[0]
    cdef long long i0, i1, i2
    cdef double x0, x1, x2, y0, y1, y2, q0, q1, q2, area
    cdef double w0, w1, w2, q, z, cx, cy, lo, hi
    cdef int px, py, xmin, xmax, ymin, ymax
    with nogil:
        for t in range(ntri):
            i0 = tris[t, 0]
            i1 = tris[t, 1]
            i2 = tris[t, 2]
            x0 = xs[i0]; x1 = xs[i1]; x2 = xs[i2]
            y0 = ys[i0]; y1 = ys[i1]; y2 = ys[i2]
            q0 = qs[i0]; q1 = qs[i1]; q2 = qs[i2]
            area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            if area == 0.0:
                continue
            lo = min(x0, min(x1, x2))
            hi = max(x0, max(x1, x2))
            lo = ceil(lo - 0.5)
            hi = floor(hi - 0.5)
            if lo < 0.0:
                lo = 0.0
            if hi > width - 1:
                hi = width - 1
            if lo > hi:
                continue
            xmin = <int>lo
            xmax = <int>hi
            lo = min(y0, min(y1, y2))
            hi = max(y0, max(y1, y2))
            lo = ceil(lo - 0.5)
            hi = floor(hi - 0.5)
            if lo < 0.0:
                lo = 0.0
            if hi > height - 1:
                hi = height - 1
            if lo > hi:
                continue
            ymin = <int>lo
            ymax = <int>hi
            for py in range(ymin, ymax + 1):
                cy = py + 0.5
                for px in range(xmin, xmax + 1):
                    cx = px + 0.5
                    w0 = ((x1 - cx) * (y2 - cy) - (x2 - cx) * (y1 - cy)) / area
                    w1 = ((x2 - cx) * (y0 - cy) - (x0 - cx) * (y2 - cy)) / area
                    w2 = ((x0 - cx) * (y1 - cy) - (x1 - cx) * (y0 - cy)) / area
                    if w0 >= -EDGE_EPS and w1 >= -EDGE_EPS and w2 >= -EDGE_EPS:
                        q = w0 * q0 + w1 * q1 + w2 * q2
                        if q > 0.0:
                            z = 1.0 / q
                            if z < zbuf[py, px]:
                                zbuf[py, px] = z
    return zbuf_arr


def permute(float[:, ::1] src, double[:, ::1] mask, double[:, ::1] gate,
            long long[:, ::1] pick, long long[::1] off_y, long long[::1] off_x, bint wrap):
    """Replace gated pixels by the source pixel at a drawn disk offset."""
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    out_arr = np.array(src, dtype=np.float32, copy=True)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, qy, qx
    cdef long long k
    cdef double m
    with nogil:
        for y in range(h):
            for x in range(w):
                m = mask[y, x]
                if m > 0.0 and gate[y, x] < m:
                    k = pick[y, x]
                    qy = y + off_y[k]
                    qx = x + off_x[k]
                    if wrap:
                        qy = qy % h
                        qx = qx % w
                        if qy < 0:
                            qy = qy + h
                        if qx < 0:
                            qx = qx + w
                    else:
                        if qy < 0:
                            qy = 0
                        elif qy >= h:
                            qy = h - 1
                        if qx < 0:
                            qx = 0
                        elif qx >= w:
                            qx = w - 1
                    out[y, x] = src[qy, qx]
    return out_arr
