"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures, same floating-point operation order, same results.
"""

from __future__ import annotations

import numpy as np

EDGE_EPS = 1e-9
# candidate pixels evaluated per vectorised batch
_BATCH_PIXELS = 1 << 21


def _bbox(lo: np.ndarray, hi: np.ndarray, limit: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.maximum(np.ceil(lo - 0.5), 0.0)
    hi = np.minimum(np.floor(hi - 0.5), float(limit - 1))
    return lo, hi


def rasterize(xs, ys, qs, tris, height, width, background):
    zbuf = np.full(height * width, background, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    qs = np.asarray(qs, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    if tris.shape[0] == 0:
        return zbuf.reshape(height, width)

    x0, x1, x2 = xs[tris[:, 0]], xs[tris[:, 1]], xs[tris[:, 2]]
    y0, y1, y2 = ys[tris[:, 0]], ys[tris[:, 1]], ys[tris[:, 2]]
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    xmin, xmax = _bbox(np.minimum(x0, np.minimum(x1, x2)), np.maximum(x0, np.maximum(x1, x2)), width)
    ymin, ymax = _bbox(np.minimum(y0, np.minimum(y1, y2)), np.maximum(y0, np.maximum(y1, y2)), height)
    keep = (area != 0.0) & (xmin <= xmax) & (ymin <= ymax)
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return zbuf.reshape(height, width)

    bw = (xmax[idx] - xmin[idx]).astype(np.int64) + 1
    bh = (ymax[idx] - ymin[idx]).astype(np.int64) + 1
    order = np.argsort(bw * bh, kind="stable")
    idx, bw, bh = idx[order], bw[order], bh[order]

    start = 0
    while start < idx.size:
        # grow the batch while the padded candidate grid stays bounded
        stop = start + 1
        cw, ch = bw[start], bh[start]
        while stop < idx.size:
            nw, nh = max(cw, bw[stop]), max(ch, bh[stop])
            if (stop + 1 - start) * nw * nh > _BATCH_PIXELS:
                break
            cw, ch = nw, nh
            stop += 1
        sel = idx[start:stop]
        _raster_batch(zbuf, sel, int(cw), int(ch), x0, x1, x2, y0, y1, y2, area,
                      xmin, xmax, ymin, ymax, qs, tris, width)
        start = stop
    return zbuf.reshape(height, width)


def _raster_batch(zbuf, sel, cw, ch, x0, x1, x2, y0, y1, y2, area,
                  xmin, xmax, ymin, ymax, qs, tris, width):
    px = xmin[sel][:, None, None] + np.arange(cw, dtype=np.float64)[None, None, :]
    py = ymin[sel][:, None, None] + np.arange(ch, dtype=np.float64)[None, :, None]
    inside = (px <= xmax[sel][:, None, None]) & (py <= ymax[sel][:, None, None])
    cx = px + 0.5
    cy = py + 0.5
    a = area[sel][:, None, None]
    X0, X1, X2 = (v[sel][:, None, None] for v in (x0, x1, x2))
    Y0, Y1, Y2 = (v[sel][:, None, None] for v in (y0, y1, y2))
    w0 = ((X1 - cx) * (Y2 - cy) - (X2 - cx) * (Y1 - cy)) / a
    w1 = ((X2 - cx) * (Y0 - cy) - (X0 - cx) * (Y2 - cy)) / a
    w2 = ((X0 - cx) * (Y1 - cy) - (X1 - cx) * (Y0 - cy)) / a
    hit = inside & (w0 >= -EDGE_EPS) & (w1 >= -EDGE_EPS) & (w2 >= -EDGE_EPS)
    t = tris[sel]
    Q0, Q1, Q2 = (qs[t[:, j]][:, None, None] for j in range(3))
    q = w0 * Q0 + w1 * Q1 + w2 * Q2
    hit &= q > 0.0
    if not hit.any():
        return
    with np.errstate(divide="ignore"):
        z = 1.0 / q[hit]
    flat = (np.broadcast_to(py, hit.shape)[hit].astype(np.int64) * width
            + np.broadcast_to(px, hit.shape)[hit].astype(np.int64))
    np.minimum.at(zbuf, flat, z)


def permute(src, mask, gate, pick, off_y, off_x, wrap):
    src = np.asarray(src, dtype=np.float32)
    h, w = src.shape
    hit = (mask > 0.0) & (gate < mask)
    ys, xs = np.nonzero(hit)
    k = pick[ys, xs]
    qy = ys + off_y[k]
    qx = xs + off_x[k]
    if wrap:
        qy %= h
        qx %= w
    else:
        np.clip(qy, 0, h - 1, out=qy)
        np.clip(qx, 0, w - 1, out=qx)
    out = src.copy()
    out[ys, xs] = src[qy, qx]
    return out
