"""Pure-numpy fallbacks for the hot kernels.

Same contracts as ._numba; used when the JIT lane is disabled. The match
kernel accumulates shifted slices instead of looping placements, which keeps
it usable for the windowed problem sizes the filter produces.
"""

import numpy as np


def match_direct(prior, tvals, tmask, tsum, n):
    th, tw = tvals.shape
    oh = prior.shape[0] - th + 1
    ow = prior.shape[1] - tw + 1
    s_ti = np.zeros((oh, ow))
    s_i = np.zeros((oh, ow))
    for ty, tx in zip(*np.nonzero(tmask)):
        patch = prior[ty : ty + oh, tx : tx + ow]
        v = tvals[ty, tx]
        if v != 0.0:
            s_ti += v * patch
        s_i += patch
    return s_ti - tsum * s_i / n


def visible_mask(field, origin_x, origin_y, res, sx, sy, alt, txs, tys, ths, step):
    k = txs.shape[0]
    ny, nx = field.shape
    dx = txs - sx
    dy = tys - sy
    dist = np.hypot(dx, dy)
    nmax = int(np.floor(dist.max() / step)) if k else 0
    out = np.ones(k, dtype=bool)
    for s in range(1, nmax + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dist > 0, s * step / dist, 2.0)
        active = t < 1.0
        if not active.any():
            break
        px = sx + dx * t
        py = sy + dy * t
        ci = np.floor((px - origin_x) / res).astype(np.int64)
        cj = np.floor((py - origin_y) / res).astype(np.int64)
        inside = (ci >= 0) & (ci < nx) & (cj >= 0) & (cj < ny)
        h = np.zeros(k)
        idx = inside & active
        h[idx] = field[cj[idx], ci[idx]]
        line_h = alt + (ths - alt) * t
        out &= ~(active & (h > line_h))
    return out


def rasterize_max(xs, ys, hs, x0, y0, res, width, height):
    vals = np.zeros((height, width))
    seen = np.zeros((height, width), dtype=bool)
    ci = np.floor((xs - x0) / res).astype(np.int64)
    cj = np.floor((ys - y0) / res).astype(np.int64)
    ok = (ci >= 0) & (ci < width) & (cj >= 0) & (cj < height)
    ci, cj, h = ci[ok], cj[ok], hs[ok]
    flat = cj * width + ci
    acc = np.full(width * height, -np.inf)
    np.maximum.at(acc, flat, h)
    seen_flat = acc > -np.inf
    vals_flat = np.where(seen_flat, acc, 0.0)
    return vals_flat.reshape(height, width), seen_flat.reshape(height, width)
