"""numba @njit implementations of the hot inner loops."""

import numpy as np
from numba import njit


@njit(cache=True)
def match_direct(prior, tvals, tmask, tsum, n):
    """Masked zero-mean correlation of a template against every placement.

    For each placement (y, x) where the template fully overlaps the prior,
    accumulates sum(T*I_patch) and sum(I_patch) over observed template cells
    and returns sum(T*I) - tsum * sum(I) / n, which equals the zero-mean
    product sum with the patch mean taken over the observed cells only.
    """
    th, tw = tvals.shape
    oh = prior.shape[0] - th + 1
    ow = prior.shape[1] - tw + 1
    out = np.empty((oh, ow))
    for y in range(oh):
        for x in range(ow):
            s_ti = 0.0
            s_i = 0.0
            for ty in range(th):
                for tx in range(tw):
                    if tmask[ty, tx]:
                        v = prior[y + ty, x + tx]
                        s_ti += tvals[ty, tx] * v
                        s_i += v
            out[y, x] = s_ti - tsum * s_i / n
    return out


@njit(cache=True)
def visible_mask(field, origin_x, origin_y, res, sx, sy, alt, txs, tys, ths, step):
    """Line-of-sight test from (sx, sy, alt) to each target (tx, ty, th).

    The sight line is sampled every `step` meters; a target is hidden when
    the height field rises above the interpolated line height at any interior
    sample. Samples falling outside the field count as height 0.
    """
    k = txs.shape[0]
    ny, nx = field.shape
    out = np.empty(k, dtype=np.bool_)
    for i in range(k):
        dx = txs[i] - sx
        dy = tys[i] - sy
        dist = np.sqrt(dx * dx + dy * dy)
        vis = True
        if dist > step:
            nsteps = int(dist / step)
            for s in range(1, nsteps + 1):
                t = s * step / dist
                if t >= 1.0:
                    break
                px = sx + dx * t
                py = sy + dy * t
                ci = int(np.floor((px - origin_x) / res))
                cj = int(np.floor((py - origin_y) / res))
                if ci < 0 or ci >= nx or cj < 0 or cj >= ny:
                    h = 0.0
                else:
                    h = field[cj, ci]
                line_h = alt + (ths[i] - alt) * t
                if h > line_h:
                    vis = False
                    break
        out[i] = vis
    return out


@njit(cache=True)
def rasterize_max(xs, ys, hs, x0, y0, res, width, height):
    """Per-cell max of point heights over half-open bins of size `res`."""
    vals = np.zeros((height, width))
    seen = np.zeros((height, width), dtype=np.bool_)
    for i in range(xs.shape[0]):
        ci = int(np.floor((xs[i] - x0) / res))
        cj = int(np.floor((ys[i] - y0) / res))
        if 0 <= ci < width and 0 <= cj < height:
            if not seen[cj, ci] or hs[i] > vals[cj, ci]:
                vals[cj, ci] = hs[i]
            seen[cj, ci] = True
    return vals, seen
