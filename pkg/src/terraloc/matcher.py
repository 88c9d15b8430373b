"""Registration of a local edge map against prior edges.

The score for placing the template T over the prior I at offset (x, y) is the
zero-mean product sum over observed template cells:

    R(x, y) = sum_M (T - mean_M(T)) * (I_patch - mean_M(I_patch))

where M is the set of observed template cells, mean_M(T) is computed once and
the patch mean once per placement. Unobserved template cells are excluded from
the sums and from both means, which reduces to the plain zero-mean correlation
when the template is fully observed. Placements must fit entirely inside the
prior (no padding); the resulting map is georeferenced to vehicle positions,
i.e. scores[cell] rates the hypothesis "the vehicle is in this prior cell".

Two routes compute R behind one contract: a spatial-domain kernel (JIT lane,
see terraloc._kernels) and an FFT decomposition

    R = corr(I, T*M) - sum(T*M) * corr(I, M) / |M|

used for large problems. Both are validated against a brute-force oracle in
the tests (spatial to 1e-9, FFT to 1e-6).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import correlate1d

from . import _kernels
from .geodata import DEFAULT_EDGE_THRESHOLD_M, EdgeMap, HeightGrid
from .geodata import _write_grid_file  # debugging export shares the writer
from .geodata import binarize_edges, gradient_magnitude, rotate_to_north

__all__ = [
    "SCORE_FLOOR",
    "DEFAULT_BLUR_SIGMA",
    "SimilarityMap",
    "match_template",
    "blur",
    "normalize",
    "localize_once",
    "save_similarity",
]

SCORE_FLOOR = 1e-3
DEFAULT_BLUR_SIGMA = 2.0

# Spatial route while placements * observed template cells stays below this;
# FFT above. ~4 ms of JIT kernel time at the limit.
_DIRECT_OPS_LIMIT = 3.0e7


@dataclass
class SimilarityMap:
    """Match scores over prior cells; valid where a full placement fits."""

    origin_xy: tuple[float, float]
    resolution: float
    scores: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.scores.shape != self.valid.shape:
            raise ValueError("valid mask shape does not match scores")
        if self.valid.any() and not np.all(np.isfinite(self.scores[self.valid])):
            raise ValueError("scores must be finite on valid cells")

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    def argmax_xy(self) -> tuple[float, float]:
        """World position of the best-scoring valid cell center."""
        masked = np.where(self.valid, self.scores, -np.inf)
        r, c = np.unravel_index(int(np.argmax(masked)), masked.shape)
        ox, oy = self.origin_xy
        return (float(ox + (c + 0.5) * self.resolution), float(oy + (r + 0.5) * self.resolution))

    def lookup(self, x, y):
        """Score of the cell containing each point; SCORE_FLOOR outside."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        ox, oy = self.origin_xy
        ci = np.floor((x - ox) / self.resolution).astype(np.int64)
        cj = np.floor((y - oy) / self.resolution).astype(np.int64)
        inside = (ci >= 0) & (ci < self.width) & (cj >= 0) & (cj < self.height)
        out = np.full(np.broadcast(x, y).shape, SCORE_FLOOR)
        out[inside] = self.scores[cj[inside], ci[inside]]
        return out


def _match_fft(prior: np.ndarray, tvals: np.ndarray, tmask: np.ndarray, tsum: float, n: float):
    th, tw = tvals.shape
    oh = prior.shape[0] - th + 1
    ow = prior.shape[1] - tw + 1
    shape = (
        sfft.next_fast_len(prior.shape[0], True),
        sfft.next_fast_len(prior.shape[1], True),
    )
    f_prior = sfft.rfft2(prior, shape)
    k1 = sfft.rfft2(tvals[::-1, ::-1], shape)
    k2 = sfft.rfft2(tmask[::-1, ::-1].astype(np.float64), shape)
    s_ti = sfft.irfft2(f_prior * k1, shape)[th - 1 : th - 1 + oh, tw - 1 : tw - 1 + ow]
    s_i = sfft.irfft2(f_prior * k2, shape)[th - 1 : th - 1 + oh, tw - 1 : tw - 1 + ow]
    return s_ti - tsum * s_i / n


def match_template(template: EdgeMap, prior: EdgeMap, method: str = "auto") -> SimilarityMap:
    """Score every full placement of the local edge map inside the prior.

    Args:
        template: local, north-aligned binary edge map (nodata excluded).
        prior: prior binary edge map at the same resolution.
        method: "direct" (spatial), "fft", or "auto" (size-based choice).

    Returns a SimilarityMap on the prior's georeference. An all-nodata
    template carries no evidence and yields a constant (uniform) map.
    """
    if method not in ("auto", "direct", "fft"):
        raise ValueError(f"unknown method {method!r}")
    if not math.isclose(template.resolution, prior.resolution, rel_tol=1e-9):
        raise ValueError("template and prior resolutions differ")
    if template.width > prior.width or template.height > prior.height:
        raise ValueError(
            f"template {template.width}x{template.height} does not fit inside "
            f"prior {prior.width}x{prior.height}"
        )

    tmask = ~template.nodata
    tvals = np.where(tmask, template.cells.astype(np.float64), 0.0)
    n = float(tmask.sum())
    th, tw = tvals.shape
    oh = prior.height - th + 1
    ow = prior.width - tw + 1

    if n == 0.0:
        raw = np.zeros((oh, ow))
    else:
        prior_f = prior.cells.astype(np.float64)
        tsum = float(tvals.sum())
        if method == "auto":
            method = "direct" if oh * ow * n <= _DIRECT_OPS_LIMIT else "fft"
        if method == "direct":
            raw = _kernels.match_direct(prior_f, tvals, tmask, tsum, n)
        else:
            raw = _match_fft(prior_f, tvals, tmask, tsum, n)

    # Re-center: placement (y, x) puts the template center over prior cell
    # (y + th//2, x + tw//2), so index scores by the cell under the center.
    scores = np.zeros((prior.height, prior.width))
    valid = np.zeros((prior.height, prior.width), dtype=bool)
    hy, hx = th // 2, tw // 2
    scores[hy : hy + oh, hx : hx + ow] = raw
    valid[hy : hy + oh, hx : hx + ow] = True
    return SimilarityMap(prior.origin_xy, prior.resolution, scores, valid)


def blur(sim: SimilarityMap, sigma: float = DEFAULT_BLUR_SIGMA) -> SimilarityMap:
    """Smooth valid scores with a truncated Gaussian (radius ceil(3*sigma)).

    Kernel weight that would fall on invalid cells stays on the source cell,
    so constants pass through unchanged and the total mass of the valid region
    is preserved exactly; in the interior this is plain Gaussian convolution.
    sigma 0 is the identity.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return SimilarityMap(sim.origin_xy, sim.resolution, sim.scores.copy(), sim.valid.copy())

    radius = int(math.ceil(3 * sigma))
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    k /= k.sum()

    v = sim.valid.astype(np.float64)
    sv = np.where(sim.valid, sim.scores, 0.0)

    def _conv2(a):
        out = correlate1d(a, k, axis=0, mode="constant", cval=0.0)
        return correlate1d(out, k, axis=1, mode="constant", cval=0.0)

    spread = _conv2(sv)
    weight = _conv2(v)
    out = np.where(sim.valid, spread + sim.scores * (1.0 - weight), sim.scores)
    return SimilarityMap(sim.origin_xy, sim.resolution, out, sim.valid.copy())


def normalize(sim: SimilarityMap) -> SimilarityMap:
    """Min-max rescale valid scores to [0, 1], floored at SCORE_FLOOR.

    The floor keeps every position hypothesis alive (a floored cell is 1000x
    less likely than the best cell, never impossible). A constant map has no
    ordering information and normalizes to uniform 1. Invalid cells get the
    floor value so lookups anywhere are well defined.
    """
    if not sim.valid.any():
        raise ValueError("similarity map has no valid cells")
    vals = sim.scores[sim.valid]
    lo = float(vals.min())
    hi = float(vals.max())
    if hi > lo:
        scaled = (sim.scores - lo) / (hi - lo)
    else:
        scaled = np.ones_like(sim.scores)
    out = np.where(sim.valid, np.maximum(scaled, SCORE_FLOOR), SCORE_FLOOR)
    return SimilarityMap(sim.origin_xy, sim.resolution, out, sim.valid.copy())


def localize_once(
    local: HeightGrid,
    prior_edges: EdgeMap,
    compass: float,
    threshold: float = DEFAULT_EDGE_THRESHOLD_M,
    sigma: float = DEFAULT_BLUR_SIGMA,
    method: str = "auto",
) -> SimilarityMap:
    """Full single-shot pipeline from a raw local height grid to a normalized
    similarity distribution over prior cells: align to heading zero, take
    gradients, binarize, match, smooth, normalize."""
    aligned = rotate_to_north(local, compass)
    edges = binarize_edges(gradient_magnitude(aligned), threshold)
    sim = match_template(edges, prior_edges, method=method)
    return normalize(blur(sim, sigma))


def save_similarity(sim: SimilarityMap, path) -> None:
    """Export a similarity map in the grid file format (debugging aid)."""
    _write_grid_file(path, sim.scores, ~sim.valid, sim.origin_xy, sim.resolution)
