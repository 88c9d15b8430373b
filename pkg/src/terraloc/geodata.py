"""Height rasters, gradients, binary edge maps, and grid file I/O.

Conventions used across the package:

* World frame: x east, y north, meters. Headings are CCW radians, 0 along +x.
* Grids are row-major ``cells[row, col]`` with row = y index (row 0 is the
  southernmost row) and col = x index. Cell (r, c) covers the half-open square
  ``[origin_x + c*res, origin_x + (c+1)*res) x [origin_y + r*res, ...)``.
* ``nodata[r, c]`` is True where the cell was never observed. Nodata cells hold
  0.0 in ``cells`` but never contribute to any statistic.

Values are treated as immutable after construction; operations return new
grids and are safe to call from multiple threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

__all__ = [
    "GridFormatError",
    "HeightGrid",
    "EdgeMap",
    "PointSample",
    "rasterize_points",
    "gradient_magnitude",
    "binarize_edges",
    "rotate_to_north",
    "load_dem",
    "save_dem",
]

DEFAULT_RESOLUTION_M = 1.0
DEFAULT_EDGE_THRESHOLD_M = 5.0
NODATA_SENTINEL = -9999.0


class GridFormatError(ValueError):
    """Raised when a grid file cannot be parsed; message names the line."""


@dataclass
class PointSample:
    """A single height sample: position in meters, height above terrain."""

    x: float
    y: float
    h: float


@dataclass
class HeightGrid:
    """Georeferenced raster of heights above terrain with a nodata mask."""

    origin_xy: tuple[float, float]
    resolution: float
    cells: np.ndarray
    nodata: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float64)
        if self.nodata is None:
            self.nodata = np.zeros(self.cells.shape, dtype=bool)
        self.nodata = np.asarray(self.nodata, dtype=bool)
        if self.resolution <= 0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        if self.cells.ndim != 2 or self.cells.shape[0] < 1 or self.cells.shape[1] < 1:
            raise ValueError(f"grid must be 2-D with at least one cell, got shape {self.cells.shape}")
        if self.nodata.shape != self.cells.shape:
            raise ValueError("nodata mask shape does not match cells")
        observed = self.cells[~self.nodata]
        if observed.size and (not np.all(np.isfinite(observed)) or observed.min() < 0):
            raise ValueError("observed cells must be finite and >= 0")

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        """(col, row) of the cell containing the point; may be out of range."""
        ox, oy = self.origin_xy
        return (
            int(math.floor((x - ox) / self.resolution)),
            int(math.floor((y - oy) / self.resolution)),
        )

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        ox, oy = self.origin_xy
        return (ox + (col + 0.5) * self.resolution, oy + (row + 0.5) * self.resolution)


@dataclass
class EdgeMap:
    """Binary raster marking strong height gradients (1 = edge)."""

    origin_xy: tuple[float, float]
    resolution: float
    cells: np.ndarray
    nodata: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        self.nodata = np.asarray(self.nodata, dtype=bool)
        if self.resolution <= 0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        if self.cells.shape != self.nodata.shape:
            raise ValueError("nodata mask shape does not match cells")
        if not np.isin(self.cells, (0, 1)).all():
            raise ValueError("edge cells must be 0 or 1")

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]


def rasterize_points(points, bounds, resolution: float = DEFAULT_RESOLUTION_M) -> HeightGrid:
    """Bin point samples into per-cell maxima.

    Args:
        points: iterable of PointSample, or an (N, 3) array of x, y, h.
        bounds: (xmin, ymin, xmax, ymax) in meters; half-open on the max edge.
        resolution: cell edge length in meters.

    Cells that receive no sample are nodata. Samples outside the bounds are
    ignored. Non-finite samples are rejected.
    """
    x0, y0, x1, y1 = (float(v) for v in bounds)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate bounds {bounds}")
    if resolution <= 0:
        raise ValueError(f"resolution must be > 0, got {resolution}")

    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    else:
        arr = np.array([(p.x, p.y, p.h) for p in points], dtype=np.float64).reshape(-1, 3)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("point samples must be finite")

    width = max(1, int(math.ceil((x1 - x0) / resolution - 1e-9)))
    height = max(1, int(math.ceil((y1 - y0) / resolution - 1e-9)))
    vals, seen = _kernels.rasterize_max(
        arr[:, 0], arr[:, 1], arr[:, 2], x0, y0, float(resolution), width, height
    )
    return HeightGrid((x0, y0), float(resolution), vals, ~seen)


def gradient_magnitude(grid: HeightGrid) -> HeightGrid:
    """Per-cell maximum absolute height difference to the 4-neighborhood.

    Only pairs where both cells are observed contribute; cells with no
    observed pair are nodata. Adding a constant to all heights leaves the
    result unchanged, which is the point of matching on gradients.
    """
    v = grid.cells
    obs = ~grid.nodata
    best = np.full(v.shape, -1.0)
    paired = np.zeros(v.shape, dtype=bool)

    def _accumulate(dst, src):
        ok = obs[dst] & obs[src]
        d = np.where(ok, np.abs(v[dst] - v[src]), -1.0)
        best[dst] = np.maximum(best[dst], d)
        paired[dst] |= ok

    up = (slice(1, None), slice(None))
    down = (slice(0, -1), slice(None))
    left = (slice(None), slice(0, -1))
    right = (slice(None), slice(1, None))
    _accumulate(down, up)
    _accumulate(up, down)
    _accumulate(left, right)
    _accumulate(right, left)

    return HeightGrid(grid.origin_xy, grid.resolution, np.where(paired, best, 0.0), ~paired)


def binarize_edges(gradients: HeightGrid, threshold: float = DEFAULT_EDGE_THRESHOLD_M) -> EdgeMap:
    """Mark cells whose gradient strictly exceeds the threshold.

    A gradient exactly equal to the threshold does not count as an edge.
    Nodata cells are never edges and keep their mask.
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    edges = ((gradients.cells > threshold) & ~gradients.nodata).astype(np.uint8)
    return EdgeMap(gradients.origin_xy, gradients.resolution, edges, gradients.nodata.copy())


def rotate_to_north(grid: HeightGrid, compass_heading: float) -> HeightGrid:
    """Resample a square grid so its content is aligned with heading zero.

    Each output cell takes the value of the input cell found by rotating the
    output cell's center by -compass_heading about the grid center
    (nearest-neighbor). Cells whose source falls outside the input are nodata.
    A zero heading returns an identical grid.
    """
    if not math.isfinite(compass_heading):
        raise ValueError("heading must be finite")
    if grid.width != grid.height:
        raise ValueError(f"rotation requires a square grid, got {grid.width}x{grid.height}")
    if compass_heading == 0.0:
        return HeightGrid(grid.origin_xy, grid.resolution, grid.cells.copy(), grid.nodata.copy())

    n = grid.width
    ctr = (n - 1) / 2.0
    iy, ix = np.mgrid[0:n, 0:n]
    px = ix - ctr
    py = iy - ctr
    c = math.cos(-compass_heading)
    s = math.sin(-compass_heading)
    si = np.rint(c * px - s * py + ctr).astype(np.int64)
    sj = np.rint(s * px + c * py + ctr).astype(np.int64)
    inside = (si >= 0) & (si < n) & (sj >= 0) & (sj < n)
    sic = np.clip(si, 0, n - 1)
    sjc = np.clip(sj, 0, n - 1)
    cells = np.where(inside, grid.cells[sjc, sic], 0.0)
    nodata = ~inside | np.where(inside, grid.nodata[sjc, sic], True)
    return HeightGrid(grid.origin_xy, grid.resolution, cells, nodata)


def _write_grid_file(path, values: np.ndarray, nodata: np.ndarray, origin_xy, resolution: float):
    height, width = values.shape
    lines = [
        f"ncols {width}",
        f"nrows {height}",
        f"xllcorner {float(origin_xy[0])!r}",
        f"yllcorner {float(origin_xy[1])!r}",
        f"cellsize {float(resolution)!r}",
        f"nodata_value {NODATA_SENTINEL!r}",
    ]
    for r in range(height - 1, -1, -1):  # file rows run north to south
        row = [
            repr(NODATA_SENTINEL) if nodata[r, c] else repr(float(values[r, c]))
            for c in range(width)
        ]
        lines.append(" ".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def save_dem(grid: HeightGrid, path) -> None:
    """Write a grid to the ASCII format read back by load_dem."""
    _write_grid_file(path, grid.cells, grid.nodata, grid.origin_xy, grid.resolution)


_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def load_dem(path) -> HeightGrid:
    """Parse an ASCII grid file; raises GridFormatError naming the bad line."""
    with open(path) as f:
        raw = f.read().splitlines()

    header = {}
    for lineno, key in enumerate(_HEADER_KEYS, start=1):
        if lineno > len(raw):
            raise GridFormatError(f"line {lineno}: missing header '{key}'")
        parts = raw[lineno - 1].split()
        if len(parts) != 2 or parts[0].lower() != key:
            raise GridFormatError(f"line {lineno}: expected '{key} <value>', got {raw[lineno - 1]!r}")
        try:
            header[key] = float(parts[1])
        except ValueError as exc:
            raise GridFormatError(f"line {lineno}: bad value for '{key}': {parts[1]!r}") from exc

    width = int(header["ncols"])
    height = int(header["nrows"])
    if width < 1 or height < 1 or width != header["ncols"] or height != header["nrows"]:
        raise GridFormatError("line 1: ncols/nrows must be positive integers")
    if header["cellsize"] <= 0:
        raise GridFormatError("line 5: cellsize must be > 0")
    sentinel = header["nodata_value"]

    body = raw[len(_HEADER_KEYS):]
    if len(body) < height:
        raise GridFormatError(f"line {len(raw) + 1}: expected {height} data rows, found {len(body)}")

    cells = np.zeros((height, width))
    nodata = np.zeros((height, width), dtype=bool)
    for i in range(height):
        lineno = len(_HEADER_KEYS) + i + 1
        tokens = body[i].split()
        if len(tokens) != width:
            raise GridFormatError(f"line {lineno}: expected {width} values, got {len(tokens)}")
        try:
            row = np.array([float(tok) for tok in tokens])
        except ValueError as exc:
            raise GridFormatError(f"line {lineno}: non-numeric value") from exc
        mask = row == sentinel
        if not np.all(np.isfinite(row[~mask])):
            raise GridFormatError(f"line {lineno}: non-finite value")
        r = height - 1 - i  # file rows run north to south
        cells[r] = np.where(mask, 0.0, row)
        nodata[r] = mask

    return HeightGrid(
        (header["xllcorner"], header["yllcorner"]), header["cellsize"], cells, nodata
    )
