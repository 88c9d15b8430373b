"""Deterministic procedural 2.5D world plus sensor and error models.

The world's ground truth is a piecewise-constant height field rasterized once
at 1 m when the world is built; every consumer (prior map sampling, local
sensing, occlusion tests) reads that same field, so the prior and the sensor
are exactly consistent by construction. Everything is seeded: the same seeds
produce bit-identical worlds, sensor readings, and error sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .geodata import HeightGrid
from .particle_filter import OdometryDelta

__all__ = [
    "WORLD_RES_M",
    "Box",
    "Disc",
    "Region",
    "WorldSpec",
    "WorldModel",
    "TruePose",
    "SensorConfig",
    "ErrorModel",
    "ErrorStream",
    "build_world",
    "sample_prior_dem",
    "sense_local",
    "step_motion",
]

WORLD_RES_M = 1.0
MAX_COMPASS_BIAS_RAD = math.radians(30.0)
_OCCLUSION_STEP_M = 0.5


@dataclass
class Box:
    x0: float
    y0: float
    size_x: float
    size_y: float
    height: float


@dataclass
class Disc:
    cx: float
    cy: float
    radius: float
    height: float


@dataclass
class Region:
    kind: str  # "urban" | "forest" | "open_field"
    rect: tuple[float, float, float, float]


@dataclass
class WorldSpec:
    extent: tuple[float, float, float, float]
    regions: list[Region]
    urban_density: float = 1.5e-3  # obstacles per m^2
    forest_density: float = 8.0e-3
    seed: int = 0


@dataclass
class WorldModel:
    extent: tuple[float, float, float, float]
    obstacles: list
    regions: list[Region]
    seed: int
    field: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    @property
    def origin(self) -> tuple[float, float]:
        return (self.extent[0], self.extent[1])

    def height_at(self, x, y):
        """True height at world points; 0 outside the extent (open ground)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        ox, oy = self.origin
        ci = np.floor((x - ox) / WORLD_RES_M).astype(np.int64)
        cj = np.floor((y - oy) / WORLD_RES_M).astype(np.int64)
        ny, nx = self.field.shape
        inside = (ci >= 0) & (ci < nx) & (cj >= 0) & (cj < ny)
        out = np.zeros(np.broadcast(x, y).shape)
        out[inside] = self.field[cj[inside], ci[inside]]
        return out


@dataclass
class TruePose:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.heading))):
            raise ValueError("pose must be finite")


@dataclass
class SensorConfig:
    """Local height sensing parameters.

    The local map is a square of side extent_m centered on the vehicle in the
    body-aligned frame; the legal extent range is 30-60 m unless
    enforce_extent is disabled (unit tests use tiny grids).
    """

    extent_m: float = 40.0
    noise_std_m: float = 0.0
    dropout: float = 0.0
    range_m: float = 30.0
    occlusion: bool = True
    altitude_m: float = 20.0
    resolution_m: float = WORLD_RES_M
    seed: int = 0
    enforce_extent: bool = True

    def __post_init__(self):
        if self.enforce_extent and not 30.0 <= self.extent_m <= 60.0:
            raise ValueError(f"local map extent {self.extent_m} outside the 30-60 m range")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must be a probability")
        if self.noise_std_m < 0 or self.range_m <= 0 or self.resolution_m <= 0:
            raise ValueError("sensor magnitudes must be positive")


@dataclass
class ErrorModel:
    """Odometry and compass error parameters (all magnitudes >= 0).

    The compass bias is a slowly varying Ornstein-Uhlenbeck process hard-
    clipped to +-compass_bias_amp_rad (at most 30 degrees), with stationary
    spread amp/4; compass_bias_rate_rad_s is the process bandwidth (inverse
    correlation time). Rate 0 freezes the bias at its seeded initial value.
    """

    odo_scale: float = 0.0
    odo_noise_per_sqrt_m: float = 0.0
    compass_bias_amp_rad: float = 0.0
    compass_bias_rate_rad_s: float = 0.0
    compass_noise_rad: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("odo_noise_per_sqrt_m", "compass_bias_amp_rad", "compass_bias_rate_rad_s", "compass_noise_rad"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.compass_bias_amp_rad > MAX_COMPASS_BIAS_RAD + 1e-12:
            raise ValueError("compass bias amplitude exceeds the 30 degree cap")


_BIAS_GRID_S = 0.25


class ErrorStream:
    """Stateful, seeded realization of an ErrorModel.

    White noise draws come in a fixed order (one normal pair per odometry
    call, one normal per compass call) from their own generator, and the bias
    process evolves on its own seeded generator, so a given seed and call
    sequence reproduces the exact same error history. bias(t) expects
    non-decreasing t (a query earlier than the last one replays the process
    from zero).
    """

    def __init__(self, model: ErrorModel, seed: int | None = None):
        self.model = model
        base = model.seed if seed is None else seed
        self.rng = np.random.default_rng(np.random.SeedSequence([int(base), 1]))
        self._bias_seed = np.random.SeedSequence([int(base), 2])
        self._bias_reset()

    def _bias_reset(self):
        m = self.model
        self._bias_rng = np.random.default_rng(self._bias_seed)
        sigma = m.compass_bias_amp_rad / 4.0
        init = float(self._bias_rng.normal(0.0, sigma)) if sigma > 0 else 0.0
        self._bias_state = float(np.clip(init, -m.compass_bias_amp_rad, m.compass_bias_amp_rad))
        self._bias_t = 0.0

    def bias(self, t: float) -> float:
        m = self.model
        if m.compass_bias_amp_rad == 0.0 or m.compass_bias_rate_rad_s == 0.0:
            return self._bias_state
        if t < self._bias_t - 1e-9:
            self._bias_reset()
        rate = m.compass_bias_rate_rad_s
        sigma = m.compass_bias_amp_rad / 4.0
        step_std = sigma * math.sqrt(2.0 * rate * _BIAS_GRID_S)
        while self._bias_t + _BIAS_GRID_S <= t + 1e-9:
            b = self._bias_state * (1.0 - rate * _BIAS_GRID_S)
            b += step_std * float(self._bias_rng.standard_normal())
            self._bias_state = float(
                np.clip(b, -m.compass_bias_amp_rad, m.compass_bias_amp_rad)
            )
            self._bias_t += _BIAS_GRID_S
        return self._bias_state

    def emit_odometry(self, displacement_xy, true_heading: float) -> OdometryDelta:
        """Body-frame odometry increment for a true world displacement."""
        dx, dy = (float(v) for v in displacement_xy)
        dist = math.hypot(dx, dy)
        c, s = math.cos(-true_heading), math.sin(-true_heading)
        bx = c * dx - s * dy
        by = s * dx + c * dy
        scale = 1.0 + self.model.odo_scale
        noise = self.rng.normal(0.0, self.model.odo_noise_per_sqrt_m * math.sqrt(dist), 2)
        return OdometryDelta(scale * bx + noise[0], scale * by + noise[1])

    def emit_compass(self, true_heading: float, t: float) -> float:
        return true_heading + self.bias(t) + float(self.rng.normal(0.0, self.model.compass_noise_rad))


def _rasterize_obstacle(field_arr: np.ndarray, origin, obstacle) -> None:
    ox, oy = origin
    ny, nx = field_arr.shape
    if isinstance(obstacle, Box):
        # cells whose centers fall in the half-open footprint
        i0 = max(0, int(math.ceil((obstacle.x0 - ox) / WORLD_RES_M - 0.5)))
        i1 = min(nx, int(math.ceil((obstacle.x0 + obstacle.size_x - ox) / WORLD_RES_M - 0.5)))
        j0 = max(0, int(math.ceil((obstacle.y0 - oy) / WORLD_RES_M - 0.5)))
        j1 = min(ny, int(math.ceil((obstacle.y0 + obstacle.size_y - oy) / WORLD_RES_M - 0.5)))
        if i1 > i0 and j1 > j0:
            patch = field_arr[j0:j1, i0:i1]
            np.maximum(patch, obstacle.height, out=patch)
    else:
        r = obstacle.radius
        i0 = max(0, int(math.floor((obstacle.cx - r - ox) / WORLD_RES_M)))
        i1 = min(nx, int(math.ceil((obstacle.cx + r - ox) / WORLD_RES_M)) + 1)
        j0 = max(0, int(math.floor((obstacle.cy - r - oy) / WORLD_RES_M)))
        j1 = min(ny, int(math.ceil((obstacle.cy + r - oy) / WORLD_RES_M)) + 1)
        if i1 <= i0 or j1 <= j0:
            return
        cx = ox + (np.arange(i0, i1) + 0.5) * WORLD_RES_M
        cy = oy + (np.arange(j0, j1) + 0.5) * WORLD_RES_M
        inside = (cx[None, :] - obstacle.cx) ** 2 + (cy[:, None] - obstacle.cy) ** 2 <= r * r
        patch = field_arr[j0:j1, i0:i1]
        np.maximum(patch, np.where(inside, obstacle.height, 0.0), out=patch)


def build_world(spec: WorldSpec) -> WorldModel:
    """Deterministically populate regions with obstacles and rasterize truth.

    Urban regions get boxes 5-20 m tall, forest regions discs 8-25 m tall,
    open field nothing. Obstacle count per region is round(density * area).
    Any urban/forest region larger than 50x50 m is guaranteed at least one
    structure taller than 5 m so gradient evidence always exists there.
    """
    x0, y0, x1, y1 = spec.extent
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"zero-area world extent {spec.extent}")
    if spec.urban_density < 0 or spec.forest_density < 0:
        raise ValueError("densities must be >= 0")
    rng = np.random.default_rng(spec.seed)

    obstacles = []
    for region in spec.regions:
        rx0, ry0, rx1, ry1 = region.rect
        area = max(0.0, (rx1 - rx0) * (ry1 - ry0))
        placed_tall = False
        if region.kind == "urban":
            count = int(round(spec.urban_density * area))
            for _ in range(count):
                sx = rng.uniform(6.0, 18.0)
                sy = rng.uniform(6.0, 18.0)
                h = rng.uniform(5.0, 20.0)
                px = rng.uniform(rx0, max(rx0, rx1 - sx))
                py = rng.uniform(ry0, max(ry0, ry1 - sy))
                obstacles.append(Box(px, py, min(sx, rx1 - px), min(sy, ry1 - py), h))
                placed_tall |= h > 5.0
        elif region.kind == "forest":
            count = int(round(spec.forest_density * area))
            for _ in range(count):
                r = rng.uniform(1.5, 4.0)
                h = rng.uniform(8.0, 25.0)
                px = rng.uniform(rx0 + r, max(rx0 + r, rx1 - r))
                py = rng.uniform(ry0 + r, max(ry0 + r, ry1 - r))
                obstacles.append(Disc(px, py, r, h))
                placed_tall |= h > 5.0
        elif region.kind != "open_field":
            raise ValueError(f"unknown region kind {region.kind!r}")

        if region.kind in ("urban", "forest") and area > 2500.0 and not placed_tall:
            cx, cy = (rx0 + rx1) / 2.0, (ry0 + ry1) / 2.0
            if region.kind == "urban":
                obstacles.append(Box(cx - 5.0, cy - 5.0, 10.0, 10.0, 12.0))
            else:
                obstacles.append(Disc(cx, cy, 3.0, 15.0))

    nx = max(1, int(math.ceil((x1 - x0) / WORLD_RES_M - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / WORLD_RES_M - 1e-9)))
    field_arr = np.zeros((ny, nx))
    for ob in obstacles:
        _rasterize_obstacle(field_arr, (x0, y0), ob)
    return WorldModel(spec.extent, obstacles, list(spec.regions), spec.seed, field_arr)


def sample_prior_dem(world: WorldModel, resolution: float = WORLD_RES_M) -> HeightGrid:
    """Exact per-cell max obstacle height; the prior is fully observed.

    Resolutions other than 1 m must be integer multiples (block max-pooling
    of the canonical field).
    """
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    ratio = resolution / WORLD_RES_M
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError("prior resolution must be an integer multiple of the 1 m world grid")
    ratio = int(round(ratio))
    f = world.field
    if ratio == 1:
        cells = f.copy()
    else:
        ny = math.ceil(f.shape[0] / ratio) * ratio
        nx = math.ceil(f.shape[1] / ratio) * ratio
        padded = np.zeros((ny, nx))
        padded[: f.shape[0], : f.shape[1]] = f
        cells = padded.reshape(ny // ratio, ratio, nx // ratio, ratio).max(axis=(1, 3))
    return HeightGrid(world.origin, float(resolution), cells)


def _pose_rng(cfg: SensorConfig, pose: TruePose) -> np.random.Generator:
    bits = [int(np.float64(v).view(np.uint64)) for v in (pose.x, pose.y, pose.heading)]
    return np.random.default_rng(np.random.SeedSequence([int(cfg.seed), *bits]))


def sense_local(world: WorldModel, pose: TruePose, cfg: SensorConfig) -> HeightGrid:
    """Sample a body-aligned square height grid around the true pose.

    Cells beyond the sensing range, occluded by terrain, or dropped out are
    nodata; observed cells carry the true height plus clipped Gaussian noise.
    Deterministic for a given (cfg.seed, pose).
    """
    res = cfg.resolution_m
    half = int(math.floor(cfg.extent_m / (2.0 * res)))
    n = 2 * half + 1
    offs = (np.arange(n) - half) * res
    qx, qy = np.meshgrid(offs, offs)  # qx varies along columns
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    wx = pose.x + c * qx - s * qy
    wy = pose.y + s * qx + c * qy
    vals = world.height_at(wx, wy)

    nodata = np.hypot(qx, qy) > cfg.range_m
    if cfg.occlusion:
        visible = _kernels.visible_mask(
            world.field,
            world.origin[0],
            world.origin[1],
            WORLD_RES_M,
            pose.x,
            pose.y,
            cfg.altitude_m,
            wx.ravel(),
            wy.ravel(),
            vals.ravel(),
            _OCCLUSION_STEP_M,
        )
        nodata |= ~visible.reshape(n, n)

    rng = _pose_rng(cfg, pose)
    if cfg.dropout > 0:
        nodata |= rng.random((n, n)) < cfg.dropout
    if cfg.noise_std_m > 0:
        vals = np.clip(vals + rng.normal(0.0, cfg.noise_std_m, (n, n)), 0.0, None)

    vals = np.where(nodata, 0.0, vals)
    origin = (pose.x - n * res / 2.0, pose.y - n * res / 2.0)
    return HeightGrid(origin, res, vals, nodata)


def step_motion(pose: TruePose, velocity_xy, dt: float, max_speed: float = 2.0) -> TruePose:
    """Kinematic point-mass step: clamp speed, integrate, face the motion."""
    vx, vy = (float(v) for v in velocity_xy)
    speed = math.hypot(vx, vy)
    if speed > max_speed > 0:
        vx *= max_speed / speed
        vy *= max_speed / speed
        speed = max_speed
    if speed <= 1e-12:
        return replace(pose)
    return TruePose(pose.x + vx * dt, pose.y + vy * dt, math.atan2(vy, vx))
