"""Scenario configuration, the closed-loop run driver, metrics, and export.

The loop advances true kinematics on a fixed dt schedule; odometry and
compass are emitted every tick and the particle cloud is propagated with
them. Localization (sense, match, weight, resample, estimate) runs every
`update_every_m` meters of odometry travel, aligned with the filter's
resample trigger. Between fixes the published estimate is the last fix
composed with the odometry increments since. Everything is seeded, so a
(config, seed) pair reproduces a byte-identical log.

The vehicle follows goals expressed in the odometry frame: commanded
velocity tracks the goal against the odometry-integrated pose, and the true
motion is the commanded motion passed through the inverse of the odometry
error map (what a feedback controller servoing drifting odometry actually
does). Drift therefore physically displaces the vehicle unless the goals
compensate for it, which is exactly what virtual goals are for.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import mission as ms
from . import particle_filter as pf
from .geodata import binarize_edges, gradient_magnitude, rotate_to_north
from .matcher import EdgeMap, blur, match_template, normalize
from .simworld import (
    ErrorModel,
    ErrorStream,
    Region,
    SensorConfig,
    TruePose,
    WorldSpec,
    build_world,
    sample_prior_dem,
    sense_local,
    step_motion,
)

__all__ = [
    "ConfigError",
    "FilterParams",
    "MissionPlan",
    "RunConfig",
    "ScenarioConfig",
    "RunLog",
    "run_scenario",
    "compute_rmse",
    "export",
    "load_config",
]

_GOAL_DEADBAND_M = 0.25
_SEARCH_GOAL_TOL_M = 2.5
_OVERFLIGHT_TOL_M = 3.0


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass
class FilterParams:
    n_particles: int = pf.DEFAULT_PARTICLE_COUNT
    k_clusters: int = pf.DEFAULT_CLUSTER_COUNT
    resample_distance_m: float = pf.DEFAULT_RESAMPLE_DISTANCE_M
    odo_cov_std_m: float = pf.DEFAULT_ODO_COV_STD_M
    edge_threshold_m: float = 5.0
    blur_sigma_cells: float = 2.0
    init_stddev_m: float = 2.0
    init_offset_m: tuple[float, float] = (0.0, 0.0)
    match_method: str = "auto"


@dataclass
class MissionPlan:
    home: tuple[float, float] = (0.0, 0.0)
    waypoints: list[ms.Waypoint] = field(default_factory=list)
    waypoint_trigger_m: float = ms.DEFAULT_WAYPOINT_TRIGGER_M
    detector_range_m: float = ms.DEFAULT_DETECTOR_RANGE_M
    dwell_timeout_s: float = 5.0
    search_size_m: float = ms.DEFAULT_SEARCH_SIZE_M
    search_spacing_m: float = ms.DEFAULT_SEARCH_SPACING_M
    search_timeout_s: float = ms.DEFAULT_SEARCH_TIMEOUT_S
    goal_step_m: float = ms.DEFAULT_GOAL_STEP_M
    home_radius_m: float = 5.0
    overflight: bool = True
    detect_false_negative_p: float = 0.0


@dataclass
class RunConfig:
    dt_s: float = 0.5
    update_every_m: float = 10.0
    max_speed_m_s: float = 2.0
    battery_s: float = 1800.0
    seed: int = 0
    localization: str = "filter"  # filter | oracle | odometry
    failsafe_at_s: float | None = None
    return_home_at_s: float | None = None


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    world: WorldSpec = field(default_factory=lambda: WorldSpec((0, 0, 200, 200), []))
    sensor: SensorConfig = field(default_factory=SensorConfig)
    errors: ErrorModel = field(default_factory=ErrorModel)
    filter: FilterParams = field(default_factory=FilterParams)
    mission: MissionPlan = field(default_factory=MissionPlan)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> "ScenarioConfig":
        if self.run.dt_s <= 0 or self.run.update_every_m <= 0 or self.run.max_speed_m_s <= 0:
            raise ConfigError("rates and speeds must be > 0")
        if self.run.battery_s <= 0:
            raise ConfigError("battery budget must be > 0")
        if self.run.localization not in ("filter", "oracle", "odometry"):
            raise ConfigError(f"unknown localization mode {self.run.localization!r}")
        if not self.mission.waypoints:
            raise ConfigError("mission plan needs at least one waypoint")
        x0, y0, x1, y1 = self.world.extent
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("world extent is degenerate")
        for region in self.world.regions:
            rx0, ry0, rx1, ry1 = region.rect
            if rx0 < x0 - 1e-9 or ry0 < y0 - 1e-9 or rx1 > x1 + 1e-9 or ry1 > y1 + 1e-9:
                raise ConfigError(f"region {region.rect} extends outside the world extent")
        return self


def _dataclass_from_dict(cls, data: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown key {path}.{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad section {path}: {exc}") from exc


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a validated ScenarioConfig from nested plain dicts.

    A top-level "preset" key starts from that named preset and overlays the
    remaining keys on top of it.
    """
    data = dict(data or {})
    preset_name = data.pop("preset", None)
    if preset_name is not None:
        from .presets import preset_dict

        base = preset_dict(preset_name)
        data = _deep_merge(base, data)

    known = {"name", "world", "sensor", "errors", "filter", "mission", "run"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    world_data = dict(data.get("world", {}))
    regions = [
        Region(kind=r["kind"], rect=tuple(r["rect"])) for r in world_data.pop("regions", [])
    ]
    if "extent" in world_data:
        world_data["extent"] = tuple(world_data["extent"])
    world = _dataclass_from_dict(WorldSpec, {**world_data, "regions": regions}, "world")

    mission_data = dict(data.get("mission", {}))
    waypoints = [
        ms.Waypoint(float(w[0]), float(w[1]), float(w[2]) if len(w) > 2 else 20.0)
        for w in mission_data.pop("waypoints", [])
    ]
    if "home" in mission_data:
        mission_data["home"] = tuple(mission_data["home"])
    plan = _dataclass_from_dict(MissionPlan, {**mission_data, "waypoints": waypoints}, "mission")

    filt_data = dict(data.get("filter", {}))
    if "init_offset_m" in filt_data:
        filt_data["init_offset_m"] = tuple(filt_data["init_offset_m"])

    cfg = ScenarioConfig(
        name=data.get("name", "scenario"),
        world=world,
        sensor=_dataclass_from_dict(SensorConfig, data.get("sensor", {}), "sensor"),
        errors=_dataclass_from_dict(ErrorModel, data.get("errors", {}), "errors"),
        filter=_dataclass_from_dict(FilterParams, filt_data, "filter"),
        mission=plan,
        run=_dataclass_from_dict(RunConfig, data.get("run", {}), "run"),
    )
    return cfg.validate()


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path) -> ScenarioConfig:
    """Read a YAML scenario file (supports a 'preset' inheritance key)."""
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"unparseable config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return config_from_dict(data)


@dataclass
class RunLog:
    """Per-tick time series plus mission metadata and derived summary."""

    t: np.ndarray
    true_xy: np.ndarray
    odom_xy: np.ndarray
    est_xy: np.ndarray
    states: list[str]
    events: list[str]
    waypoints: list[tuple[float, float, float]] = field(default_factory=list)
    flags: list[tuple[float, float]] = field(default_factory=list)
    detected: list[bool] = field(default_factory=list)
    arrivals: list[tuple[int, float]] = field(default_factory=list)  # (wp index, true error m)
    termination: str = "battery"

    def summary(self) -> dict:
        return {
            "rmse_odom": compute_rmse(self.odom_xy, self.true_xy),
            "rmse_method": compute_rmse(self.est_xy, self.true_xy),
            "waypoints_detected": int(sum(self.detected)),
            "waypoints_total": len(self.waypoints),
            "termination": self.termination,
        }

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# termination={self.termination}\n")
        buf.write(f"# detected={','.join('1' if d else '0' for d in self.detected)}\n")
        buf.write("t,true_x,true_y,odom_x,odom_y,est_x,est_y,state,event\n")
        for i in range(len(self.t)):
            buf.write(
                ",".join(
                    [
                        repr(float(self.t[i])),
                        repr(float(self.true_xy[i, 0])),
                        repr(float(self.true_xy[i, 1])),
                        repr(float(self.odom_xy[i, 0])),
                        repr(float(self.odom_xy[i, 1])),
                        repr(float(self.est_xy[i, 0])),
                        repr(float(self.est_xy[i, 1])),
                        self.states[i],
                        self.events[i],
                    ]
                )
                + "\n"
            )
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_csv_text())

    @classmethod
    def from_csv(cls, path) -> "RunLog":
        termination = "battery"
        detected: list[bool] = []
        rows = []
        with open(path) as f:
            for line in f:
                line = line.rstrip("\n")
                if line.startswith("# termination="):
                    termination = line.split("=", 1)[1]
                elif line.startswith("# detected="):
                    spec = line.split("=", 1)[1]
                    detected = [tok == "1" for tok in spec.split(",") if tok]
                elif line.startswith("#") or line.startswith("t,") or not line:
                    continue
                else:
                    rows.append(line.split(","))
        if not rows:
            raise ValueError(f"log {path} has no data rows")
        t = np.array([float(r[0]) for r in rows])
        true_xy = np.array([[float(r[1]), float(r[2])] for r in rows])
        odom_xy = np.array([[float(r[3]), float(r[4])] for r in rows])
        est_xy = np.array([[float(r[5]), float(r[6])] for r in rows])
        states = [r[7] for r in rows]
        events = [r[8] if len(r) > 8 else "" for r in rows]
        return cls(t, true_xy, odom_xy, est_xy, states, events, detected=detected, termination=termination)

    def to_geojson(self) -> dict:
        def line(name, xy):
            return {
                "type": "Feature",
                "properties": {"name": name},
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[float(x), float(y)] for x, y in xy],
                },
            }

        features = [
            line("true", self.true_xy),
            line("odometry", self.odom_xy),
            line("estimate", self.est_xy),
        ]
        for i, (x, y, radius) in enumerate(self.waypoints):
            features.append(
                {
                    "type": "Feature",
                    "properties": {"name": "waypoint", "index": i, "radius": float(radius)},
                    "geometry": {"type": "Point", "coordinates": [float(x), float(y)]},
                }
            )
        return {"type": "FeatureCollection", "features": features}


def compute_rmse(estimates: np.ndarray, truths: np.ndarray) -> float:
    """Root-mean-square 2-D position error between aligned series."""
    estimates = np.asarray(estimates, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if estimates.shape != truths.shape or estimates.ndim != 2 or estimates.shape[1] != 2:
        raise ValueError("series must be equal-length (N, 2) arrays")
    if estimates.shape[0] == 0:
        raise ValueError("empty series")
    return float(np.sqrt(np.mean(np.sum((estimates - truths) ** 2, axis=1))))


def export(log: RunLog, fmt: str, path) -> str:
    """Write a run log as CSV or GeoJSON; returns the written path."""
    path = str(path)
    if fmt == "csv":
        log.to_csv(path)
    elif fmt == "geojson":
        with open(path, "w") as f:
            json.dump(log.to_geojson(), f, indent=2)
            f.write("\n")
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path


def _rot(angle: float, x: float, y: float) -> tuple[float, float]:
    c, s = math.cos(angle), math.sin(angle)
    return (c * x - s * y, s * x + c * y)


def _windowed_similarity(local, prior_edges: EdgeMap, compass: float, positions: np.ndarray, params: FilterParams):
    """Similarity over a prior window that covers the particle cloud.

    Weights are only read at particle positions, so matching outside the
    cloud's neighborhood is wasted work; the window is the particle bounding
    box padded by the template half-extent plus the blur support.
    """
    aligned = rotate_to_north(local, compass)
    edges = binarize_edges(gradient_magnitude(aligned), params.edge_threshold_m)
    res = prior_edges.resolution
    tn = max(edges.width, edges.height)
    pad = (tn * res) / 2.0 + 3.0 * params.blur_sigma_cells * res + 8.0

    ox, oy = prior_edges.origin_xy
    i0 = int(math.floor((positions[:, 0].min() - pad - ox) / res))
    i1 = int(math.ceil((positions[:, 0].max() + pad - ox) / res))
    j0 = int(math.floor((positions[:, 1].min() - pad - oy) / res))
    j1 = int(math.ceil((positions[:, 1].max() + pad - oy) / res))
    i0, i1 = max(0, i0), min(prior_edges.width, i1)
    j0, j1 = max(0, j0), min(prior_edges.height, j1)
    # never smaller than the template
    while i1 - i0 < edges.width:
        i0, i1 = max(0, i0 - 8), min(prior_edges.width, i1 + 8)
        if i0 == 0 and i1 == prior_edges.width:
            break
    while j1 - j0 < edges.height:
        j0, j1 = max(0, j0 - 8), min(prior_edges.height, j1 + 8)
        if j0 == 0 and j1 == prior_edges.height:
            break

    window = EdgeMap(
        (ox + i0 * res, oy + j0 * res),
        res,
        prior_edges.cells[j0:j1, i0:i1],
        prior_edges.nodata[j0:j1, i0:i1],
    )
    sim = match_template(edges, window, method=params.match_method)
    return normalize(blur(sim, params.blur_sigma_cells))


class _MissionRunner:
    """Per-run mutable mission state driven by the main loop."""

    def __init__(self, cfg: ScenarioConfig, flags: list[tuple[float, float]], rng: np.random.Generator):
        self.cfg = cfg
        self.fsm = ms.MissionFsm()
        self.flags = flags
        self.rng = rng
        self.wp_idx = 0
        self.dwell_elapsed = 0.0
        self.search_elapsed = 0.0
        self.search_goals: list[tuple[float, float]] = []
        self.overflight_target: tuple[float, float] | None = None
        self.detector_blind = False
        self.arrivals: list[tuple[int, float]] = []
        self.return_home_sent = False

    def _advance_waypoint(self, events):
        self.wp_idx += 1
        if self.wp_idx >= len(self.cfg.mission.waypoints):
            self.fsm.step(ms.MissionEvent.ALL_WAYPOINTS_CLEARED)
            events.append(ms.MissionEvent.ALL_WAYPOINTS_CLEARED.value)

    def process(self, t: float, est, true_xy) -> list[str]:
        """Run the per-tick mission logic; returns the emitted event names."""
        events: list[str] = []
        plan = self.cfg.mission
        state = self.fsm.state

        if (
            self.cfg.run.return_home_at_s is not None
            and t >= self.cfg.run.return_home_at_s
            and not self.return_home_sent
        ):
            self.return_home_sent = True
            self.fsm.step(ms.MissionEvent.RETURN_HOME_SERVICE)
            events.append(ms.MissionEvent.RETURN_HOME_SERVICE.value)
            return events

        if state == ms.MissionState.WAYPOINT_NAVIGATION:
            if self.overflight_target is not None:
                dist = math.hypot(est[0] - self.overflight_target[0], est[1] - self.overflight_target[1])
                if dist <= _OVERFLIGHT_TOL_M:
                    self.overflight_target = None
                    self._advance_waypoint(events)
            elif self.wp_idx >= len(plan.waypoints):
                self.fsm.step(ms.MissionEvent.ALL_WAYPOINTS_CLEARED)
                events.append(ms.MissionEvent.ALL_WAYPOINTS_CLEARED.value)
            else:
                wpt = plan.waypoints[self.wp_idx]
                ev = ms.detection_check(
                    est,
                    true_xy,
                    wpt,
                    self.flags[self.wp_idx],
                    detector_active=False,
                    trigger_m=plan.waypoint_trigger_m,
                )
                if ev is ms.MissionEvent.WAYPOINT_REACHED:
                    self.arrivals.append(
                        (self.wp_idx, math.hypot(true_xy[0] - wpt.x, true_xy[1] - wpt.y))
                    )
                    self.dwell_elapsed = 0.0
                    self.detector_blind = self.rng.random() < plan.detect_false_negative_p
                    self.fsm.step(ev)
                    events.append(ev.value)

        elif state == ms.MissionState.WAYPOINT_DETECTION:
            self.dwell_elapsed += self.cfg.run.dt_s
            wpt = plan.waypoints[self.wp_idx]
            ev = ms.detection_check(
                est,
                true_xy,
                wpt,
                self.flags[self.wp_idx],
                detector_active=True,
                detector_range_m=0.0 if self.detector_blind else plan.detector_range_m,
                dwell_elapsed_s=self.dwell_elapsed,
                dwell_timeout_s=plan.dwell_timeout_s,
            )
            if ev is ms.MissionEvent.DETECTION:
                wpt.detected = True
                self.fsm.step(ev)
                events.append(ev.value)
                if plan.overflight:
                    self.overflight_target = self.flags[self.wp_idx]
                else:
                    self._advance_waypoint(events)
            elif ev is ms.MissionEvent.DETECTION_TOO_FAR_OR_NONE:
                self.fsm.step(ev)
                events.append(ev.value)
                self.search_elapsed = 0.0
                self.search_goals = ms.search_pattern(
                    (wpt.x, wpt.y), plan.search_size_m, plan.search_spacing_m
                )

        elif state == ms.MissionState.SEARCH_PATTERN:
            self.search_elapsed += self.cfg.run.dt_s
            wpt = plan.waypoints[self.wp_idx]
            detected = False
            if not self.detector_blind:
                flag = self.flags[self.wp_idx]
                detected = math.hypot(true_xy[0] - flag[0], true_xy[1] - flag[1]) <= plan.detector_range_m
            if detected:
                wpt.detected = True
                self.search_goals = []  # detection aborts the remaining goals
                self.fsm.step(ms.MissionEvent.SEARCH_COMPLETE_OR_TIMEOUT)
                events.append(ms.MissionEvent.SEARCH_COMPLETE_OR_TIMEOUT.value)
                if plan.overflight:
                    self.overflight_target = self.flags[self.wp_idx]
                else:
                    self._advance_waypoint(events)
            else:
                while self.search_goals:
                    g = self.search_goals[0]
                    if math.hypot(est[0] - g[0], est[1] - g[1]) <= _SEARCH_GOAL_TOL_M:
                        self.search_goals.pop(0)
                    else:
                        break
                if not self.search_goals or self.search_elapsed > plan.search_timeout_s:
                    self.fsm.step(ms.MissionEvent.SEARCH_COMPLETE_OR_TIMEOUT)
                    events.append(ms.MissionEvent.SEARCH_COMPLETE_OR_TIMEOUT.value)
                    self._advance_waypoint(events)

        elif state == ms.MissionState.RETURN_HOME:
            home = plan.home
            if math.hypot(est[0] - home[0], est[1] - home[1]) <= plan.home_radius_m:
                self.fsm.step(ms.MissionEvent.HOME_REACHED)
                events.append(ms.MissionEvent.HOME_REACHED.value)

        return events

    def goal_odo(self, est, pos_odo, psi: float) -> tuple[float, float]:
        """Current goal in the odometry frame for the active state."""
        plan = self.cfg.mission
        state = self.fsm.state
        frames = ms.FrameSet(
            world_from_odom=ms.Rigid2D(),
            odom_from_body=ms.Rigid2D(psi, float(pos_odo[0]), float(pos_odo[1])),
            world_from_body_corrected=ms.Rigid2D(psi, float(est[0]), float(est[1])),
        )
        pe = pf.PoseEstimate(float(est[0]), float(est[1]), psi, 1.0)

        if state == ms.MissionState.WAYPOINT_NAVIGATION:
            if self.overflight_target is not None:
                tx, ty = self.overflight_target
                return (tx + pos_odo[0] - est[0], ty + pos_odo[1] - est[1])
            if self.wp_idx < len(plan.waypoints):
                wpt = plan.waypoints[self.wp_idx]
                return ms.virtual_goal(pe, frames, wpt, plan.goal_step_m)
        elif state == ms.MissionState.SEARCH_PATTERN and self.search_goals:
            gx, gy = self.search_goals[0]
            return (gx + pos_odo[0] - est[0], gy + pos_odo[1] - est[1])
        elif state == ms.MissionState.RETURN_HOME:
            home = ms.Waypoint(plan.home[0], plan.home[1], max(plan.home_radius_m, 1.0))
            return ms.virtual_goal(pe, frames, home, plan.goal_step_m)
        return (float(pos_odo[0]), float(pos_odo[1]))  # hold


def run_scenario(config: ScenarioConfig, seed: int | None = None) -> RunLog:
    """Execute one closed-loop mission and return its log."""
    cfg = config.validate()
    run = cfg.run if seed is None else dataclasses.replace(cfg.run, seed=seed)

    child = np.random.SeedSequence(run.seed).generate_state(4)
    world_seed, error_seed, sensor_seed, aux_seed = (int(v) for v in child)

    world = build_world(dataclasses.replace(cfg.world, seed=world_seed))
    prior = sample_prior_dem(world)
    prior_edges = binarize_edges(gradient_magnitude(prior), cfg.filter.edge_threshold_m)
    stream = ErrorStream(cfg.errors, seed=error_seed)
    sensor_cfg = dataclasses.replace(cfg.sensor, seed=sensor_seed)
    aux_rng = np.random.default_rng(aux_seed)

    plan = dataclasses.replace(
        cfg.mission, waypoints=[dataclasses.replace(w) for w in cfg.mission.waypoints]
    )
    cfg = dataclasses.replace(cfg, mission=plan, run=run)

    flags = []
    for w in plan.waypoints:
        ang = aux_rng.uniform(0.0, 2.0 * math.pi)
        radius = w.radius * 0.8 * math.sqrt(aux_rng.uniform())
        flags.append((w.x + radius * math.cos(ang), w.y + radius * math.sin(ang)))

    home = plan.home
    pose = TruePose(home[0], home[1], 0.0)
    pos_odo = np.array(home, dtype=np.float64)
    mode = run.localization
    odo_cov = np.eye(2) * cfg.filter.odo_cov_std_m**2

    ps = None
    last_fix = np.array(home, dtype=np.float64)
    odo_ref = pos_odo.copy()
    if mode == "filter":
        init_center = (home[0] + cfg.filter.init_offset_m[0], home[1] + cfg.filter.init_offset_m[1])
        ps = pf.init(init_center, cfg.filter.init_stddev_m, cfg.filter.n_particles, seed=aux_seed)
        first = pf.estimate(ps, cfg.filter.k_clusters)
        last_fix = np.array([first.x, first.y])

    def current_est() -> np.ndarray:
        if mode == "oracle":
            return np.array([pose.x, pose.y])
        if mode == "odometry":
            return pos_odo.copy()
        return last_fix + (pos_odo - odo_ref)

    runner = _MissionRunner(cfg, flags, aux_rng)
    runner.fsm.step(ms.MissionEvent.TAKEOFF_SUCCESS)
    runner.fsm.step(ms.MissionEvent.START_MISSION)

    rows_t = [0.0]
    rows_true = [(pose.x, pose.y)]
    rows_odom = [tuple(pos_odo)]
    rows_est = [tuple(current_est())]
    rows_state = [runner.fsm.state.value]
    rows_event = [
        ";".join([ms.MissionEvent.TAKEOFF_SUCCESS.value, ms.MissionEvent.START_MISSION.value])
    ]

    termination = "battery"
    psi = stream.emit_compass(pose.heading, 0.0)
    t = 0.0
    dt = run.dt_s
    while t < run.battery_s - 1e-9:
        if run.failsafe_at_s is not None and t >= run.failsafe_at_s:
            termination = "failsafe"
            break

        est = current_est()
        events = runner.process(t, est, (pose.x, pose.y))
        goal = runner.goal_odo(est, pos_odo, psi)

        ex, ey = goal[0] - pos_odo[0], goal[1] - pos_odo[1]
        err = math.hypot(ex, ey)
        if err > _GOAL_DEADBAND_M:
            speed = min(run.max_speed_m_s, err / dt)
            vx, vy = ex / err * speed, ey / err * speed
            # commanded motion passed through the inverse odometry error map
            vx, vy = _rot(-stream.bias(t), vx, vy)
            scale = 1.0 + cfg.errors.odo_scale
            new_pose = step_motion(pose, (vx / scale, vy / scale), dt, max_speed=math.inf)
        else:
            new_pose = pose

        disp = (new_pose.x - pose.x, new_pose.y - pose.y)
        delta = stream.emit_odometry(disp, new_pose.heading)
        t += dt
        psi = stream.emit_compass(new_pose.heading, t)
        wdx, wdy = _rot(psi, delta.dx, delta.dy)
        pos_odo = pos_odo + np.array([wdx, wdy])
        pose = new_pose

        if mode == "filter":
            pf.propagate(ps, delta, psi)
            if ps.distance_since_resample >= run.update_every_m:
                local = sense_local(world, pose, sensor_cfg)
                sim = _windowed_similarity(local, prior_edges, psi, ps.positions, cfg.filter)
                ps, fix = pf.step(
                    ps,
                    pf.OdometryDelta(0.0, 0.0),
                    psi,
                    sim,
                    resample_distance_m=cfg.filter.resample_distance_m,
                    odo_cov=odo_cov,
                    k=cfg.filter.k_clusters,
                )
                last_fix = np.array([fix.x, fix.y])
                odo_ref = pos_odo.copy()

        est_now = current_est()
        rows_t.append(t)
        rows_true.append((pose.x, pose.y))
        rows_odom.append(tuple(pos_odo))
        rows_est.append(tuple(est_now))
        rows_state.append(runner.fsm.state.value)
        rows_event.append(";".join(events))

        if runner.fsm.state is ms.MissionState.LAND:
            termination = "landed"
            break

    return RunLog(
        t=np.array(rows_t),
        true_xy=np.array(rows_true),
        odom_xy=np.array(rows_odom),
        est_xy=np.array(rows_est),
        states=rows_state,
        events=rows_event,
        waypoints=[(w.x, w.y, w.radius) for w in plan.waypoints],
        flags=flags,
        detected=[w.detected for w in plan.waypoints],
        arrivals=list(runner.arrivals),
        termination=termination,
    )
