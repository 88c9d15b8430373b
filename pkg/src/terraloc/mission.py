"""Mission control: state machine, frame bookkeeping, goals, search.

The FSM implements exactly these transitions; any other (state, event) pair
is a no-op that the wrapper records:

    PrepareTakeoff  --takeoff_success-->            WaitForStart
    WaitForStart    --start_mission-->              WaypointNavigation
    Navigation      --waypoint_reached-->           WaypointDetection
    Detection       --detection-->                  WaypointNavigation
    Detection       --detection_too_far_or_none-->  SearchPattern
    Search          --search_complete_or_timeout--> WaypointNavigation
    Navigation      --all_waypoints_cleared-->      ReturnHome
    ReturnHome      --home_reached-->               Land
    Navigation      --return_home_service-->        ReturnHome
    Search          --return_home_service-->        ReturnHome
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

__all__ = [
    "MissionState",
    "MissionEvent",
    "TRANSITIONS",
    "fsm_step",
    "MissionFsm",
    "Waypoint",
    "Rigid2D",
    "FrameSet",
    "virtual_goal",
    "detection_check",
    "search_pattern",
]

DEFAULT_WAYPOINT_TRIGGER_M = 15.0
DEFAULT_DETECTOR_RANGE_M = 10.0
DEFAULT_GOAL_STEP_M = 15.0
DEFAULT_SEARCH_SIZE_M = 40.0
DEFAULT_SEARCH_SPACING_M = 10.0
DEFAULT_SEARCH_TIMEOUT_S = 120.0


class MissionState(Enum):
    PREPARE_TAKEOFF = "prepare_takeoff"
    WAIT_FOR_START = "wait_for_start"
    WAYPOINT_NAVIGATION = "waypoint_navigation"
    WAYPOINT_DETECTION = "waypoint_detection"
    SEARCH_PATTERN = "search_pattern"
    RETURN_HOME = "return_home"
    LAND = "land"


class MissionEvent(Enum):
    TAKEOFF_SUCCESS = "takeoff_success"
    START_MISSION = "start_mission"
    WAYPOINT_REACHED = "waypoint_reached"
    DETECTION = "detection"
    DETECTION_TOO_FAR_OR_NONE = "detection_too_far_or_none"
    SEARCH_COMPLETE_OR_TIMEOUT = "search_complete_or_timeout"
    ALL_WAYPOINTS_CLEARED = "all_waypoints_cleared"
    HOME_REACHED = "home_reached"
    RETURN_HOME_SERVICE = "return_home_service"


_S, _E = MissionState, MissionEvent
TRANSITIONS: dict[tuple[MissionState, MissionEvent], MissionState] = {
    (_S.PREPARE_TAKEOFF, _E.TAKEOFF_SUCCESS): _S.WAIT_FOR_START,
    (_S.WAIT_FOR_START, _E.START_MISSION): _S.WAYPOINT_NAVIGATION,
    (_S.WAYPOINT_NAVIGATION, _E.WAYPOINT_REACHED): _S.WAYPOINT_DETECTION,
    (_S.WAYPOINT_DETECTION, _E.DETECTION): _S.WAYPOINT_NAVIGATION,
    (_S.WAYPOINT_DETECTION, _E.DETECTION_TOO_FAR_OR_NONE): _S.SEARCH_PATTERN,
    (_S.SEARCH_PATTERN, _E.SEARCH_COMPLETE_OR_TIMEOUT): _S.WAYPOINT_NAVIGATION,
    (_S.WAYPOINT_NAVIGATION, _E.ALL_WAYPOINTS_CLEARED): _S.RETURN_HOME,
    (_S.RETURN_HOME, _E.HOME_REACHED): _S.LAND,
    (_S.WAYPOINT_NAVIGATION, _E.RETURN_HOME_SERVICE): _S.RETURN_HOME,
    (_S.SEARCH_PATTERN, _E.RETURN_HOME_SERVICE): _S.RETURN_HOME,
}


def fsm_step(state: MissionState, event: MissionEvent) -> MissionState:
    """Next state for (state, event); pairs outside the table are no-ops."""
    if not isinstance(event, MissionEvent):
        raise ValueError(f"unknown mission event {event!r}")
    if not isinstance(state, MissionState):
        raise ValueError(f"unknown mission state {state!r}")
    return TRANSITIONS.get((state, event), state)


class MissionFsm:
    """FSM wrapper that records every event, including ignored ones."""

    def __init__(self, state: MissionState = MissionState.PREPARE_TAKEOFF):
        self.state = state
        self.log: list[tuple[MissionState, MissionEvent, MissionState]] = []

    def step(self, event: MissionEvent) -> MissionState:
        new = fsm_step(self.state, event)
        self.log.append((self.state, event, new))
        self.state = new
        return new


@dataclass
class Waypoint:
    """Expected waypoint position with its printed-map uncertainty radius."""

    x: float
    y: float
    radius: float = 20.0
    detected: bool = False

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("waypoint uncertainty radius must be > 0")


@dataclass
class Rigid2D:
    """Proper rigid 2-D transform (rotation angle + translation)."""

    angle: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def apply(self, point) -> tuple[float, float]:
        x, y = (float(v) for v in point)
        c, s = math.cos(self.angle), math.sin(self.angle)
        return (c * x - s * y + self.tx, s * x + c * y + self.ty)

    def inverse(self) -> "Rigid2D":
        c, s = math.cos(self.angle), math.sin(self.angle)
        return Rigid2D(-self.angle, -(c * self.tx + s * self.ty), -(-s * self.tx + c * self.ty))


@dataclass
class FrameSet:
    """World/odometry/body frame relations tracked by the mission layer.

    world_from_odom is fixed at takeoff (the take-off position is known);
    odom_from_body accumulates odometry; world_from_body_corrected is the
    latest published localization estimate.
    """

    world_from_odom: Rigid2D = field(default_factory=Rigid2D)
    odom_from_body: Rigid2D = field(default_factory=Rigid2D)
    world_from_body_corrected: Rigid2D = field(default_factory=Rigid2D)


def virtual_goal(est, frames: FrameSet, target: Waypoint, step: float = DEFAULT_GOAL_STEP_M):
    """Short-horizon goal in the odometry frame that cancels drift.

    The direction to the waypoint is computed from the corrected estimate,
    then attached to the body position as odometry sees it; following the
    goal in the odometry frame therefore moves the true vehicle toward the
    true waypoint even while the odometry frame drifts. The goal clamps onto
    the (drift-mapped) waypoint when closer than one step.
    """
    if step <= 0:
        raise ValueError("goal step must be > 0")
    body_odo = (frames.odom_from_body.tx, frames.odom_from_body.ty)
    dx = target.x - est.x
    dy = target.y - est.y
    dist = math.hypot(dx, dy)
    if dist < 1e-12:
        return body_odo
    naive_world = frames.world_from_odom.apply(body_odo)
    step_len = min(step, dist)
    goal_world = (naive_world[0] + step_len * dx / dist, naive_world[1] + step_len * dy / dist)
    return frames.world_from_odom.inverse().apply(goal_world)


def detection_check(
    est_xy,
    true_xy,
    waypoint: Waypoint,
    flag_xy,
    *,
    detector_active: bool,
    trigger_m: float = DEFAULT_WAYPOINT_TRIGGER_M,
    detector_range_m: float = DEFAULT_DETECTOR_RANGE_M,
    dwell_elapsed_s: float = 0.0,
    dwell_timeout_s: float = 5.0,
) -> MissionEvent | None:
    """Range-based stand-in for the visual waypoint detector.

    While navigating (detector off) this fires waypoint_reached when the
    estimated distance to the expected position drops inside the trigger
    radius. With the detector on, it fires detection when the true distance
    to the true flag is within detector range, or the too-far/none event once
    the dwell budget is spent.
    """
    if detector_active:
        true_dist = math.hypot(true_xy[0] - flag_xy[0], true_xy[1] - flag_xy[1])
        if true_dist <= detector_range_m:
            return MissionEvent.DETECTION
        if dwell_elapsed_s >= dwell_timeout_s:
            return MissionEvent.DETECTION_TOO_FAR_OR_NONE
        return None
    est_dist = math.hypot(est_xy[0] - waypoint.x, est_xy[1] - waypoint.y)
    if est_dist <= trigger_m:
        return MissionEvent.WAYPOINT_REACHED
    return None


def search_pattern(
    center,
    size: float = DEFAULT_SEARCH_SIZE_M,
    spacing: float = DEFAULT_SEARCH_SPACING_M,
) -> list[tuple[float, float]]:
    """Outward square loops covering a size x size area around the center.

    Flown from the center, every point of the square ends up within
    spacing/2 of the path. Goals are the loop corners (NE, NW, SW, SE),
    inner loop first. Multi-loop patterns close each loop (repeat its first
    corner) before stepping outward and keep the loop separation at 0.8x the
    spacing: plain corner-to-corner loops a full spacing apart would leave
    diagonal pockets ~0.59x the separation from any segment. The outermost
    loop always lies on the square boundary. Deterministic, and interruptible
    by construction (callers just drop the remaining goals).
    """
    if not size >= spacing > 0:
        raise ValueError(f"need size >= spacing > 0, got size={size} spacing={spacing}")
    cx, cy = (float(v) for v in center)
    half_widths = [spacing / 2.0]
    sep = 0.8 * spacing
    while half_widths[-1] + sep < size / 2.0 - 1e-9:
        half_widths.append(half_widths[-1] + sep)
    if half_widths[-1] < size / 2.0 - 1e-9:
        half_widths.append(size / 2.0)
    goals = []
    closed = len(half_widths) > 1
    for hw in half_widths:
        corners = [(cx + hw, cy + hw), (cx - hw, cy + hw), (cx - hw, cy - hw), (cx + hw, cy - hw)]
        goals.extend(corners)
        if closed:
            goals.append(corners[0])
    return goals
