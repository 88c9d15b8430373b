import itertools
import math

import numpy as np
import pytest

from terraloc.mission import (
    TRANSITIONS,
    FrameSet,
    MissionEvent,
    MissionFsm,
    MissionState,
    Rigid2D,
    Waypoint,
    detection_check,
    fsm_step,
    search_pattern,
    virtual_goal,
)
from terraloc.particle_filter import PoseEstimate

S, E = MissionState, MissionEvent


# ---------------------------------------------------------------------------
# state machine
# ---------------------------------------------------------------------------

EXPECTED_TABLE = {
    (S.PREPARE_TAKEOFF, E.TAKEOFF_SUCCESS): S.WAIT_FOR_START,
    (S.WAIT_FOR_START, E.START_MISSION): S.WAYPOINT_NAVIGATION,
    (S.WAYPOINT_NAVIGATION, E.WAYPOINT_REACHED): S.WAYPOINT_DETECTION,
    (S.WAYPOINT_DETECTION, E.DETECTION): S.WAYPOINT_NAVIGATION,
    (S.WAYPOINT_DETECTION, E.DETECTION_TOO_FAR_OR_NONE): S.SEARCH_PATTERN,
    (S.SEARCH_PATTERN, E.SEARCH_COMPLETE_OR_TIMEOUT): S.WAYPOINT_NAVIGATION,
    (S.WAYPOINT_NAVIGATION, E.ALL_WAYPOINTS_CLEARED): S.RETURN_HOME,
    (S.RETURN_HOME, E.HOME_REACHED): S.LAND,
    (S.WAYPOINT_NAVIGATION, E.RETURN_HOME_SERVICE): S.RETURN_HOME,
    (S.SEARCH_PATTERN, E.RETURN_HOME_SERVICE): S.RETURN_HOME,
}


def test_fsm_exhaustive_table():
    # every (state, event) pair: listed edges transition, the rest are no-ops
    for state, event in itertools.product(S, E):
        expected = EXPECTED_TABLE.get((state, event), state)
        assert fsm_step(state, event) is expected


def test_fsm_table_matches_module_table():
    assert TRANSITIONS == EXPECTED_TABLE


def test_fsm_nominal_trace_ends_in_land():
    fsm = MissionFsm()
    trace = [E.TAKEOFF_SUCCESS, E.START_MISSION]
    for _ in range(3):  # three waypoints, each reached and detected
        trace += [E.WAYPOINT_REACHED, E.DETECTION]
    trace += [E.ALL_WAYPOINTS_CLEARED, E.HOME_REACHED]
    for ev in trace:
        fsm.step(ev)
    assert fsm.state is S.LAND


def test_fsm_land_reachable_from_every_state():
    routes = {
        S.PREPARE_TAKEOFF: [E.TAKEOFF_SUCCESS, E.START_MISSION, E.ALL_WAYPOINTS_CLEARED, E.HOME_REACHED],
        S.WAIT_FOR_START: [E.START_MISSION, E.ALL_WAYPOINTS_CLEARED, E.HOME_REACHED],
        S.WAYPOINT_NAVIGATION: [E.ALL_WAYPOINTS_CLEARED, E.HOME_REACHED],
        S.WAYPOINT_DETECTION: [E.DETECTION, E.ALL_WAYPOINTS_CLEARED, E.HOME_REACHED],
        S.SEARCH_PATTERN: [E.RETURN_HOME_SERVICE, E.HOME_REACHED],
        S.RETURN_HOME: [E.HOME_REACHED],
        S.LAND: [],
    }
    for start, route in routes.items():
        state = start
        for ev in route:
            state = fsm_step(state, ev)
        assert state is S.LAND


def test_fsm_return_home_service_edges():
    assert fsm_step(S.WAYPOINT_NAVIGATION, E.RETURN_HOME_SERVICE) is S.RETURN_HOME
    assert fsm_step(S.SEARCH_PATTERN, E.RETURN_HOME_SERVICE) is S.RETURN_HOME
    # dashed edges exist nowhere else
    for state in (S.PREPARE_TAKEOFF, S.WAIT_FOR_START, S.WAYPOINT_DETECTION, S.LAND):
        assert fsm_step(state, E.RETURN_HOME_SERVICE) is state


def test_fsm_land_ignores_start():
    assert fsm_step(S.LAND, E.START_MISSION) is S.LAND


def test_fsm_rejects_unknown_event():
    with pytest.raises(ValueError):
        fsm_step(S.LAND, "definitely_not_an_event")


def test_fsm_wrapper_logs_noops():
    fsm = MissionFsm()
    fsm.step(E.DETECTION)  # ignored in PrepareTakeoff
    assert fsm.state is S.PREPARE_TAKEOFF
    assert fsm.log == [(S.PREPARE_TAKEOFF, E.DETECTION, S.PREPARE_TAKEOFF)]


# ---------------------------------------------------------------------------
# virtual_goal
# ---------------------------------------------------------------------------


def _frames(odo_xy, est_xy, psi=0.0):
    return (
        FrameSet(
            world_from_odom=Rigid2D(),
            odom_from_body=Rigid2D(psi, odo_xy[0], odo_xy[1]),
            world_from_body_corrected=Rigid2D(psi, est_xy[0], est_xy[1]),
        ),
        PoseEstimate(est_xy[0], est_xy[1], psi, 1.0),
    )


def test_virtual_goal_zero_drift_collinear():
    frames, est = _frames((10.0, 10.0), (10.0, 10.0))
    wpt = Waypoint(70.0, 50.0)
    gx, gy = virtual_goal(est, frames, wpt, step=15.0)
    to_goal = np.array([gx - 10.0, gy - 10.0])
    to_wpt = np.array([60.0, 40.0])
    cross = to_goal[0] * to_wpt[1] - to_goal[1] * to_wpt[0]
    assert abs(cross) < 1e-9
    assert abs(np.linalg.norm(to_goal) - 15.0) < 1e-9


def test_virtual_goal_pure_translation_drift_offset():
    # hand-computed transform chain, clamped regime: drift d = est - odo, and
    # the compensated goal is the waypoint shifted by -d; the naive goal (est
    # taken from odometry) is the waypoint itself
    d = np.array([7.0, -3.0])
    odo = np.array([100.0, 50.0])
    est = odo + d
    wpt = Waypoint(est[0] + 4.0, est[1] + 3.0)  # 5 m away, inside one step
    frames, pe = _frames(odo, est)
    gx, gy = virtual_goal(pe, frames, wpt, step=15.0)
    assert abs(gx - (wpt.x - d[0])) < 1e-9
    assert abs(gy - (wpt.y - d[1])) < 1e-9
    frames_n, pe_n = _frames(odo, odo)
    wpt_n = Waypoint(odo[0] + 4.0, odo[1] + 3.0)
    ngx, ngy = virtual_goal(pe_n, frames_n, wpt_n, step=15.0)
    assert (ngx, ngy) == (wpt_n.x, wpt_n.y)


def test_virtual_goal_far_regime_direction():
    # beyond one step the goal direction follows the corrected estimate
    d = np.array([10.0, 0.0])
    odo = np.array([0.0, 0.0])
    est = odo + d
    wpt = Waypoint(est[0], est[1] + 100.0)  # due north of the estimate
    frames, pe = _frames(odo, est)
    gx, gy = virtual_goal(pe, frames, wpt, step=15.0)
    assert abs(gx - 0.0) < 1e-9 and abs(gy - 15.0) < 1e-9


def test_virtual_goal_clamps_at_waypoint():
    frames, pe = _frames((0.0, 0.0), (0.0, 0.0))
    wpt = Waypoint(4.0, 0.0)
    gx, gy = virtual_goal(pe, frames, wpt, step=15.0)
    assert (gx, gy) == (4.0, 0.0)


def test_virtual_goal_coincident_target():
    frames, pe = _frames((3.0, 4.0), (8.0, 9.0))
    wpt = Waypoint(8.0, 9.0)
    assert virtual_goal(pe, frames, wpt) == (3.0, 4.0)  # hold position


def test_virtual_goal_validates_step():
    frames, pe = _frames((0, 0), (0, 0))
    with pytest.raises(ValueError):
        virtual_goal(pe, frames, Waypoint(1, 1), step=0.0)


def test_rigid2d_inverse_round_trip():
    t = Rigid2D(0.7, 3.0, -2.0)
    p = (5.0, 11.0)
    q = t.inverse().apply(t.apply(p))
    assert abs(q[0] - p[0]) < 1e-12 and abs(q[1] - p[1]) < 1e-12


# ---------------------------------------------------------------------------
# detection_check
# ---------------------------------------------------------------------------


def test_detection_check_waypoint_trigger():
    wpt = Waypoint(100.0, 0.0)
    ev = detection_check((85.1, 0.0), (0.0, 0.0), wpt, (100.0, 0.0), detector_active=False)
    assert ev is E.WAYPOINT_REACHED  # 14.9 m away
    ev = detection_check((84.0, 0.0), (0.0, 0.0), wpt, (100.0, 0.0), detector_active=False)
    assert ev is None  # 16 m away


def test_detection_check_true_distance_detection():
    wpt = Waypoint(0.0, 0.0)
    ev = detection_check((0, 0), (3.0, 4.0), wpt, (6.0, 8.0), detector_active=True)
    assert ev is E.DETECTION  # true distance 5 <= 10
    ev = detection_check(
        (0, 0), (0.0, 0.0), wpt, (30.0, 0.0), detector_active=True, dwell_elapsed_s=1.0
    )
    assert ev is None


def test_detection_check_dwell_timeout():
    wpt = Waypoint(0.0, 0.0)
    ev = detection_check(
        (0, 0),
        (0.0, 0.0),
        wpt,
        (30.0, 0.0),
        detector_active=True,
        dwell_elapsed_s=5.0,
        dwell_timeout_s=5.0,
    )
    assert ev is E.DETECTION_TOO_FAR_OR_NONE


# ---------------------------------------------------------------------------
# search_pattern
# ---------------------------------------------------------------------------


def test_search_pattern_minimal_square():
    goals = search_pattern((0.0, 0.0), size=10.0, spacing=10.0)
    assert goals == [(5.0, 5.0), (-5.0, 5.0), (-5.0, -5.0), (5.0, -5.0)]


def test_search_pattern_deterministic():
    a = search_pattern((3.0, 4.0), 40.0, 10.0)
    b = search_pattern((3.0, 4.0), 40.0, 10.0)
    assert a == b


def _dist_point_segment(p, a, b):
    p, a, b = np.asarray(p), np.asarray(a), np.asarray(b)
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def test_search_pattern_coverage_oracle(rng):
    center = (0.0, 0.0)
    size, spacing = 40.0, 10.0
    goals = search_pattern(center, size, spacing)
    path = [center] + goals  # flown from the center
    for _ in range(1000):
        p = rng.uniform(-size / 2, size / 2, 2)
        d = min(_dist_point_segment(p, path[i], path[i + 1]) for i in range(len(path) - 1))
        assert d <= spacing / 2 + 1e-9


def test_search_pattern_validation():
    with pytest.raises(ValueError):
        search_pattern((0, 0), size=5.0, spacing=10.0)
    with pytest.raises(ValueError):
        search_pattern((0, 0), size=10.0, spacing=0.0)
