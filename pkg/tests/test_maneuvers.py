import math

import numpy as np
import pytest

from whyplan.errors import InapplicableMacroError
from whyplan.maneuvers import (KinematicParams, MacroAction, Trajectory, applicable_macros,
                               expand_macro, extract_features, generate_trajectory,
                               macro_from_name)
from whyplan.scenario import Goal, JointState, lane_point_state, scenario_from_dict

from conftest import mini_scenario_dict

PARAMS = KinematicParams()


def joint_on(sc, lane, s, speed=8.0, extra=None):
    vehicles = {"me": lane_point_state(sc.layout, lane, s, speed)}
    vehicles.update(extra or {})
    return JointState(t=0, vehicles=vehicles)


@pytest.fixture
def sc():
    return scenario_from_dict(mini_scenario_dict())


def names(actions):
    return {a.name for a in actions}


def test_macro_action_validation():
    with pytest.raises(ValueError):
        MacroAction("Exit")
    with pytest.raises(ValueError):
        MacroAction("Continue", direction="left")
    assert macro_from_name("Exit-right") == MacroAction("Exit", "right")
    assert str(MacroAction("Exit", "straight")) == "Exit-straight"


def test_maneuver_parameter_consistency():
    from whyplan.maneuvers import Maneuver
    with pytest.raises(ValueError):
        Maneuver("lane-change-left")  # no target lane
    with pytest.raises(ValueError):
        Maneuver("give-way", lanes=("a",))  # no junction/connection
    with pytest.raises(ValueError):
        Maneuver("turn-right", junction="j")  # no connection
    Maneuver("lane-change-right", lanes=("a",), target_lane="b")
    Maneuver("turn-left", junction="j", connection=("a", "b"))


def test_mid_lane_with_left_neighbor_offers_change_left_and_continue(sc):
    acts = names(applicable_macros(joint_on(sc, "right", 10.0), "me", sc.layout,
                                   sc.ego_goal, PARAMS))
    assert "Change-left" in acts
    assert "Continue" in acts
    assert "Stop" in acts


def test_rightmost_lane_has_no_change_right(sc):
    acts = names(applicable_macros(joint_on(sc, "right", 10.0), "me", sc.layout,
                                   sc.ego_goal, PARAMS))
    assert "Change-right" not in acts


def test_junction_ahead_offers_exit_right(sc):
    acts = names(applicable_macros(joint_on(sc, "right", 10.0), "me", sc.layout,
                                   sc.ego_goal, PARAMS))
    assert "Exit-right" in acts


def test_headway_blocks_lane_change(sc):
    me = lane_point_state(sc.layout, "right", 20.0, 10.0)
    blocker = lane_point_state(sc.layout, "left", 25.0, 10.0)  # 0.5 s ahead
    state = JointState(t=0, vehicles={"me": me, "other": blocker})
    acts = names(applicable_macros(state, "me", sc.layout, sc.ego_goal, PARAMS))
    assert "Change-left" not in acts
    far = lane_point_state(sc.layout, "left", 60.0, 10.0)  # 4 s ahead
    state = JointState(t=0, vehicles={"me": me, "other": far})
    acts = names(applicable_macros(state, "me", sc.layout, sc.ego_goal, PARAMS))
    assert "Change-left" in acts


def test_continue_requires_goal_on_lane_keep_path(sc):
    # From the exit lane there is no path back to the ego goal.
    acts = names(applicable_macros(joint_on(sc, "exit", 5.0), "me", sc.layout,
                                   sc.ego_goal, PARAMS))
    assert "Continue" not in acts
    assert "Stop" in acts  # never empty


def test_continue_next_exit_needs_two_junctions(sc):
    acts = names(applicable_macros(joint_on(sc, "right", 10.0), "me", sc.layout,
                                   sc.ego_goal, PARAMS))
    assert "Continue-next-exit" not in acts


def test_continue_next_exit_on_two_junction_road():
    raw = mini_scenario_dict()
    # Append a second junction with a right exit off the far segment.
    raw["layout"]["lanes"].append({"id": "right_far2", "midline": [[150.0, 0.0], [200.0, 0.0]],
                                   "width_m": 3.5, "successors": []})
    raw["layout"]["lanes"].append({"id": "exit2", "midline": [[154.0, -4.0], [154.0, -44.0]],
                                   "width_m": 3.5, "successors": []})
    raw["layout"]["junctions"].append({"id": "j2", "connections": [
        {"from": "right_far", "to": "right_far2", "direction": "straight", "has_priority": True},
        {"from": "right_far", "to": "exit2", "direction": "right", "has_priority": True},
    ]})
    sc = scenario_from_dict(raw)
    acts = names(applicable_macros(joint_on(sc, "right", 10.0), "me", sc.layout,
                                   sc.ego_goal, PARAMS))
    assert "Continue-next-exit" in acts
    chain = expand_macro(MacroAction("Continue-next-exit"), joint_on(sc, "right", 10.0),
                         "me", sc.layout)
    assert [m.kind for m in chain] == ["lane-follow", "give-way", "turn-right"]
    assert chain[1].junction == "j2"


def test_exit_expands_to_three_manoeuvres(sc):
    chain = expand_macro(MacroAction("Exit", "right"), joint_on(sc, "right", 10.0),
                         "me", sc.layout)
    assert [m.kind for m in chain] == ["lane-follow", "give-way", "turn-right"]


def test_continue_and_stop_expand_to_single_manoeuvres(sc):
    state = joint_on(sc, "right", 10.0)
    assert [m.kind for m in expand_macro(MacroAction("Continue"), state, "me", sc.layout)] \
        == ["lane-follow"]
    assert [m.kind for m in expand_macro(MacroAction("Stop"), state, "me", sc.layout)] \
        == ["stop"]


def test_expand_never_returns_empty_chain(sc):
    state = joint_on(sc, "right", 10.0)
    for macro in applicable_macros(state, "me", sc.layout, sc.ego_goal, PARAMS):
        assert len(expand_macro(macro, state, "me", sc.layout)) >= 1


def test_inapplicable_macro_raises(sc):
    state = joint_on(sc, "left", 10.0)
    with pytest.raises(InapplicableMacroError):
        expand_macro(MacroAction("Change-left"), state, "me", sc.layout)  # no left neighbor
    with pytest.raises(InapplicableMacroError):
        expand_macro(MacroAction("Exit", "left"), joint_on(sc, "right", 10.0), "me", sc.layout)


# --- trajectory generation -------------------------------------------------------


def straight_lane_sc():
    raw = mini_scenario_dict()
    raw["layout"] = {"lanes": [
        {"id": "lane", "midline": [[0.0, 0.0], [100.0, 0.0]], "width_m": 3.5,
         "successors": []},
        {"id": "side", "midline": [[0.0, 3.5], [100.0, 3.5]], "width_m": 3.5,
         "right_neighbor": "lane", "successors": []},
    ], "junctions": []}
    raw["layout"]["lanes"][0]["left_neighbor"] = "side"
    raw["ego"] = {"id": "ego", "goal": {"lane": "lane", "interval": [99.9, 100.0],
                                        "label": "end"}}
    raw["vehicles"] = [{"id": "ego", "label": "ego", "lane": "lane", "nominal_s": 0.0,
                        "spawn_range_m": 0.0, "speed_range_mps": [10.0, 10.0], "goals": []}]
    return scenario_from_dict(raw)


def test_constant_speed_lane_follow_reaches_lane_end():
    sc = straight_lane_sc()
    start = lane_point_state(sc.layout, "lane", 0.0, 10.0)
    chain = expand_macro(MacroAction("Continue"), JointState(t=0, vehicles={"me": start}),
                         "me", sc.layout)
    traj = generate_trajectory(chain, start, sc.layout, 0.1, 400, PARAMS)
    # Cruise equals start speed until the end-of-road braking envelope binds.
    assert abs(len(traj) - 1 - 117) < 25
    assert traj.xs[-1] == pytest.approx(100.0, abs=0.5)
    mid = len(traj) // 3
    assert np.all(np.abs(traj.speeds[:mid] - 10.0) < 1e-6)


def test_lane_change_realigns_heading_and_moves_one_width():
    sc = straight_lane_sc()
    start = lane_point_state(sc.layout, "lane", 10.0, 8.0)
    chain = expand_macro(MacroAction("Change-left"), JointState(t=0, vehicles={"me": start}),
                         "me", sc.layout)
    traj = generate_trajectory(chain, start, sc.layout, 0.1, 400, PARAMS)
    assert traj.ys[-1] - traj.ys[0] == pytest.approx(3.5, abs=0.01)
    assert abs(traj.headings[-1]) < 1e-3
    assert len(traj) - 1 == pytest.approx(PARAMS.lane_change_duration / 0.1, abs=1)


def test_stop_manoeuvre_reaches_zero_speed():
    sc = straight_lane_sc()
    start = lane_point_state(sc.layout, "lane", 0.0, 10.0)
    chain = expand_macro(MacroAction("Stop"), JointState(t=0, vehicles={"me": start}),
                         "me", sc.layout)
    traj = generate_trajectory(chain, start, sc.layout, 0.1, 400, PARAMS)
    assert traj.speeds[-1] == pytest.approx(0.0, abs=1e-6)
    assert not traj.truncated


def test_horizon_truncation_is_flagged_not_raised():
    sc = straight_lane_sc()
    start = lane_point_state(sc.layout, "lane", 0.0, 10.0)
    chain = expand_macro(MacroAction("Continue"), JointState(t=0, vehicles={"me": start}),
                         "me", sc.layout)
    traj = generate_trajectory(chain, start, sc.layout, 0.1, 30, PARAMS)
    assert traj.truncated
    assert len(traj) == 31


def test_finite_difference_consistency():
    sc = scenario_from_dict(mini_scenario_dict())
    start = lane_point_state(sc.layout, "right", 5.0, 9.0)
    for macro in ("Continue", "Change-left", "Exit-right"):
        chain = expand_macro(macro_from_name(macro), JointState(t=0, vehicles={"me": start}),
                             "me", sc.layout)
        traj = generate_trajectory(chain, start, sc.layout, 0.1, 400, PARAMS)
        dx = np.diff(traj.xs)
        dy = np.diff(traj.ys)
        speed_err = np.abs(np.hypot(dx, dy) / 0.1 - traj.speeds[:-1])
        assert float(speed_err.max()) <= 0.1


# --- features --------------------------------------------------------------------


def test_constant_velocity_straight_features_are_zero():
    sc = straight_lane_sc()
    n = 51
    traj = Trajectory(dt=0.1, xs=np.arange(n) * 1.0, ys=np.zeros(n), headings=np.zeros(n),
                      speeds=np.full(n, 10.0), accels=np.zeros(n))
    goal = Goal(lane="lane", start_s=99.0, end_s=100.0, label="end")
    f = extract_features(traj, goal, sc.layout)
    assert f.jerk == 0.0
    assert f.angular_acceleration == 0.0
    assert f.curvature == 0.0
    assert not f.reached_goal
    assert f.time_to_goal == pytest.approx((n - 1) * 0.1)


def test_time_to_goal_on_100m_lane_at_10mps():
    sc = straight_lane_sc()
    n = 101
    traj = Trajectory(dt=0.1, xs=np.arange(n) * 1.0, ys=np.zeros(n), headings=np.zeros(n),
                      speeds=np.full(n, 10.0), accels=np.zeros(n))
    f = extract_features(traj, sc.ego_goal, sc.layout)
    assert f.reached_goal
    assert f.time_to_goal == pytest.approx(10.0, abs=1e-9)


def test_circular_arc_curvature():
    radius, speed, dt = 20.0, 5.0, 0.1
    steps = 120
    omega = speed / radius
    ts = np.arange(steps + 1) * dt
    xs = radius * np.cos(omega * ts)
    ys = radius * np.sin(omega * ts)
    headings = omega * ts + math.pi / 2
    traj = Trajectory(dt=dt, xs=xs, ys=ys, headings=np.array([((h + math.pi) % (2 * math.pi)) - math.pi for h in headings]),
                      speeds=np.full(steps + 1, speed), accels=np.zeros(steps + 1))
    sc = straight_lane_sc()
    f = extract_features(traj, sc.ego_goal, sc.layout)
    assert f.curvature == pytest.approx(1.0 / radius, rel=0.02)


def test_features_invariant_to_rigid_translation():
    raw = mini_scenario_dict()
    sc = scenario_from_dict(raw)
    start = lane_point_state(sc.layout, "right", 5.0, 9.0)
    chain = expand_macro(MacroAction("Continue"), JointState(t=0, vehicles={"me": start}),
                         "me", sc.layout)
    traj = generate_trajectory(chain, start, sc.layout, 0.1, 400, PARAMS)
    f0 = extract_features(traj, sc.ego_goal, sc.layout)

    shifted = mini_scenario_dict()
    dx, dy = 1000.0, -500.0
    for lane in shifted["layout"]["lanes"]:
        lane["midline"] = [[x + dx, y + dy] for x, y in lane["midline"]]
    sc2 = scenario_from_dict(shifted)
    traj2 = Trajectory(dt=traj.dt, xs=traj.xs + dx, ys=traj.ys + dy, headings=traj.headings,
                       speeds=traj.speeds, accels=traj.accels)
    f1 = extract_features(traj2, sc2.ego_goal, sc2.layout)
    for name in ("time_to_goal", "jerk", "angular_acceleration", "curvature"):
        assert getattr(f0, name) == pytest.approx(getattr(f1, name), abs=1e-9)
