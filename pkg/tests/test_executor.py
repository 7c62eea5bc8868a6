import csv

import numpy as np
import pytest

from cartamp.executor import (
    ControllerGains,
    LiveScene,
    Outcome,
    Perturbation,
    PerturbationScript,
    ScriptError,
    _push_project,
    execute,
    osc_step,
)
from cartamp.liegroup import RelPose, exp_so3
from cartamp.planner import Plan, Step
from cartamp.scene import scene_from_dict
from cartamp.symbolic import ActionSkeleton, GroundedAction


def toy_scene(wall_x=0.8):
    box = lambda h: {"box": h}
    return scene_from_dict(
        {
            "robot": {"base": [0, 0, 0], "workspace_radius": 1.5, "ee": "ee"},
            "objects": [
                {"name": "table", "parent": "world", "pose": [0.5, 0, 0, 0, 0, 0], "shape": box([0.4, 0.4, 0.05])},
                {"name": "cup", "parent": "table", "pose": [0, 0, 0.1, 0, 0, 0], "shape": box([0.05] * 3), "movable": True},
                {"name": "wall", "parent": "world", "pose": [wall_x, 0, 0.3, 0, 0, 0], "shape": box([0.05, 0.3, 0.3])},
                {"name": "ee", "parent": "world", "pose": [0.3, 0, 0.4, 0, 0, 0]},
            ],
        }
    )


def pick_place_plan():
    """Grasp the cup on top, set it down 0.2 m further along the table."""
    sk = ActionSkeleton((GroundedAction("pick", ("cup",)), GroundedAction("place", ("cup", "table"))))
    xs = [[0.3, 0, 0.4, 0, 0, 0], [0, 0, 0.05, 0, 0, 0], [-0.2, 0.1, 0.1, 0, 0, 0]]
    steps = [Step(t, c, g, RelPose.from_vector(x)) for t, (c, g), x in zip(range(3), [("ee", "world"), ("ee", "cup"), ("cup", "table")], xs)]
    return Plan(sk, np.concatenate(xs), 0.0, 0.0, steps)


def test_equilibrium_gives_zero_command():
    live = LiveScene(toy_scene())
    cmd = osc_step(live, live.world("ee"), ControllerGains(), moving={"cup"})
    np.testing.assert_array_equal(cmd, 0.0)


def test_attraction_points_at_goal():
    live = LiveScene(toy_scene())
    p, R = live.world("ee")
    cmd = osc_step(live, (p + [0.1, 0, 0], R), ControllerGains(k_obs=0.0))
    np.testing.assert_allclose(cmd, [10.0, 0, 0, 0, 0, 0])


def test_obstacle_term_brakes_approach():
    live = LiveScene(toy_scene(wall_x=0.4))
    live.reparent("cup", "ee")
    live.v = np.array([0.0, 0.0, -1.0])  # the table lies below the cup
    goal = live.world("ee")
    free = osc_step(live, goal, ControllerGains(k_obs=0.0), {"cup"})
    braked = osc_step(live, goal, ControllerGains(), {"cup"})
    assert braked[2] > free[2]
    live.v = np.array([0.0, 0.0, 1.0])  # moving away: no extra term
    np.testing.assert_array_equal(osc_step(live, goal, ControllerGains(), {"cup"}), osc_step(live, goal, ControllerGains(k_obs=0.0), {"cup"}))


def test_moving_the_target_moves_the_set_point():
    live = LiveScene(toy_scene())
    xi = RelPose.from_vector([0, 0, 0.05, 0, 0, 0]).pose()
    before = live.world("cup")[0] + xi[0]
    live.set_world("table", (live.world("table")[0] + [0, 0.05, 0], np.eye(3)))
    np.testing.assert_allclose(live.world("cup")[0] + xi[0] - before, [0, 0.05, 0], atol=1e-15)


def test_push_projection_keeps_height_roll_pitch():
    start = (np.array([0.1, 0.2, 0.07]), exp_so3([0.1, -0.05, 0.3]))
    follow = (np.array([0.4, -0.1, 0.5]), exp_so3([0.3, 0.2, -0.4]) @ start[1])
    p, R = _push_project(follow, start)
    np.testing.assert_allclose(p, [0.4, -0.1, 0.07])
    # the change of orientation is a pure yaw about the support normal
    dR = R @ start[1].T
    np.testing.assert_allclose(dR[:, 2], [0, 0, 1], atol=1e-12)


def test_underdamped_gains_warn():
    with pytest.warns(UserWarning):
        ControllerGains(k_p=100.0, k_v=5.0)
    with pytest.raises(ValueError):
        ControllerGains(k_p=-1.0)


ZERO = RelPose.from_vector([0.0] * 6)


def test_script_validation():
    with pytest.raises(ScriptError):
        PerturbationScript([Perturbation(1.0, "cup", ZERO), Perturbation(0.5, "cup", ZERO)])
    with pytest.raises(ScriptError):
        PerturbationScript([Perturbation(float("nan"), "cup", ZERO)])
    with pytest.raises(ScriptError):
        PerturbationScript.from_dict({"events": [{"time": 0.1, "frame": "cup"}]})
    for frame in ("ee", "world", "lamp"):
        with pytest.raises(ScriptError):
            PerturbationScript([Perturbation(0.0, frame, ZERO)]).validate(toy_scene().names, "ee")


def test_dt_must_be_sensible():
    for dt in (0.0, -1e-3, 0.05):
        with pytest.raises(ValueError):
            execute(pick_place_plan(), toy_scene(), dt=dt)


def test_pick_and_place_reaches_planned_poses(tmp_path):
    trace = execute(pick_place_plan(), toy_scene(), trace_path=tmp_path / "t.csv")
    assert trace.outcome is Outcome.SUCCESS, trace.message
    assert [(p.t, p.control, p.target) for p in trace.terminals] == [(1, "ee", "cup"), (2, "cup", "table")]
    assert all(p.position_error < 5e-3 for p in trace.terminals)
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == trace.header() and len(rows) == len(trace.samples) + 1
    assert float(rows[-1][0]) == trace.samples[-1][0]


def test_shifted_object_is_tracked():
    script = PerturbationScript([Perturbation(0.2, "cup", RelPose.from_vector([0.05, 0.0, 0, 0, 0, 0]))])
    trace = execute(pick_place_plan(), toy_scene(), script)
    assert trace.outcome is Outcome.SUCCESS
    grasp = trace.terminals[0]
    assert grasp.position_error < 5e-3


def test_perturbing_a_held_frame_is_refused():
    plan = pick_place_plan()
    # fire the event just after the grasp, while the cup is in hand
    done = execute(plan, toy_scene()).samples
    t_pick = next(row[0] for row in done if row[1] == 1)
    script = PerturbationScript([Perturbation(t_pick + 0.01, "cup", RelPose.from_vector([0.05, 0, 0, 0, 0, 0]))])
    with pytest.raises(ScriptError, match="held"):
        execute(plan, toy_scene(), script)


def test_short_timeout_reports_timeout():
    trace = execute(pick_place_plan(), toy_scene(), timeout_per_action=0.05)
    assert trace.outcome is Outcome.TIMEOUT and "pick(cup)" in trace.message


def test_driving_into_an_obstacle_is_a_collision():
    # the place target sits inside the wall
    plan = pick_place_plan()
    plan.steps[2] = Step(2, "cup", "table", RelPose.from_vector([0.3, 0.0, 0.1, 0, 0, 0]))
    trace = execute(plan, toy_scene(wall_x=0.8), gains=ControllerGains(k_obs=0.0))
    assert trace.outcome is Outcome.COLLISION and "wall" in trace.message
