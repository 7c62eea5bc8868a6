"""Kinematic execution of a plan with an operational-space controller.

The end-effector is a unit point mass with an attached orientation. Each
timestep of the plan becomes a goal pose ``x_des = T_target exp(xi_t) x_ee``,
where ``T_target`` is read from the live (possibly perturbed) scene on every
control tick, so a plan stays valid when its targets move. Commanded
accelerations are integrated with semi-implicit Euler.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import bounding_gap, contact_world
from .liegroup import Pose, RelPose, angle_between, compose, exp_so3, invert, log_so3
from .planner import Plan

POS_TOL = 5e-3
ANG_TOL = 0.02
SPEED_TOL = 1e-2
PENETRATION_LIMIT = 5e-3
# approach waypoints: height above the start and the goal, and how close
# the hand must come to a waypoint before moving on
CLEARANCE = 0.15
WAYPOINT_TOL = 0.02


class ScriptError(ValueError):
    """A perturbation script that cannot be applied."""


class Outcome(enum.Enum):
    SUCCESS = "Success"
    TIMEOUT = "Timeout"
    COLLISION = "Collision"


@dataclass(frozen=True)
class ControllerGains:
    k_p: float = 100.0
    k_v: float = 20.0
    k_obs: float = 10.0
    k_p_ang: float = 100.0
    k_v_ang: float = 20.0

    def __post_init__(self):
        if min(self.k_p, self.k_v, self.k_p_ang, self.k_v_ang) <= 0 or self.k_obs < 0:
            raise ValueError("gains must be positive (k_obs non-negative)")
        if self.k_v**2 < 4 * self.k_p or self.k_v_ang**2 < 4 * self.k_p_ang:
            warnings.warn("underdamped gains: k_v^2 < 4 k_p", stacklevel=2)


@dataclass(frozen=True)
class Perturbation:
    time: float
    frame: str
    delta: RelPose


@dataclass
class PerturbationScript:
    """Rigid displacements applied to world poses at given simulation times.

    A delta ``(p, r)`` moves a frame to ``(x + p, exp(r) R)``: translation in
    world axes, rotation about the frame's own origin. Frames below the
    displaced one move with it.
    """

    events: list[Perturbation] = field(default_factory=list)

    def __post_init__(self):
        times = [e.time for e in self.events]
        if any(not np.isfinite(t) or t < 0 for t in times):
            raise ScriptError("event times must be finite and non-negative")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ScriptError("event times must be nondecreasing")

    def validate(self, names, ee: str) -> None:
        for e in self.events:
            if e.frame not in names or e.frame == "world":
                raise ScriptError(f"unknown frame {e.frame!r}")
            if e.frame == ee:
                raise ScriptError("the end-effector cannot be perturbed")

    @classmethod
    def from_dict(cls, doc) -> PerturbationScript:
        events = doc.get("events", []) if isinstance(doc, dict) else doc
        try:
            return cls([Perturbation(float(e["time"]), str(e["frame"]), RelPose.from_vector(e["delta"])) for e in events])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScriptError(f"malformed perturbation event: {exc}") from None


@dataclass(frozen=True)
class TerminalPose:
    """Control-in-target pose when one timestep of the plan converged."""

    t: int
    control: str
    target: str
    achieved: RelPose
    planned: RelPose

    @property
    def position_error(self) -> float:
        return float(np.linalg.norm(self.achieved.p - self.planned.p))

    @property
    def angle_error(self) -> float:
        return angle_between(exp_so3(self.achieved.r), exp_so3(self.planned.r))


@dataclass
class ExecutionTrace:
    dt: float
    frames: list[str]
    samples: list[np.ndarray] = field(default_factory=list, repr=False)
    terminals: list[TerminalPose] = field(default_factory=list)
    outcome: Outcome = Outcome.SUCCESS
    message: str = ""

    def header(self) -> list[str]:
        cols = ["time", "action"]
        for name in self.frames:
            cols += [f"{name}.{c}" for c in ("x", "y", "z", "rx", "ry", "rz")]
        return cols + ["cmd.ax", "cmd.ay", "cmd.az", "cmd.alx", "cmd.aly", "cmd.alz"]

    def array(self) -> np.ndarray:
        return np.array(self.samples)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in self.samples:
                w.writerow([format(float(v), ".17g") for v in row])


class LiveScene:
    """Mutable kinematic tree of the running simulation."""

    def __init__(self, scene):
        self.shapes = {o.name: o.shape for o in scene.objects}
        self.parent = {o.name: o.parent for o in scene.objects}
        self.rel: dict[str, Pose] = {o.name: o.pose.pose() for o in scene.objects}
        self.names = [o.name for o in scene.objects]
        self.ee = scene.ee
        self.v = np.zeros(3)
        self.w = np.zeros(3)
        self._cache: dict[str, Pose] = {}

    def world(self, name: str) -> Pose:
        if name == "world":
            return np.zeros(3), np.eye(3)
        hit = self._cache.get(name)
        if hit is None:
            hit = compose(self.world(self.parent[name]), self.rel[name])
            self._cache[name] = hit
        return hit

    def pose_in(self, name: str, ref: str) -> Pose:
        return compose(invert(self.world(ref)), self.world(name))

    def set_world(self, name: str, pose: Pose) -> None:
        self.rel[name] = compose(invert(self.world(self.parent[name])), pose)
        self._cache.clear()

    def reparent(self, name: str, parent: str) -> None:
        pose = self.world(name)
        self.parent[name] = parent
        self.set_world(name, pose)

    def held(self) -> set[str]:
        """Frames whose chain to the world passes through the end-effector."""
        out = set()
        for name in self.names:
            p = self.parent[name]
            while p != "world":
                if p == self.ee:
                    out.add(name)
                    break
                p = self.parent[p]
        return out


def _closest_pair(live: LiveScene, moving: set[str]):
    """(d, p_moving, p_env) of the closest shaped (moving, environment) pair."""
    best = None
    env = [n for n in live.names if n not in moving and n != live.ee and live.shapes[n] is not None]
    for a in moving:
        sa = live.shapes[a]
        if sa is None:
            continue
        pa = live.world(a)
        for b in env:
            sb = live.shapes[b]
            pb = live.world(b)
            if best is not None:
                rel = compose(invert(pb), pa)
                if bounding_gap(rel, sa, sb) > best[0]:
                    continue
            d, wa, wb, n = contact_world(pa, sa, pb, sb)
            if best is None or d < best[0]:
                best = (d, wa, wb, n)
    return best


def osc_step(live: LiveScene, x_des: Pose, gains: ControllerGains, moving: set[str] | None = None) -> np.ndarray:
    """Commanded (linear, angular) acceleration of the end-effector.

    PD attraction toward ``x_des`` plus damping of the velocity component
    that points at the closest environment object.
    """
    p, R = live.world(live.ee)
    acc = -gains.k_p * (p - x_des[0]) - gains.k_v * live.v
    alpha = -gains.k_p_ang * log_so3(R @ x_des[1].T) - gains.k_v_ang * live.w
    if gains.k_obs and moving:
        pair = _closest_pair(live, moving)
        if pair is not None:
            d, wa, wb, n = pair
            # n points away from the obstacle; toward it is -n
            toward = -n
            v_obs = float(live.v @ toward)
            if v_obs > 0:
                acc = acc - gains.k_obs * v_obs * toward
    return np.concatenate([acc, alpha])


def _push_project(follow: Pose, start: Pose) -> Pose:
    """Keep height, roll and pitch of ``start``; take x, y and yaw from ``follow``."""
    dR = follow[1] @ start[1].T
    yaw = np.arctan2(dR[1, 0], dR[0, 0])
    p = np.array([follow[0][0], follow[0][1], start[0][2]])
    return p, exp_so3(np.array([0.0, 0.0, yaw])) @ start[1]


def _worst_penetration(live: LiveScene, moving: set[str]) -> tuple[float, str]:
    worst, pair = 0.0, ""
    env = [n for n in live.names if n not in moving and n != live.ee and live.shapes[n] is not None]
    for a in moving:
        if live.shapes[a] is None:
            continue
        pa = live.world(a)
        for b in env:
            pb = live.world(b)
            if bounding_gap(compose(invert(pb), pa), live.shapes[a], live.shapes[b]) > 0:
                continue
            d = contact_world(pa, live.shapes[a], pb, live.shapes[b])[0]
            if -d > worst:
                worst, pair = -d, f"{a}/{b}"
    return worst, pair


def execute(
    plan: Plan,
    scene,
    script: PerturbationScript | None = None,
    gains: ControllerGains | None = None,
    dt: float = 1e-3,
    timeout_per_action: float = 20.0,
    trace_path=None,
) -> ExecutionTrace:
    """Run every action of ``plan`` in order; never raises on Timeout or Collision."""
    if not 0 < dt <= 0.02:
        raise ValueError("dt must lie in (0, 0.02] s")
    gains = gains or ControllerGains()
    script = script or PerturbationScript()
    live = LiveScene(scene)
    script.validate(live.names, live.ee)
    trace = ExecutionTrace(dt, live.names)
    pending = list(script.events)
    steps = {s.t: s for s in plan.steps}
    n_tick = 0
    writer = None
    fh = None
    if trace_path is not None:
        fh = open(trace_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(trace.header())

    def record(k: int, cmd: np.ndarray):
        row = [n_tick * dt, k]
        for name in live.names:
            p, R = live.world(name)
            row.extend(p)
            row.extend(log_so3(R))
        row.extend(cmd)
        arr = np.array(row, dtype=float)
        trace.samples.append(arr)
        if writer is not None:
            writer.writerow([format(float(v), ".17g") for v in arr])

    def apply_events(now: float):
        while pending and pending[0].time <= now + 1e-12:
            e = pending.pop(0)
            if e.frame in live.held():
                raise ScriptError(f"{e.frame} is held by the end-effector at t={e.time:g} s")
            p, R = live.world(e.frame)
            dp, dR = e.delta.pose()
            live.set_world(e.frame, (p + dp, dR @ R))

    try:
        for k, (t0, action) in enumerate(_action_starts(plan)):
            deadline = n_tick + int(round(timeout_per_action / dt))
            for j, (control, target) in enumerate(action.frames(live.ee)):
                t = t0 + j
                xi = steps[t].xi.pose()
                pushed = None
                if action.name == "push" and j == 1:
                    # the pusher has reached b: b now follows the hand, in c's plane
                    pushed = (control, live.pose_in(control, target), compose(invert(live.world(live.ee)), live.world(control)))
                    live.reparent(control, target)
                    x_ee = invert(pushed[2])
                else:
                    x_ee = live.pose_in(live.ee, control)
                moving = live.held() | ({control} if pushed else set())
                # approach: lift, move above the goal, descend (a push slides instead)
                start_R = live.world(live.ee)[1]
                lift_to = live.world(live.ee)[0][2] + CLEARANCE
                phase = 2 if pushed is not None else 0
                while True:
                    apply_events(n_tick * dt)
                    x_des = compose(compose(live.world(target), xi), x_ee)
                    p, R = live.world(live.ee)
                    height = max(lift_to, x_des[0][2] + CLEARANCE)
                    if phase == 0:
                        goal = (np.array([p[0], p[1], height]), start_R)
                    elif phase == 1:
                        goal = (np.array([x_des[0][0], x_des[0][1], height]), x_des[1])
                    else:
                        goal = x_des
                    cmd = osc_step(live, goal, gains, moving)
                    record(k, cmd)
                    err = np.linalg.norm(p - goal[0])
                    if phase < 2 and err < WAYPOINT_TOL and angle_between(R, goal[1]) < 10 * ANG_TOL:
                        phase += 1
                    elif (
                        phase == 2
                        and err < POS_TOL
                        and angle_between(R, goal[1]) < ANG_TOL
                        and np.linalg.norm(live.v) < SPEED_TOL
                    ):
                        break
                    if n_tick >= deadline:
                        trace.outcome = Outcome.TIMEOUT
                        trace.message = f"{action} did not converge within {timeout_per_action:g} s"
                        return trace
                    live.v = live.v + dt * cmd[:3]
                    live.w = live.w + dt * cmd[3:]
                    live.set_world(live.ee, (p + dt * live.v, exp_so3(dt * live.w) @ R))
                    if pushed is not None:
                        follow = compose(invert(live.world(target)), compose(live.world(live.ee), pushed[2]))
                        live.rel[control] = _push_project(follow, pushed[1])
                        live._cache.clear()
                    n_tick += 1
                    depth, pair = _worst_penetration(live, moving)
                    if depth > PENETRATION_LIMIT:
                        trace.outcome = Outcome.COLLISION
                        trace.message = f"{pair} penetrate by {depth * 1e3:.1f} mm during {action}"
                        return trace
                achieved = RelPose.from_pose(live.pose_in(control, target))
                trace.terminals.append(TerminalPose(t, control, target, achieved, steps[t].xi))
                _switch(live, action, j)
        record(len(plan.skeleton.actions) - 1, np.zeros(6))
        return trace
    finally:
        if fh is not None:
            fh.close()


def _action_starts(plan: Plan):
    t = 1
    for a in plan.skeleton.actions:
        yield t, a
        t += a.span


def _switch(live: LiveScene, action, j: int) -> None:
    """Kinematic switch once a timestep of ``action`` converged."""
    if action.name == "pick":
        live.reparent(action.args[0], live.ee)
    elif action.name == "place":
        live.reparent(action.args[0], action.args[1])
    elif action.name == "push" and j == 1:
        # b already rests in c; nothing stays attached
        pass
