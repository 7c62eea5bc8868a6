"""Time-indexed kinematic tree over relative-pose variables.

Timestep ``t`` owns the six variables ``xi[6t:6t+6]``: the position and
axis-angle rotation of ``control(t)`` in ``target(t)``. Reparenting a frame at
``t`` lasts until that frame is controlled again. Frames that are never
controlled keep their initial pose, which is a constant, not a variable.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .liegroup import (
    Pose,
    TraceForm,
    dtrace_composed,
    exp_so3,
    log_so3,
    rotate_point_jacobian,
    trace_gradient,
)

WORLD = 0
SIN_GUARD = 1e-6


class StructuralError(ValueError):
    """An attachment would break the tree (cycle, root move, reused timestep)."""


@dataclass(frozen=True)
class FrameId:
    index: int
    name: str


@dataclass(frozen=True)
class Event:
    t: int
    parent: int
    var: int | None


class KinematicTimeline:
    """Immutable parent map lambda(i; t) plus control/target per timestep."""

    def __init__(self, names, initial_parent, initial_pose):
        names = list(names)
        if names[0] != "world" or len(set(names)) != len(names):
            raise StructuralError("frame 0 must be 'world' and names must be unique")
        self.names = tuple(names)
        self._index = {n: i for i, n in enumerate(names)}
        self.initial_pose = tuple(
            (np.asarray(p, dtype=float), np.asarray(R, dtype=float)) for p, R in initial_pose
        )
        self._events = tuple(
            (Event(-1, int(initial_parent[i]), None),) if i != WORLD else () for i in range(len(names))
        )
        self._times = tuple([e.t for e in ev] for ev in self._events)
        self.control: dict[int, int] = {}
        self.target: dict[int, int] = {}
        for i in range(1, len(names)):
            self._check_acyclic(i, initial_parent[i], -1)

    # -- construction -----------------------------------------------------------

    def _copy(self) -> KinematicTimeline:
        new = object.__new__(KinematicTimeline)
        new.names = self.names
        new._index = self._index
        new.initial_pose = self.initial_pose
        new._events = self._events
        new._times = self._times
        new.control = dict(self.control)
        new.target = dict(self.target)
        return new

    def attach(self, control, target, t: int) -> KinematicTimeline:
        """New timeline where ``control`` is reparented to ``target`` at ``t``."""
        c, g = self.index(control), self.index(target)
        if c == WORLD:
            raise StructuralError("the world frame cannot be controlled")
        if c == g:
            raise StructuralError(f"cannot attach {self.names[c]} to itself")
        if t < 0 or t in self.control:
            raise StructuralError(f"timestep {t} is negative or already assigned")
        if self.control and t < max(self.control):
            raise StructuralError("attachments must be added in timestep order")
        self._check_acyclic(c, g, t)
        new = self._copy()
        events = list(new._events)
        events[c] = events[c] + (Event(t, g, t),)
        new._events = tuple(events)
        new._times = tuple([e.t for e in ev] for ev in new._events)
        new.control[t] = c
        new.target[t] = g
        return new

    def _check_acyclic(self, child: int, parent: int, t: int):
        j = parent
        for _ in range(len(self.names) + 1):
            if j == WORLD:
                return
            if j == child:
                raise StructuralError(
                    f"attaching {self.names[child]} under {self.names[parent]} at t={t} forms a cycle"
                )
            j = self.event(j, t).parent
        raise StructuralError(f"parent map at t={t} contains a cycle")

    # -- queries ------------------------------------------------------------------

    def index(self, frame) -> int:
        if isinstance(frame, FrameId):
            return frame.index
        if isinstance(frame, str):
            return self._index[frame]
        return int(frame)

    def frame(self, frame) -> FrameId:
        i = self.index(frame)
        return FrameId(i, self.names[i])

    @property
    def horizon(self) -> int:
        """Last assigned timestep T (0 if none)."""
        return max(self.control) if self.control else 0

    @property
    def n_vars(self) -> int:
        return 6 * (self.horizon + 1)

    def event(self, i: int, t: int) -> Event:
        k = bisect.bisect_right(self._times[i], t) - 1
        return self._events[i][max(k, 0)]

    def parent(self, frame, t: int) -> int:
        return self.event(self.index(frame), t).parent

    def chain(self, frame, t: int) -> list[int]:
        """Frame and its ancestors up to, but excluding, the world."""
        out = []
        j = self.index(frame)
        while j != WORLD:
            out.append(j)
            j = self.event(j, t).parent
        return out

    def ancestors_vars(self, frame, t: int) -> set[int]:
        return {v for j in self.chain(frame, t) if (v := self.event(j, t).var) is not None}

    def last_placed(self, frame, parent, t: int) -> int:
        """Last timestep < t where ``frame`` was positioned in ``parent``; -1 if initial."""
        i, g = self.index(frame), self.index(parent)
        for e in reversed(self._events[i]):
            if e.t < t:
                if e.parent != g:
                    raise StructuralError(
                        f"{self.names[i]} is not in {self.names[g]} before t={t}"
                    )
                return e.t
        raise StructuralError(f"{self.names[i]} has no pose before t={t}")

    def subtree(self, frame, t: int) -> set[int]:
        """Frame plus every frame whose chain at t passes through it."""
        root = self.index(frame)
        return {i for i in range(1, len(self.names)) if root in self.chain(i, t)}

    def at(self, xi) -> PoseSnapshot:
        return PoseSnapshot(self, xi)


class PoseSnapshot:
    """Poses and Jacobians of a timeline at one variable vector, memoized."""

    def __init__(self, timeline: KinematicTimeline, xi):
        self.tl = timeline
        self.xi = np.asarray(xi, dtype=float)
        self._rot: dict[int, np.ndarray] = {}
        self._world: dict[tuple[int, int], Pose] = {}

    def var_rotation(self, s: int) -> np.ndarray:
        R = self._rot.get(s)
        if R is None:
            R = self._rot[s] = exp_so3(self.xi[6 * s + 3 : 6 * s + 6])
        return R

    def relative_pose(self, frame, t: int) -> Pose:
        i = self.tl.index(frame)
        e = self.tl.event(i, t)
        if e.var is None:
            return self.tl.initial_pose[i]
        return self.xi[6 * e.var : 6 * e.var + 3], self.var_rotation(e.var)

    def world_pose(self, frame, t: int) -> Pose:
        i = self.tl.index(frame)
        if i == WORLD:
            return np.zeros(3), np.eye(3)
        key = (i, t)
        hit = self._world.get(key)
        if hit is None:
            pp, Rp = self.world_pose(self.tl.event(i, t).parent, t)
            p, R = self.relative_pose(i, t)
            hit = self._world[key] = (pp + Rp @ p, Rp @ R)
        return hit

    def pose_in(self, frame, ref, t: int) -> Pose:
        """Pose of ``frame`` expressed in ``ref`` at timestep t."""
        pf, Rf = self.world_pose(frame, t)
        pr, Rr = self.world_pose(ref, t)
        return Rr.T @ (pf - pr), Rr.T @ Rf

    def position_jacobian(self, frame, t: int, point=None) -> np.ndarray:
        """d(world position of ``point`` in ``frame``)/d xi, shape (3, n_vars)."""
        J = np.zeros((3, self.tl.n_vars))
        p = np.zeros(3) if point is None else np.asarray(point, dtype=float)
        for j in self.tl.chain(frame, t):
            e = self.tl.event(j, t)
            if e.var is not None:
                s = e.var
                Rpar = self.world_pose(e.parent, t)[1]
                J[:, 6 * s : 6 * s + 3] += Rpar
                J[:, 6 * s + 3 : 6 * s + 6] += Rpar @ rotate_point_jacobian(
                    self.xi[6 * s + 3 : 6 * s + 6], p
                )
            x, R = self.relative_pose(j, t)
            p = x + R @ p
        return J

    def _rotation_factors(self, frame, t: int) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """For each variable s on the chain: (P, Q) with world rotation = P exp(w_s) Q."""
        out = {}
        Wi = self.world_pose(frame, t)[1]
        for j in self.tl.chain(frame, t):
            e = self.tl.event(j, t)
            if e.var is not None:
                P = self.world_pose(e.parent, t)[1]
                Q = self.world_pose(j, t)[1].T @ Wi
                out[e.var] = (P, Q)
        return out

    def orientation_trace_gradient(self, frame, t: int) -> tuple[float, np.ndarray]:
        """Angle between the frame's rotations at t-1 and t, and d tr(dR)/d xi."""
        R0 = self.world_pose(frame, t - 1)[1]
        R1 = self.world_pose(frame, t)[1]
        dtheta = float(np.linalg.norm(log_so3(R0.T @ R1)))
        prev = self._rotation_factors(frame, t - 1)
        cur = self._rotation_factors(frame, t)
        g = np.zeros(self.tl.n_vars)
        for s in set(prev) | set(cur):
            w = self.xi[6 * s + 3 : 6 * s + 6]
            if s in prev and s in cur:
                (P0, Q0), (P1, Q1) = prev[s], cur[s]
                G = dtrace_composed(TraceForm.AXINVBXC, Q0.T, P0.T @ P1, Q1, w)
            elif s in cur:
                P1, Q1 = cur[s]
                G = dtrace_composed(TraceForm.BXC, None, R0.T @ P1, Q1, w)
            else:
                P0, Q0 = prev[s]
                G = dtrace_composed(TraceForm.AXINVB, Q0.T, P0.T @ R1, None, w)
            g[6 * s + 3 : 6 * s + 6] = trace_gradient(G, w)
        return dtheta, g

    def orientation_distance_gradient(self, frame, t: int) -> tuple[float, np.ndarray]:
        """Angle between consecutive orientations and its gradient.

        The gradient is defined as zero when the angle is exactly zero.
        """
        dtheta, dtr = self.orientation_trace_gradient(frame, t)
        if dtheta == 0.0:
            return 0.0, np.zeros_like(dtr)
        return dtheta, -dtr / (2.0 * max(np.sin(dtheta), SIN_GUARD))

    def squared_orientation_distance_gradient(self, frame, t: int) -> tuple[float, np.ndarray]:
        """Squared angle and its gradient; smooth through zero."""
        dtheta, dtr = self.orientation_trace_gradient(frame, t)
        ratio = 1.0 if dtheta < 1e-8 else dtheta / max(np.sin(dtheta), SIN_GUARD)
        return dtheta * dtheta, -ratio * dtr


# Functional forms of the snapshot queries.


def relative_pose(timeline: KinematicTimeline, frame, t: int, xi) -> Pose:
    return timeline.at(xi).relative_pose(frame, t)


def world_pose(timeline: KinematicTimeline, frame, t: int, xi) -> Pose:
    return timeline.at(xi).world_pose(frame, t)


def position_jacobian(timeline: KinematicTimeline, frame, t: int, xi, point=None) -> np.ndarray:
    return timeline.at(xi).position_jacobian(frame, t, point)


def orientation_distance_gradient(timeline: KinematicTimeline, frame, t: int, xi):
    return timeline.at(xi).orientation_distance_gradient(frame, t)
