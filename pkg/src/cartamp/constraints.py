"""Travel objective and manipulation constraints over relative-pose variables.

Every constraint block reads a :class:`~cartamp.scenegraph.PoseSnapshot` and
returns residuals; inequality blocks follow ``f <= 0``. Jacobians come back as
``(columns, dense sub-block)`` so the solver can scatter them cheaply. Where
only part of a Jacobian has a closed form, the rest is central-differenced
with step :data:`FD_STEP`.

Most contact residuals are squares (``1/2 |d| d``, ``1/2 |v|^2``) whose slope
vanishes on the constraint surface. Such blocks also carry a *root* form
(``d`` itself, or the vector ``v``) with the same zero set and sign, which
is what the solver iterates on; values and tolerances use the squared form.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import (
    _BOX_FACES,
    ConvexShape,
    RaycastMiss,
    Shape,
    as_shape,
    bounding_gap,
    cast,
    contact,
    proj,
    proj2d,
    shadow,
)
from .liegroup import RelPose, exp_so3, log_so3, rotate_point_jacobian
from .scenegraph import KinematicTimeline, PoseSnapshot
from .symbolic import ActionSkeleton

# differs from the default gradient-check step so the check is not circular
FD_STEP = 3e-7
RAY_MISS_PENALTY = 1e3
# escape-direction bias (m) for placements: an object sunk into its support
# leaves upward unless another exit is at least this much shallower
PLACE_LIFT = 1e-3


class AssemblyError(ValueError):
    """A skeleton cannot be turned into an NLP for this scene."""


class Kind(enum.Enum):
    EQ = "eq"
    INEQ = "ineq"


@dataclass(frozen=True)
class ObjectiveConfig:
    alpha: float = 1.0
    beta: float = 0.2

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ValueError("alpha and beta must be non-negative and not both zero")


@dataclass(eq=False)
class ConstraintBlock:
    """Residual group attached to a few timesteps."""

    name: str
    kind: Kind
    dim: int
    timesteps: tuple[int, ...]
    value: Callable[[PoseSnapshot], np.ndarray] = field(repr=False)
    jacobian: Callable[[PoseSnapshot], tuple[np.ndarray, np.ndarray]] = field(repr=False)
    # unsquared residual r with r = 0 (eq) or r <= 0 (ineq) exactly where the
    # value is; None means the value is already well-conditioned
    root: Callable[[PoseSnapshot], np.ndarray] | None = field(default=None, repr=False)
    root_jacobian: Callable[[PoseSnapshot], tuple[np.ndarray, np.ndarray]] | None = field(default=None, repr=False)
    # optional stand-in for root_jacobian in the solver's Gauss-Newton model;
    # it must agree with the exact one on J^T r
    model_jacobian: Callable[[PoseSnapshot], tuple[np.ndarray, np.ndarray]] | None = field(default=None, repr=False)

    def columns(self) -> np.ndarray:
        return np.concatenate([np.arange(6 * s, 6 * s + 6) for s in self.timesteps]) if self.timesteps else np.zeros(0, int)


def _fd(f, x, cols, h=FD_STEP):
    """Central differences of scalar/vector ``f`` over ``x[cols]``."""
    x = np.array(x, dtype=float)
    out = []
    for c in cols:
        old = x[c]
        x[c] = old + h
        fp = np.atleast_1d(f(x))
        x[c] = old - h
        fm = np.atleast_1d(f(x))
        x[c] = old
        out.append((fp - fm) / (2.0 * h))
    return np.array(out).T if out else np.zeros((0, 0))


# --- point / shape primitives -----------------------------------------------------


def _signed_sq_point(x, shape) -> tuple[float, np.ndarray]:
    """min over pieces of 1/2 sign(d.n)|d|^2 and its gradient s*d."""
    best = None
    for piece in as_shape(shape).pieces:
        d = x - proj(x, piece)
        s = -1.0 if piece.contains(x) else 1.0
        val = 0.5 * s * float(d @ d)
        if best is None or val < best[0]:
            best = (val, s * d)
    return best


def _unit(v) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 1e-12 else np.zeros_like(v)


def _signed_point(x, shape) -> tuple[float, np.ndarray]:
    """min over pieces of sign(d.n)|d| and its gradient (unit outward direction)."""
    best = None
    for piece in as_shape(shape).pieces:
        d = x - proj(x, piece)
        s = -1.0 if piece.contains(x) else 1.0
        val = s * float(np.linalg.norm(d))
        if best is None or val < best[0]:
            best = (val, s * _unit(d))
    return best


def f_pick(xi_t, a) -> tuple[float, np.ndarray]:
    """End-effector point inside object ``a``: 1/2 sign |d|^2 <= 0."""
    xi_t = np.asarray(xi_t, dtype=float)
    val, g = _signed_sq_point(xi_t[:3], a)
    J = np.zeros(6)
    J[:3] = g
    return val, J


def pick_root(xi_t, a) -> tuple[float, np.ndarray]:
    """Signed distance of the control point to ``a`` and its 1x6 Jacobian."""
    val, g = _signed_point(np.asarray(xi_t, dtype=float)[:3], a)
    J = np.zeros(6)
    J[:3] = g
    return val, J


def _touch_distance(xi_t, a, b, lift=0.0) -> float:
    return contact((xi_t[:3], exp_so3(xi_t[3:6])), a, b, lift).d


def touch_root(xi_t, a, b, lift: float = 0.0) -> tuple[float, np.ndarray]:
    """Signed distance d between ``a`` and ``b``; J = (n, angular differences)."""
    xi_t = np.asarray(xi_t, dtype=float)
    c = contact((xi_t[:3], exp_so3(xi_t[3:6])), a, b, lift)
    J = np.zeros(6)
    J[:3] = c.normal
    J[3:] = _fd(lambda x: _touch_distance(x, a, b, lift), xi_t, [3, 4, 5])[0]
    return c.d, J


def _touch_value(xi_t, a, b, lift=0.0) -> float:
    d = contact((xi_t[:3], exp_so3(xi_t[3:6])), a, b, lift).d
    return 0.5 * abs(d) * d


def f_touch(xi_t, a, b, lift: float = 0.0) -> tuple[float, np.ndarray]:
    """Surfaces of ``a`` (posed by xi_t in b) and ``b`` in contact: 1/2 |d| d = 0.

    ``lift`` is forwarded to :func:`contact`; placements use ``PLACE_LIFT``.
    """
    xi_t = np.asarray(xi_t, dtype=float)
    c = contact((xi_t[:3], exp_so3(xi_t[3:6])), a, b, lift)
    J = np.zeros(6)
    J[:3] = abs(c.d) * c.normal
    J[3:] = _fd(lambda x: _touch_value(x, a, b, lift), xi_t, [3, 4, 5])[0]
    return 0.5 * abs(c.d) * c.d, J


def f_support_area(xi_t, a, b, root: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Each piece's centre of mass over the shadow of ``b``; one row per piece of ``a``.

    With ``root`` the rows are signed 2-D distances instead of their signed squares.
    """
    xi_t = np.asarray(xi_t, dtype=float)
    p, r = xi_t[:3], xi_t[3:6]
    R = exp_so3(r)
    poly = shadow(b)
    pieces = as_shape(a).pieces
    vals = np.zeros(len(pieces))
    J = np.zeros((len(pieces), 6))
    for k, piece in enumerate(pieces):
        c = (p + R @ piece.com)[:2]
        d = c - proj2d(c, poly)
        inside = bool(np.all(poly.normals @ c + poly.offsets <= 0.0))
        s = -1.0 if inside else 1.0
        if root:
            vals[k] = s * float(np.linalg.norm(d))
            g = s * _unit(d)
        else:
            vals[k] = 0.5 * s * float(d @ d)
            g = s * d
        J[k, :2] = g
        J[k, 3:] = g @ rotate_point_jacobian(r, piece.com)[:2]
    return vals, J


def f_support_normal(xi_t) -> tuple[float, np.ndarray]:
    """Placed frame above the support's frame origin: -z <= 0."""
    return -float(xi_t[2]), np.array([0.0, 0.0, -1.0, 0.0, 0.0, 0.0])


def _push_contact(xi_t, pose_s, p_next, a, b):
    """(d in a's frame, piece, point in a's frame, Q), or None on a ray miss."""
    ps, Rs = pose_s
    delta = Rs.T @ (np.asarray(p_next) - ps)
    try:
        hit = cast(as_shape(b).com, -delta, b)
    except RaycastMiss:
        return None
    q, Q = xi_t[:3], exp_so3(xi_t[3:6])
    hit_a = Q.T @ (hit - q)
    best, where = None, None
    for piece in as_shape(a).pieces:
        d = hit_a - proj(hit_a, piece)
        if best is None or d @ d < best @ best:
            best, where = d, piece
    return best, where, hit_a, Q


def _offset_jacobian(x, piece: ConvexShape) -> np.ndarray:
    """Derivative of ``x - proj(x, piece)``: projector onto the active normals."""
    x = np.asarray(x, dtype=float)
    if piece.kind == "box":
        local = x - piece.center
        out = np.abs(local) > piece.half_extents
        if not np.any(out):
            gaps = [piece.half_extents[ax] - sg * local[ax] for ax, sg in _BOX_FACES]
            out = np.zeros(3, bool)
            out[_BOX_FACES[int(np.argmin(gaps))][0]] = True
        return np.diag(out.astype(float))
    g = piece.normals @ x + piece.offsets
    if np.all(g <= 0.0):
        n = piece.normals[int(np.argmax(g))]
        return np.outer(n, n)
    pb = proj(x, piece)
    N = piece.normals[np.abs(piece.normals @ pb + piece.offsets) <= 1e-9 * max(1.0, float(np.max(np.abs(pb))))]
    if len(N) == 0:
        return np.eye(3)
    _, sv, Vt = np.linalg.svd(N)
    V = Vt[: int(np.sum(sv > 1e-9))]
    return V.T @ V


def push_normal_residual(xi_t, pose_s, p_next, a, b) -> tuple[float, np.ndarray | None]:
    """1/2 |p_b - p_a|^2 and d = p_b - p_a in b's frame (None on a ray miss).

    ``xi_t`` poses the pusher ``a`` in ``b``; ``pose_s`` is b's pose in the
    support before the push and ``p_next`` its position after it.
    """
    found = _push_contact(xi_t, pose_s, p_next, a, b)
    if found is None:
        return RAY_MISS_PENALTY, None
    best, _, _, Q = found
    return 0.5 * float(best @ best), Q @ best


def push_normal_position_jacobian(xi_t, pose_s, p_next, a, b) -> np.ndarray:
    """d(p_b - p_a)/d(pusher position), zero on a ray miss."""
    found = _push_contact(xi_t, pose_s, p_next, a, b)
    if found is None:
        return np.zeros((3, 3))
    _, piece, hit_a, Q = found
    return -Q @ _offset_jacobian(hit_a, piece) @ Q.T


def push_normal_root(xi_t, pose_s, p_next, a, b) -> np.ndarray:
    """The vector p_b - p_a whose half squared norm is the push-normal residual."""
    f, d = push_normal_residual(xi_t, pose_s, p_next, a, b)
    if d is None:
        return np.array([np.sqrt(2.0 * f), 0.0, 0.0])
    return d


def f_push_direction(xi_next, xi_s) -> tuple[float, np.ndarray]:
    """1/2 |(dz, drx, dry)|^2 of the pushed object's displacement; J w.r.t. xi_next."""
    d = np.asarray(xi_next, dtype=float) - np.asarray(xi_s, dtype=float)
    r = d[[2, 3, 4]]
    J = np.zeros(6)
    J[[2, 3, 4]] = r
    return 0.5 * float(r @ r), J


# --- objective ------------------------------------------------------------------------


def objective_travel(snap: PoseSnapshot, ee, cfg: ObjectiveConfig, grad: bool = True):
    """Squared linear plus weighted squared angular end-effector travel.

    Returns ``(value, gradient)``; the gradient is None when ``grad`` is False.
    """
    tl = snap.tl
    f = 0.0
    g = np.zeros(tl.n_vars) if grad else None
    J_prev = snap.position_jacobian(ee, 0) if grad and cfg.alpha else None
    for t in range(1, tl.horizon + 1):
        if cfg.alpha:
            dx = snap.world_pose(ee, t)[0] - snap.world_pose(ee, t - 1)[0]
            f += cfg.alpha * float(dx @ dx)
            if grad:
                J = snap.position_jacobian(ee, t)
                g += 2.0 * cfg.alpha * dx @ (J - J_prev)
                J_prev = J
        if cfg.beta:
            if grad:
                sq, gsq = snap.squared_orientation_distance_gradient(ee, t)
                g += cfg.beta * gsq
            else:
                R0, R1 = snap.world_pose(ee, t - 1)[1], snap.world_pose(ee, t)[1]
                sq = float(np.linalg.norm(log_so3(R0.T @ R1))) ** 2
            f += cfg.beta * sq
    return f, g


def travel_gauss_newton(snap: PoseSnapshot, ee, cfg: ObjectiveConfig) -> np.ndarray:
    """Gauss-Newton curvature of the travel objective (sum of residual outer products)."""
    tl = snap.tl
    H = np.zeros((tl.n_vars, tl.n_vars))
    J_prev = snap.position_jacobian(ee, 0)
    for t in range(1, tl.horizon + 1):
        J = snap.position_jacobian(ee, t)
        if cfg.alpha:
            dJ = J - J_prev
            H += 2.0 * cfg.alpha * dJ.T @ dJ
        J_prev = J
        if cfg.beta:
            _, gth = snap.orientation_distance_gradient(ee, t)
            H += 2.0 * cfg.beta * np.outer(gth, gth)
    return H


# --- blocks ------------------------------------------------------------------------------


def _var(snap: PoseSnapshot, t: int) -> np.ndarray:
    return snap.xi[6 * t : 6 * t + 6]


def _cols(t: int) -> np.ndarray:
    return np.arange(6 * t, 6 * t + 6)


def pin_block(t: int, target) -> ConstraintBlock:
    target = np.asarray(target, dtype=float).copy()
    return ConstraintBlock(
        f"pin(t={t})",
        Kind.EQ,
        6,
        (t,),
        lambda s: _var(s, t) - target,
        lambda s: (_cols(t), np.eye(6)),
    )


def pick_block(t: int, a_name: str, a: Shape) -> ConstraintBlock:
    return ConstraintBlock(
        f"pick({a_name}, t={t})",
        Kind.INEQ,
        1,
        (t,),
        lambda s: np.array([f_pick(_var(s, t), a)[0]]),
        lambda s: (_cols(t), f_pick(_var(s, t), a)[1][None, :]),
        lambda s: np.array([pick_root(_var(s, t), a)[0]]),
        lambda s: (_cols(t), pick_root(_var(s, t), a)[1][None, :]),
    )


def touch_block(t: int, names: tuple[str, str], a: Shape, b: Shape, lift: float = 0.0) -> ConstraintBlock:
    return ConstraintBlock(
        f"touch({names[0]}, {names[1]}, t={t})",
        Kind.EQ,
        1,
        (t,),
        lambda s: np.array([_touch_value(_var(s, t), a, b, lift)]),
        lambda s: (_cols(t), f_touch(_var(s, t), a, b, lift)[1][None, :]),
        lambda s: np.array([_touch_distance(_var(s, t), a, b, lift)]),
        lambda s: (_cols(t), touch_root(_var(s, t), a, b, lift)[1][None, :]),
    )


def support_area_block(t: int, names, a: Shape, b: Shape) -> ConstraintBlock:
    return ConstraintBlock(
        f"support_area({names[0]}, {names[1]}, t={t})",
        Kind.INEQ,
        len(as_shape(a).pieces),
        (t,),
        lambda s: f_support_area(_var(s, t), a, b)[0],
        lambda s: (_cols(t), f_support_area(_var(s, t), a, b)[1]),
        lambda s: f_support_area(_var(s, t), a, b, root=True)[0],
        lambda s: (_cols(t), f_support_area(_var(s, t), a, b, root=True)[1]),
    )


def support_normal_block(t: int, names) -> ConstraintBlock:
    return ConstraintBlock(
        f"support_normal({names[0]}, {names[1]}, t={t})",
        Kind.INEQ,
        1,
        (t,),
        lambda s: np.array([f_support_normal(_var(s, t))[0]]),
        lambda s: (_cols(t), f_support_normal(_var(s, t))[1][None, :]),
    )


def _pose_before(tl: KinematicTimeline, b, c, t_next: int):
    """(s, getter) for b's pose in c before timestep ``t_next``."""
    s = tl.last_placed(b, c, t_next)
    if s < 0:
        const = tl.initial_pose[tl.index(b)]
        return s, lambda x: const
    return s, lambda x: (x[6 * s : 6 * s + 3], exp_so3(x[6 * s + 3 : 6 * s + 6]))


def push_normal_block(tl, t: int, names, a: Shape, b: Shape) -> ConstraintBlock:
    """Contact point on the pusher lies where the push line leaves b's rear."""
    s, pose_s = _pose_before(tl, names[1], names[2], t + 1)
    steps = tuple(sorted({t, t + 1} | ({s} if s >= 0 else set())))

    def residual(x):
        return push_normal_residual(x[6 * t : 6 * t + 6], pose_s(x), x[6 * (t + 1) : 6 * (t + 1) + 3], a, b)

    def root(x):
        return push_normal_root(x[6 * t : 6 * t + 6], pose_s(x), x[6 * (t + 1) : 6 * (t + 1) + 3], a, b)

    def value(snap):
        return np.array([residual(snap.xi)[0]])

    def jac(snap):
        cols = np.concatenate([_cols(k) for k in steps])
        J = np.zeros((1, cols.size))
        f, d = residual(snap.xi)
        if d is None:
            return cols, J
        pos = {c: j for j, c in enumerate(cols)}
        J[0, [pos[6 * t + k] for k in range(3)]] = -d
        fd_cols = [6 * t + 3, 6 * t + 4, 6 * t + 5] + list(range(6 * (t + 1), 6 * (t + 1) + 3))
        if s >= 0:
            fd_cols += list(range(6 * s, 6 * s + 6))
        G = _fd(lambda x: residual(x)[0], snap.xi, fd_cols)
        J[0, [pos[c] for c in fd_cols]] = G[0]
        return cols, J

    def root_jac(snap):
        cols = np.concatenate([_cols(k) for k in steps])
        J = np.zeros((3, cols.size))
        if residual(snap.xi)[1] is None:
            return cols, J
        pos = {c: j for j, c in enumerate(cols)}
        # d moves with the pusher only across the normals of the nearest feature
        J[:, [pos[6 * t + k] for k in range(3)]] = push_normal_position_jacobian(
            snap.xi[6 * t : 6 * t + 6], pose_s(snap.xi), snap.xi[6 * (t + 1) : 6 * (t + 1) + 3], a, b
        )
        fd_cols = [6 * t + 3, 6 * t + 4, 6 * t + 5] + list(range(6 * (t + 1), 6 * (t + 1) + 3))
        if s >= 0:
            fd_cols += list(range(6 * s, 6 * s + 6))
        J[:, [pos[c] for c in fd_cols]] = _fd(root, snap.xi, fd_cols)
        return cols, J

    def model_jac(snap):
        # -I in place of the normal projector on the pusher's position: same
        # J^T d since d is normal, but curvature in every direction, which
        # keeps the hit point from sliding along a face of the pusher
        cols = np.concatenate([_cols(k) for k in steps])
        J = np.zeros((3, cols.size))
        if residual(snap.xi)[1] is None:
            return cols, J
        pos = {c: j for j, c in enumerate(cols)}
        J[:, [pos[6 * t + k] for k in range(3)]] = -np.eye(3)
        fd_cols = [6 * t + 3, 6 * t + 4, 6 * t + 5] + list(range(6 * (t + 1), 6 * (t + 1) + 3))
        if s >= 0:
            fd_cols += list(range(6 * s, 6 * s + 6))
        J[:, [pos[c] for c in fd_cols]] = _fd(root, snap.xi, fd_cols)
        return cols, J

    return ConstraintBlock(
        f"push_normal({', '.join(names)}, t={t})",
        Kind.EQ,
        1,
        steps,
        value,
        jac,
        lambda snap: root(snap.xi),
        root_jac,
        model_jac,
    )


def push_direction_block(tl, t_next: int, names) -> ConstraintBlock:
    """Pushed object stays in the support plane between its last placement and t_next."""
    b, c = names[1], names[2]
    s, _ = _pose_before(tl, b, c, t_next)
    if s < 0:
        p0, R0 = tl.initial_pose[tl.index(b)]
        const = RelPose.from_pose((p0, R0)).vector()
    steps = (s, t_next) if s >= 0 else (t_next,)

    def prev(x):
        return x[6 * s : 6 * s + 6] if s >= 0 else const

    def value(snap):
        return np.array([f_push_direction(_var(snap, t_next), prev(snap.xi))[0]])

    def jac(snap):
        _, J = f_push_direction(_var(snap, t_next), prev(snap.xi))
        if s >= 0:
            return np.concatenate([_cols(s), _cols(t_next)]), np.concatenate([-J, J])[None, :]
        return _cols(t_next), J[None, :]

    sel = np.zeros((3, 6))
    sel[[0, 1, 2], [2, 3, 4]] = 1.0

    def root(snap):
        return (_var(snap, t_next) - prev(snap.xi))[[2, 3, 4]]

    def root_jac(snap):
        if s >= 0:
            return np.concatenate([_cols(s), _cols(t_next)]), np.hstack([-sel, sel])
        return _cols(t_next), sel

    return ConstraintBlock(f"push_direction({b}, {c}, t={t_next})", Kind.EQ, 1, steps, value, jac, root, root_jac)


def workspace_block(tl, t: int, name: str, base, radius: float) -> ConstraintBlock:
    """Frame origin within the robot's reach: |x - base|^2 - R^2 <= 0."""
    base = np.asarray(base, dtype=float)
    steps = tuple(sorted(tl.ancestors_vars(name, t)))
    cols = np.concatenate([_cols(k) for k in steps]) if steps else np.zeros(0, int)

    def value(snap):
        x = snap.world_pose(name, t)[0] - base
        return np.array([float(x @ x) - radius * radius])

    def jac(snap):
        x = snap.world_pose(name, t)[0] - base
        return cols, (2.0 * x @ snap.position_jacobian(name, t))[None, cols]

    return ConstraintBlock(f"workspace({name}, t={t})", Kind.INEQ, 1, steps, value, jac)


def collision_pairs(tl: KinematicTimeline, t: int, shapes: dict, ee: str) -> list[tuple[str, str]]:
    """Manipulated x environment pairs at t.

    The manipulated set is the chain from the end-effector up to control(t)
    plus everything riding on control(t); the target of t is left to the
    action's own contact constraints.
    """
    control, target = tl.control[t], tl.target[t]
    chain = tl.chain(ee, t)
    if control in chain:
        chain = chain[: chain.index(control) + 1]
    moved = set(chain) | tl.subtree(control, t)
    names = tl.names
    M = [names[i] for i in sorted(moved) if shapes.get(names[i]) is not None]
    E = [
        names[i]
        for i in range(1, len(names))
        if i not in moved and i != target and shapes.get(names[i]) is not None
    ]
    return [(m, e) for m in M for e in E]


def f_collision(snap: PoseSnapshot, t: int, pairs, shapes) -> tuple[float, tuple[str, str]]:
    """-min pair distance and the minimizing pair (bounding spheres prune far pairs)."""
    best, arg = np.inf, None
    for m, e in pairs:
        pm, pe = snap.world_pose(m, t), snap.world_pose(e, t)
        rel = (pe[1].T @ (pm[0] - pe[0]), pe[1].T @ pm[1])
        if bounding_gap(rel, shapes[m], shapes[e]) >= best:
            continue
        d = contact(rel, shapes[m], shapes[e]).d
        if d < best:
            best, arg = d, (m, e)
    return -best, arg


def _pair_distance(tl, x, t, m, e, shapes) -> float:
    snap = tl.at(x)
    pm, pe = snap.world_pose(m, t), snap.world_pose(e, t)
    rel = (pe[1].T @ (pm[0] - pe[0]), pe[1].T @ pm[1])
    return contact(rel, shapes[m], shapes[e]).d


def collision_block(tl, t: int, pairs, shapes) -> ConstraintBlock:
    frames = {f for pair in pairs for f in pair}
    steps = tuple(sorted(set().union(*(tl.ancestors_vars(f, t) for f in frames))))
    cols_all = np.concatenate([_cols(k) for k in steps]) if steps else np.zeros(0, int)

    def value(snap):
        return np.array([f_collision(snap, t, pairs, shapes)[0]])

    def jac(snap):
        _, (m, e) = f_collision(snap, t, pairs, shapes)
        # variables shared by both chains move the pair rigidly
        live = sorted(tl.ancestors_vars(m, t) ^ tl.ancestors_vars(e, t))
        fd_cols = [c for k in live for c in range(6 * k, 6 * k + 6)]
        J = np.zeros((1, cols_all.size))
        if fd_cols:
            G = _fd(lambda x: -_pair_distance(tl, x, t, m, e, shapes), snap.xi, fd_cols)
            pos = {c: j for j, c in enumerate(cols_all)}
            J[0, [pos[c] for c in fd_cols]] = G[0]
        return cols_all, J

    return ConstraintBlock(f"collision(t={t})", Kind.INEQ, 1, steps, value, jac)


# --- assembly ------------------------------------------------------------------------------


@dataclass(eq=False)
class NlpProblem:
    """Objective, constraint stack and the kinematic timeline of one skeleton."""

    timeline: KinematicTimeline
    blocks: list[ConstraintBlock]
    objective_cfg: ObjectiveConfig
    ee: str
    skeleton: ActionSkeleton | None = None
    objective_fn: Callable | None = field(default=None, repr=False)
    objective_curvature_fn: Callable | None = field(default=None, repr=False)

    @property
    def n_vars(self) -> int:
        return self.timeline.n_vars

    def snapshot(self, xi) -> PoseSnapshot:
        return self.timeline.at(xi)

    def objective(self, xi, grad: bool = True):
        snap = xi if isinstance(xi, PoseSnapshot) else self.snapshot(xi)
        if self.objective_fn is not None:
            f, g = self.objective_fn(snap)
            return f, (g if grad else None)
        return objective_travel(snap, self.ee, self.objective_cfg, grad)

    def objective_curvature(self, xi) -> np.ndarray:
        """Positive semi-definite curvature model of the objective."""
        snap = xi if isinstance(xi, PoseSnapshot) else self.snapshot(xi)
        if self.objective_curvature_fn is not None:
            return self.objective_curvature_fn(snap)
        if self.objective_fn is not None:
            return np.zeros((self.n_vars, self.n_vars))
        return travel_gauss_newton(snap, self.ee, self.objective_cfg)

    def block_values(self, xi) -> list[np.ndarray]:
        snap = xi if isinstance(xi, PoseSnapshot) else self.snapshot(xi)
        return [b.value(snap) for b in self.blocks]

    def block_violation(self, block: ConstraintBlock, values: np.ndarray) -> float:
        if values.size == 0:
            return 0.0
        if block.kind is Kind.EQ:
            return float(np.max(np.abs(values)))
        return float(max(np.max(values), 0.0))

    def violations(self, xi) -> dict[str, float]:
        return {b.name: self.block_violation(b, v) for b, v in zip(self.blocks, self.block_values(xi))}

    def max_violation(self, xi) -> float:
        v = self.violations(xi)
        return max(v.values()) if v else 0.0

    def dense_jacobian(self, block: ConstraintBlock, xi) -> np.ndarray:
        snap = xi if isinstance(xi, PoseSnapshot) else self.snapshot(xi)
        cols, J = block.jacobian(snap)
        out = np.zeros((block.dim, self.n_vars))
        out[:, cols] = J
        return out


def _shape_of(scene, name: str) -> Shape:
    s = scene.shape(name)
    if s is None:
        raise AssemblyError(f"{name} has no shape but takes part in a contact constraint")
    return s


def assemble_nlp(skeleton: ActionSkeleton, scene, cfg: ObjectiveConfig | None = None) -> NlpProblem:
    """One timestep per pick/place, two per push; xi_0 pinned to the initial end-effector pose."""
    cfg = cfg or ObjectiveConfig()
    ee = scene.ee
    tl = scene.timeline().attach(ee, "world", 0)
    t = 1
    for action in skeleton.actions:
        if action.name not in ("pick", "place", "push"):
            raise AssemblyError(f"unknown action {action.name!r}")
        for control, target in action.frames(ee):
            try:
                tl = tl.attach(control, target, t)
            except (ValueError, KeyError) as exc:
                raise AssemblyError(f"{action} at t={t}: {exc}") from None
            t += 1

    shapes = {n: scene.shape(n) for n in scene.names if n != "world"}
    blocks = [pin_block(0, scene.by_name(ee).pose.vector())]
    t = 1
    for action in skeleton.actions:
        args = action.args
        if action.name == "pick":
            blocks.append(pick_block(t, args[0], _shape_of(scene, args[0])))
        elif action.name == "place":
            a, b = _shape_of(scene, args[0]), _shape_of(scene, args[1])
            blocks += [
                touch_block(t, args, a, b, PLACE_LIFT),
                support_area_block(t, args, a, b),
                support_normal_block(t, args),
            ]
        else:
            a, b = _shape_of(scene, args[0]), _shape_of(scene, args[1])
            _shape_of(scene, args[2])
            blocks += [
                touch_block(t, args[:2], a, b),
                push_normal_block(tl, t, args, a, b),
                push_direction_block(tl, t + 1, args),
                workspace_block(tl, t + 1, args[1], scene.base, scene.workspace_radius),
            ]
        for k in range(action.span):
            pairs = collision_pairs(tl, t + k, shapes, ee)
            if pairs:
                blocks.append(collision_block(tl, t + k, pairs, shapes))
        t += action.span
    return NlpProblem(tl, blocks, cfg, ee, skeleton)
