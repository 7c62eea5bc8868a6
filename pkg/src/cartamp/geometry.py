"""Convex-shape queries: projection, normals, signed distance, raycast, shadows.

Shapes are convex polytopes (boxes or hulls of vertex sets) described in
their own frame. Non-convex objects are :class:`Shape` unions of convex
pieces. Distances between separated polytopes come from GJK; penetration
depth comes from a separating-axis search over face normals and edge-edge
cross products, which for polytopes finds the same nearest facet of the
Minkowski difference that expanding-polytope refinement converges to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit
from scipy.spatial import ConvexHull, QhullError

from .liegroup import Pose

SURFACE_TOL = 1e-6
GJK_MAX_ITER = 64
GJK_REL_TOL = 1e-12
# Distances below this are handed to the penetration routine.
TOUCH_TOL = 1e-12

# Box faces in tie-break order: +x, -x, +y, -y, +z, -z.
_BOX_FACES = [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)]


class RaycastMiss(ValueError):
    """The ray does not intersect the shape."""


class NotOnSurface(ValueError):
    """A surface query was given a point away from the surface."""


@dataclass(frozen=True)
class ContactResult:
    """Signed distance and witness points of a pair of shapes.

    ``p_a`` is in the frame of shape a and ``p_b`` in the frame of shape b.
    ``normal`` is the unit direction, in b's frame, along which translating
    a increases ``d``.
    """

    d: float
    p_a: np.ndarray
    p_b: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True, eq=False)
class ConvexShape:
    kind: str
    vertices: np.ndarray
    com: np.ndarray
    half_extents: np.ndarray | None = None
    center: np.ndarray | None = None
    # Derived facet data, one row per planar face: n . x + offset <= 0 inside.
    normals: np.ndarray = field(repr=False, default=None)
    offsets: np.ndarray = field(repr=False, default=None)
    facets: tuple = field(repr=False, default=())
    edges: np.ndarray = field(repr=False, default=None)
    radius: float = 0.0
    volume: float = 0.0

    @classmethod
    def box(cls, half_extents, center=(0.0, 0.0, 0.0)) -> ConvexShape:
        h = np.asarray(half_extents, dtype=float).reshape(3)
        c = np.asarray(center, dtype=float).reshape(3)
        if np.any(h <= 0.0):
            raise ValueError(f"box half extents must be positive, got {h}")
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        verts = c + signs * h
        normals = np.zeros((6, 3))
        offsets = np.zeros(6)
        facets = []
        for k, (axis, s) in enumerate(_BOX_FACES):
            normals[k, axis] = s
            offsets[k] = -(s * c[axis] + h[axis])
            on = np.nonzero(signs[:, axis] == s)[0]
            facets.append(_order_polygon(verts, on, normals[k]))
        return cls(
            kind="box",
            vertices=verts,
            com=c.copy(),
            half_extents=h,
            center=c,
            normals=normals,
            offsets=offsets,
            facets=tuple(facets),
            edges=np.eye(3),
            radius=float(np.linalg.norm(h)),
            volume=float(8.0 * np.prod(h)),
        )

    @classmethod
    def hull(cls, vertices, com=None) -> ConvexShape:
        pts = np.asarray(vertices, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
            raise ValueError("a hull needs at least 4 vertices in 3-D")
        try:
            qh = ConvexHull(pts)
        except QhullError as exc:
            raise ValueError("hull vertices are degenerate (coplanar?)") from exc
        verts = pts[qh.vertices]
        normals, offsets = _merge_planes(qh.equations)
        facets = []
        for n, off in zip(normals, offsets):
            on = np.nonzero(np.abs(verts @ n + off) < 1e-9)[0]
            facets.append(_order_polygon(verts, on, n))
        centroid = _polyhedron_centroid(pts, qh)
        c = centroid if com is None else np.asarray(com, dtype=float)
        shape = cls(
            kind="hull",
            vertices=verts,
            com=c,
            normals=normals,
            offsets=offsets,
            facets=tuple(facets),
            edges=_edge_directions(facets),
            radius=float(np.max(np.linalg.norm(verts - c, axis=1))),
            volume=float(qh.volume),
        )
        if np.any(normals @ c + offsets > SURFACE_TOL):
            raise ValueError("center of mass lies outside the hull")
        return shape

    def contains(self, x, tol: float = 0.0) -> bool:
        return bool(np.all(self.normals @ x + self.offsets <= tol))


def _merge_planes(equations: np.ndarray):
    normals, offsets = [], []
    for eq in equations:
        n, off = eq[:3], eq[3]
        if any(np.allclose(n, m, atol=1e-9) and abs(off - o) < 1e-9 for m, o in zip(normals, offsets)):
            continue
        normals.append(n / np.linalg.norm(n))
        offsets.append(off / np.linalg.norm(n))
    return np.array(normals), np.array(offsets)


def _order_polygon(verts: np.ndarray, idx: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Vertices of a planar face ordered counter-clockwise about ``n``."""
    pts = verts[idx]
    c = pts.mean(axis=0)
    u = pts[0] - c
    u /= np.linalg.norm(u)
    w = np.cross(n, u)
    ang = np.arctan2((pts - c) @ w, (pts - c) @ u)
    return pts[np.argsort(ang)]


def _edge_directions(facets) -> np.ndarray:
    """Unit edge directions of a polytope, one per parallel class."""
    dirs: list[np.ndarray] = []
    for poly in facets:
        for e in np.roll(poly, -1, axis=0) - poly:
            e = e / np.linalg.norm(e)
            if not any(abs(e @ f) > 1.0 - 1e-9 for f in dirs):
                dirs.append(e)
    return np.array(dirs)


def _polyhedron_centroid(pts: np.ndarray, qh: ConvexHull) -> np.ndarray:
    ref = pts[qh.vertices].mean(axis=0)
    vol_sum = 0.0
    acc = np.zeros(3)
    for simplex in qh.simplices:
        a, b, c = pts[simplex]
        vol = abs(np.dot(a - ref, np.cross(b - ref, c - ref))) / 6.0
        vol_sum += vol
        acc += vol * (a + b + c + ref) / 4.0
    return acc / vol_sum


@dataclass(frozen=True, eq=False)
class Shape:
    """Union of convex pieces, all expressed in the owning frame."""

    pieces: tuple[ConvexShape, ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("a shape needs at least one convex piece")

    @property
    def convex(self) -> bool:
        return len(self.pieces) == 1

    # pieces are immutable, so the derived quantities are computed once

    @cached_property
    def com(self) -> np.ndarray:
        w = np.array([p.volume for p in self.pieces])
        return (w[:, None] * np.array([p.com for p in self.pieces])).sum(axis=0) / w.sum()

    @cached_property
    def vertices(self) -> np.ndarray:
        return np.vstack([p.vertices for p in self.pieces])

    @cached_property
    def radius(self) -> float:
        c = self.com
        return float(max(np.max(np.linalg.norm(p.vertices - c, axis=1)) for p in self.pieces))

    @cached_property
    def shadow(self) -> Polygon:
        return Polygon.from_points(self.vertices[:, :2])


def as_shape(s) -> Shape:
    if isinstance(s, Shape):
        return s
    # one wrapper per convex piece keeps the cached properties warm
    wrapped = _WRAPPED.get(id(s))
    if wrapped is None or wrapped.pieces[0] is not s:
        wrapped = _WRAPPED[id(s)] = Shape((s,))
    return wrapped


_WRAPPED: dict[int, Shape] = {}


# --- GJK ---------------------------------------------------------------------


@njit(cache=True)
def _solve_small(G, r, m, out):
    """Solve the m x m (m <= 3) system G x = r by Cramer's rule; False if singular."""
    if m == 1:
        if abs(G[0, 0]) <= 1e-14 * abs(G[0, 0] + 1e-300):
            return False
        out[0] = r[0] / G[0, 0]
        return G[0, 0] > 0.0
    if m == 2:
        det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
        if abs(det) <= 1e-14 * max(G[0, 0], G[1, 1]) ** 2:
            return False
        out[0] = (r[0] * G[1, 1] - G[0, 1] * r[1]) / det
        out[1] = (G[0, 0] * r[1] - r[0] * G[1, 0]) / det
        return True
    c00 = G[1, 1] * G[2, 2] - G[1, 2] * G[2, 1]
    c01 = G[1, 2] * G[2, 0] - G[1, 0] * G[2, 2]
    c02 = G[1, 0] * G[2, 1] - G[1, 1] * G[2, 0]
    det = G[0, 0] * c00 + G[0, 1] * c01 + G[0, 2] * c02
    scale = max(G[0, 0], max(G[1, 1], G[2, 2]))
    if abs(det) <= 1e-14 * scale**3:
        return False
    c10 = G[0, 2] * G[2, 1] - G[0, 1] * G[2, 2]
    c11 = G[0, 0] * G[2, 2] - G[0, 2] * G[2, 0]
    c12 = G[0, 1] * G[2, 0] - G[0, 0] * G[2, 1]
    c20 = G[0, 1] * G[1, 2] - G[0, 2] * G[1, 1]
    c21 = G[0, 2] * G[1, 0] - G[0, 0] * G[1, 2]
    c22 = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    out[0] = (c00 * r[0] + c10 * r[1] + c20 * r[2]) / det
    out[1] = (c01 * r[0] + c11 * r[1] + c21 * r[2]) / det
    out[2] = (c02 * r[0] + c12 * r[1] + c22 * r[2]) / det
    return True


@njit(cache=True)
def _closest_on_simplex(P, n):
    """Closest point to the origin on the hull of the first ``n`` rows of P.

    Brute force over all sub-simplices (at most 15). Returns (v, lam, mask):
    the point, barycentric weights over the n rows and the bit mask of the
    supporting sub-simplex.
    """
    best = np.inf
    best_mask = 1
    best_lam = np.zeros(4)
    best_v = P[0].copy()
    idx = np.zeros(4, dtype=np.int64)
    E = np.zeros((3, 3))
    G = np.zeros((3, 3))
    rhs = np.zeros(3)
    mu = np.zeros(3)
    v = np.zeros(3)
    for mask in range(1, 1 << n):
        k = 0
        for i in range(n):
            if (mask >> i) & 1:
                idx[k] = i
                k += 1
        p0 = P[idx[0]]
        m = k - 1
        lam0 = 1.0
        if m > 0:
            for j in range(m):
                for c in range(3):
                    E[j, c] = P[idx[j + 1], c] - p0[c]
            for i in range(m):
                rhs[i] = -(E[i, 0] * p0[0] + E[i, 1] * p0[1] + E[i, 2] * p0[2])
                for j in range(m):
                    G[i, j] = E[i, 0] * E[j, 0] + E[i, 1] * E[j, 1] + E[i, 2] * E[j, 2]
            if not _solve_small(G, rhs, m, mu):
                continue
            ok = True
            for j in range(m):
                lam0 -= mu[j]
                if mu[j] < 0.0:
                    ok = False
            if not ok or lam0 < 0.0:
                continue
        for c in range(3):
            v[c] = p0[c]
            for j in range(m):
                v[c] += mu[j] * E[j, c]
        nv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
        if nv < best:
            best = nv
            best_mask = mask
            best_lam[:] = 0.0
            best_lam[idx[0]] = lam0
            for j in range(m):
                best_lam[idx[j + 1]] = mu[j]
            best_v[:] = v
    return best_v, best_lam, best_mask


@njit(cache=True)
def _gjk(A, B, max_iter, rel_tol):
    """Distance between hulls of point sets A and B (same frame).

    Returns (dist, pa, pb, intersecting).
    """
    W = np.zeros((4, 3))
    IA = np.zeros(4, dtype=np.int64)
    IB = np.zeros(4, dtype=np.int64)
    lam = np.zeros(4)
    W[0] = A[0] - B[0]
    n = 1
    lam[0] = 1.0
    v = W[0].copy()
    for _ in range(max_iter):
        vv = v @ v
        if vv < 1e-30:
            return 0.0, np.zeros(3), np.zeros(3), True
        ia = np.argmax(A @ (-v))
        ib = np.argmax(B @ v)
        w = A[ia] - B[ib]
        if vv - v @ w <= rel_tol * vv:
            break
        dup = False
        for j in range(n):
            if IA[j] == ia and IB[j] == ib:
                dup = True
        if dup:
            break
        W[n] = w
        IA[n] = ia
        IB[n] = ib
        n += 1
        v, lam_full, mask = _closest_on_simplex(W, n)
        if n == 4 and mask == 15:
            return 0.0, np.zeros(3), np.zeros(3), True
        k = 0
        for i in range(n):
            if (mask >> i) & 1:
                W[k] = W[i]
                IA[k] = IA[i]
                IB[k] = IB[i]
                lam[k] = lam_full[i]
                k += 1
        n = k
    pa = np.zeros(3)
    pb = np.zeros(3)
    for j in range(n):
        pa += lam[j] * A[IA[j]]
        pb += lam[j] * B[IB[j]]
    d = np.sqrt(v @ v)
    return d, pa, pb, d < 1e-15


@njit(cache=True)
def _sat(A, B, NA, NB, EA, EB, lift):
    """Penetration depth of two overlapping polytopes (same frame).

    The boundary of the Minkowski difference A - B closest to the origin lies
    on a facet whose normal is a face normal of A, a negated face normal of B
    or a cross product of an edge of each, so the smallest support gap over
    those axes is exact. Returns (depth, axis, pb) with pa - pb = depth * axis.
    Ties (e.g. concentric boxes) go to the axis that lifts A upward in B's frame.
    With ``lift > 0`` the axis choice minimizes ``depth - lift * escape_z``
    instead, so an upward escape wins over anything less than ``lift`` shallower;
    the reported depth is still the true gap along the chosen axis.
    """
    best = np.inf
    best_key = np.inf
    axis = np.zeros(3)
    n = np.zeros(3)
    for src in range(3):
        if src == 0:
            m = NA.shape[0]
        elif src == 1:
            m = NB.shape[0]
        else:
            m = EA.shape[0] * EB.shape[0]
        for k in range(m):
            if src == 0:
                n[:] = NA[k]
            elif src == 1:
                n[:] = -NB[k]
            else:
                ea = EA[k // EB.shape[0]]
                eb = EB[k % EB.shape[0]]
                n[0] = ea[1] * eb[2] - ea[2] * eb[1]
                n[1] = ea[2] * eb[0] - ea[0] * eb[2]
                n[2] = ea[0] * eb[1] - ea[1] * eb[0]
                nn = np.sqrt(n @ n)
                if nn < 1e-9:
                    continue
                n /= nn
            for sign in (1.0, -1.0):
                if sign < 0.0 and src != 2:
                    continue
                amax = -np.inf
                for i in range(A.shape[0]):
                    v = sign * (A[i, 0] * n[0] + A[i, 1] * n[1] + A[i, 2] * n[2])
                    amax = max(amax, v)
                bmin = np.inf
                for i in range(B.shape[0]):
                    v = sign * (B[i, 0] * n[0] + B[i, 1] * n[1] + B[i, 2] * n[2])
                    bmin = min(bmin, v)
                h = amax - bmin
                key = h + lift * sign * n[2]
                # equal keys resolve toward the escape direction (-axis)
                # with the largest +z, i.e. against gravity in b's frame
                if key < best_key - 1e-12 or (key <= best_key + 1e-12 and -sign * n[2] > -axis[2] + 1e-12):
                    best_key = min(best_key, key)
                    best = h
                    axis[:] = sign * n
    # witness on b: centroid of B's support set along the axis
    bmin = np.inf
    for i in range(B.shape[0]):
        bmin = min(bmin, B[i] @ axis)
    pb = np.zeros(3)
    cnt = 0
    for i in range(B.shape[0]):
        if B[i] @ axis <= bmin + 1e-9:
            pb += B[i]
            cnt += 1
    return best, axis.copy(), pb / cnt


def _penetration(A: np.ndarray, B: np.ndarray, NA, NB, EA, EB, lift=0.0):
    """Signed depth (<= 0), witness points and normal for overlapping pieces."""
    depth, axis, pb = _sat(A, B, NA, NB, EA, EB, lift)
    pa = pb + depth * axis
    return -depth, pa, pb, -axis


def _convex_contact(A: np.ndarray, B: np.ndarray, NA, NB, EA, EB, lift=0.0):
    """Signed distance between two pieces expressed in the same frame.

    ``NA``/``EA`` are A's face normals and edge directions in that frame.
    """
    d, pa, pb, hit = _gjk(A, B, GJK_MAX_ITER, GJK_REL_TOL)
    if hit or d < TOUCH_TOL:
        return _penetration(A, B, NA, NB, EA, EB, lift)
    return d, pa, pb, (pa - pb) / d


def contact(pose_ab: Pose, a, b, lift: float = 0.0) -> ContactResult:
    """Signed distance between ``a`` posed at ``pose_ab`` in b's frame and ``b``.

    Unions of pieces report the minimizing piece pair. ``lift`` biases the
    escape direction of penetrating pieces toward b's +z (see ``_sat``); the
    default reports the minimum-depth escape.
    """
    p, R = pose_ab
    best = None
    for pa_piece in as_shape(a).pieces:
        A = pa_piece.vertices @ R.T + p
        NA = pa_piece.normals @ R.T
        EA = pa_piece.edges @ R.T
        for pb_piece in as_shape(b).pieces:
            d, wa, wb, n = _convex_contact(A, pb_piece.vertices, NA, pb_piece.normals, EA, pb_piece.edges, lift)
            if best is None or d < best[0]:
                best = (d, wa, wb, n)
    d, wa, wb, n = best
    return ContactResult(float(d), R.T @ (wa - p), wb, n)


def dist(pose_ab: Pose, a, b) -> float:
    return contact(pose_ab, a, b).d


def contact_world(pose_a: Pose, a, pose_b: Pose, b):
    """World-frame contact: returns (d, p_a_world, p_b_world, normal_world)."""
    Rb = pose_b[1]
    rel = (Rb.T @ (pose_a[0] - pose_b[0]), Rb.T @ pose_a[1])
    c = contact(rel, a, b)
    pa_w = pose_a[0] + pose_a[1] @ c.p_a
    pb_w = pose_b[0] + Rb @ c.p_b
    return c.d, pa_w, pb_w, Rb @ c.normal


def bounding_gap(pose_ab: Pose, a, b) -> float:
    """Cheap lower bound on ``dist`` from bounding spheres."""
    a, b = as_shape(a), as_shape(b)
    ca = pose_ab[0] + pose_ab[1] @ a.com
    return float(np.linalg.norm(ca - b.com) - a.radius - b.radius)


# --- surface queries ---------------------------------------------------------


def proj(x, a: ConvexShape) -> np.ndarray:
    """Closest point on the boundary of ``a`` to ``x`` (inside or outside)."""
    x = np.asarray(x, dtype=float)
    if a.kind == "box":
        local = x - a.center
        h = a.half_extents
        if np.any(np.abs(local) > h):
            return a.center + np.clip(local, -h, h)
        best_k, best = 0, np.inf
        for k, (axis, s) in enumerate(_BOX_FACES):
            gap = h[axis] - s * local[axis]
            if gap < best:
                best_k, best = k, gap
        axis, s = _BOX_FACES[best_k]
        out = local.copy()
        out[axis] = s * h[axis]
        return a.center + out
    g = a.normals @ x + a.offsets
    if np.all(g <= 0.0):
        k = int(np.argmax(g))
        return x - g[k] * a.normals[k]
    _, _, pb, _ = _gjk(x.reshape(1, 3), a.vertices, GJK_MAX_ITER, GJK_REL_TOL)
    return pb


def normal(p, a: ConvexShape, tol: float = SURFACE_TOL) -> np.ndarray:
    """Outward unit normal at a surface point; edges and vertices average faces."""
    p = np.asarray(p, dtype=float)
    g = a.normals @ p + a.offsets
    if np.any(g > tol):
        raise NotOnSurface(f"point {p} lies outside the shape")
    active = np.nonzero(np.abs(g) <= tol)[0]
    if active.size == 0:
        raise NotOnSurface(f"point {p} is not on the surface (gap {-g.max():.3g})")
    if active.size == 1:
        return a.normals[active[0]].copy()
    weights = np.ones(active.size)
    vdist = np.linalg.norm(a.vertices - p, axis=1)
    if vdist.min() <= tol:
        v = a.vertices[int(np.argmin(vdist))]
        for j, k in enumerate(active):
            weights[j] = _corner_angle(a.facets[k], v)
    n = (weights[:, None] * a.normals[active]).sum(axis=0)
    return n / np.linalg.norm(n)


def _corner_angle(poly: np.ndarray, v: np.ndarray) -> float:
    i = int(np.argmin(np.linalg.norm(poly - v, axis=1)))
    e1 = poly[(i + 1) % len(poly)] - poly[i]
    e2 = poly[i - 1] - poly[i]
    c = e1 @ e2 / (np.linalg.norm(e1) * np.linalg.norm(e2))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def cast(x, dx, a) -> np.ndarray:
    """First boundary crossing of the ray ``x + s dx, s >= 0``.

    A ray starting inside a convex piece returns its exit point; for unions
    the farthest exit among pieces containing the origin is used.
    """
    x = np.asarray(x, dtype=float)
    dx = np.asarray(dx, dtype=float)
    if not np.any(dx):
        raise RaycastMiss("zero ray direction")
    best_enter, best_exit = np.inf, -np.inf
    for piece in as_shape(a).pieces:
        span = _ray_span(x, dx, piece)
        if span is None:
            continue
        s_in, s_out = span
        if s_in < 0.0:
            best_exit = max(best_exit, s_out)
        else:
            best_enter = min(best_enter, s_in)
    if best_exit > -np.inf:
        return x + best_exit * dx
    if best_enter < np.inf:
        return x + best_enter * dx
    raise RaycastMiss(f"ray from {x} along {dx} misses the shape")


def _ray_span(x, dx, a: ConvexShape):
    denom = a.normals @ dx
    num = -(a.normals @ x + a.offsets)
    s_in, s_out = -np.inf, np.inf
    for dn, nm in zip(denom, num):
        if dn == 0.0:
            if nm < 0.0:
                return None
        elif dn > 0.0:
            s_out = min(s_out, nm / dn)
        else:
            s_in = max(s_in, nm / dn)
    if s_in > s_out or s_out < 0.0:
        return None
    return s_in, s_out


# --- 2-D shadows -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Polygon:
    """Convex polygon with counter-clockwise vertices and outward edge normals."""

    vertices: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray

    @classmethod
    def from_points(cls, pts) -> Polygon:
        pts = np.asarray(pts, dtype=float)
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]  # counter-clockwise in 2-D
        edges = np.roll(verts, -1, axis=0) - verts
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        offsets = -np.sum(normals * verts, axis=1)
        return cls(verts, normals, offsets)


def shadow(b) -> Polygon:
    """Convex hull of the shape's vertices projected on its frame's x-y plane."""
    return as_shape(b).shadow


def proj2d(x, poly: Polygon) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = poly.normals @ x + poly.offsets
    if np.all(g <= 0.0):
        k = int(np.argmax(g))
        return x - g[k] * poly.normals[k]
    best, best_p = np.inf, None
    m = len(poly.vertices)
    for i in range(m):
        a, b = poly.vertices[i], poly.vertices[(i + 1) % m]
        e = b - a
        s = np.clip((x - a) @ e / (e @ e), 0.0, 1.0)
        p = a + s * e
        dd = (x - p) @ (x - p)
        if dd < best:
            best, best_p = dd, p
    return best_p


def normal2d(p, poly: Polygon, tol: float = SURFACE_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    g = poly.normals @ p + poly.offsets
    if np.any(g > tol):
        raise NotOnSurface(f"point {p} lies outside the polygon")
    active = np.nonzero(np.abs(g) <= tol)[0]
    if active.size == 0:
        raise NotOnSurface(f"point {p} is not on the polygon boundary")
    n = poly.normals[active].sum(axis=0)
    return n / np.linalg.norm(n)
