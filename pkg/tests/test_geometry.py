import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cartamp.geometry import (
    ConvexShape,
    NotOnSurface,
    Polygon,
    RaycastMiss,
    Shape,
    cast,
    contact,
    dist,
    normal,
    normal2d,
    proj,
    proj2d,
    shadow,
)
from cartamp.liegroup import exp_so3, invert

I3 = np.eye(3)
CUBE = ConvexShape.box([0.5, 0.5, 0.5])
CUBE_HULL = ConvexShape.hull(CUBE.vertices)


def sample_box_surface(h, n, rng):
    """Uniform-ish samples on the surface of an axis-aligned box."""
    pts = rng.uniform(-1, 1, size=(n, 3)) * h
    axis = rng.integers(0, 3, size=n)
    sign = rng.choice([-1.0, 1.0], size=n)
    pts[np.arange(n), axis] = sign * h[axis]
    return pts


def box_gap_oracle(ca, ha, cb, hb):
    """Signed distance of two axis-aligned boxes."""
    g = np.abs(ca - cb) - (ha + hb)
    if np.all(g < 0):
        return float(np.max(g))
    return float(np.linalg.norm(np.maximum(g, 0.0)))


# --- proj ----------------------------------------------------------------------

def test_proj_above_cube_matches_brute_force(rng):
    x = np.array([0.0, 0.0, 1.0])
    pts = sample_box_surface(CUBE.half_extents, 10_000, rng)
    best = pts[np.argmin(np.linalg.norm(pts - x, axis=1))]
    p = proj(x, CUBE)
    np.testing.assert_allclose(p, [0, 0, 0.5])
    assert np.linalg.norm(p - x) <= np.linalg.norm(best - x) + 1e-12


def test_proj_surface_point_is_fixed():
    x = np.array([0.2, -0.1, 0.5])
    np.testing.assert_allclose(proj(x, CUBE), x)
    np.testing.assert_allclose(proj(x, CUBE_HULL), x, atol=1e-12)


def test_proj_of_center_is_a_face_center(rng):
    p = proj(np.zeros(3), CUBE)
    pts = sample_box_surface(CUBE.half_extents, 10_000, rng)
    assert np.linalg.norm(p) == pytest.approx(0.5)
    assert np.min(np.linalg.norm(pts, axis=1)) >= 0.5 - 1e-12
    # ties break toward the first face in +x, -x, +y, -y, +z, -z order
    np.testing.assert_allclose(p, [0.5, 0, 0])


@settings(max_examples=200)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_proj_idempotent(x):
    for shape in (CUBE, CUBE_HULL):
        p = proj(np.array(x), shape)
        np.testing.assert_allclose(proj(p, shape), p, atol=1e-12)


def test_hull_proj_agrees_with_box(rng):
    for _ in range(200):
        x = rng.uniform(-1.5, 1.5, size=3)
        a, b = proj(x, CUBE), proj(x, CUBE_HULL)
        assert np.linalg.norm(a - x) == pytest.approx(np.linalg.norm(b - x), abs=1e-12)


# --- normal --------------------------------------------------------------------

def test_normal_top_face():
    np.testing.assert_allclose(normal([0, 0, 0.5], CUBE), [0, 0, 1])


def test_normal_top_x_edge_is_average():
    expected = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    np.testing.assert_allclose(normal([0.5, 0, 0.5], CUBE), expected)
    np.testing.assert_allclose(normal([0.5, 0, 0.5], CUBE_HULL), expected, atol=1e-12)


def test_normal_side_face():
    np.testing.assert_allclose(normal([0.5, 0, 0], CUBE), [1, 0, 0])


def test_normal_vertex_is_angle_weighted():
    np.testing.assert_allclose(normal([0.5, 0.5, 0.5], CUBE_HULL), np.ones(3) / np.sqrt(3), atol=1e-12)


def test_normal_rejects_interior_and_exterior_points():
    with pytest.raises(NotOnSurface):
        normal([0, 0, 0], CUBE)
    with pytest.raises(NotOnSurface):
        normal([0, 0, 0.7], CUBE)


# --- contact / dist ------------------------------------------------------------

def test_contact_touching_cubes():
    r = contact((np.array([0, 0, 1.0]), I3), CUBE, CUBE)
    assert r.d == pytest.approx(0.0, abs=1e-12)


def test_contact_separated_cubes():
    r = contact((np.array([0, 0, 1.2]), I3), CUBE, CUBE)
    assert r.d == pytest.approx(0.2, abs=1e-12)
    assert r.p_a[2] == pytest.approx(-0.5)
    assert r.p_b[2] == pytest.approx(0.5)
    np.testing.assert_allclose(r.normal, [0, 0, 1], atol=1e-12)


def test_contact_overlapping_cubes():
    r = contact((np.array([0, 0, 0.8]), I3), CUBE, CUBE)
    assert r.d == pytest.approx(-0.2, abs=1e-12)
    assert r.p_a[2] == pytest.approx(-0.5)
    assert r.p_b[2] == pytest.approx(0.5)


@pytest.mark.parametrize("z,d", [(1.0, 0.0), (1.2, 0.2), (0.8, -0.2)])
def test_dist_matches_contact_examples(z, d):
    assert dist((np.array([0, 0, z]), I3), CUBE, CUBE) == pytest.approx(d, abs=1e-12)


def test_contact_witness_points_separated(rng):
    for _ in range(200):
        pose = (rng.uniform(-1, 1, 3) + [0, 0, 2.0], exp_so3(rng.normal(size=3)))
        r = contact(pose, CUBE, CUBE_HULL)
        if r.d <= 0:
            continue
        pa_b = pose[0] + pose[1] @ r.p_a
        assert np.linalg.norm(pa_b - r.p_b) == pytest.approx(r.d, abs=1e-9)


def test_contact_axis_aligned_box_oracle_1000(rng):
    worst = 0.0
    for _ in range(1000):
        ha, hb = rng.uniform(0.05, 0.5, 3), rng.uniform(0.05, 0.5, 3)
        ca = rng.uniform(-0.8, 0.8, 3)
        a, b = ConvexShape.box(ha), ConvexShape.box(hb)
        d = dist((ca, I3), a, b)
        worst = max(worst, abs(d - box_gap_oracle(ca, ha, np.zeros(3), hb)))
    assert worst < 1e-6


def test_dist_symmetric_under_inverted_pose(rng):
    hull = ConvexShape.hull(rng.normal(size=(12, 3)) * 0.3)
    for _ in range(200):
        pose = (rng.uniform(-1, 1, 3), exp_so3(rng.normal(size=3)))
        d_ab = dist(pose, CUBE, hull)
        d_ba = dist(invert(pose), hull, CUBE)
        assert d_ab == pytest.approx(d_ba, abs=1e-8)


def test_vertex_pairs_bound_separated_distance(rng):
    hull = ConvexShape.hull(rng.normal(size=(10, 3)) * 0.3)
    for _ in range(200):
        pose = (rng.uniform(-1, 1, 3) * 1.5, exp_so3(rng.normal(size=3)))
        d = dist(pose, hull, CUBE)
        A = hull.vertices @ pose[1].T + pose[0]
        pair_min = np.min(np.linalg.norm(A[:, None] - CUBE.vertices[None], axis=2))
        assert pair_min >= d - 1e-12
        # sign agrees with an independent overlap test on the Minkowski difference
        D = (A[:, None] - CUBE.vertices[None]).reshape(-1, 3)
        from scipy.spatial import ConvexHull

        inside = np.all(ConvexHull(D).equations[:, 3] <= 0)
        assert (d > 0) == (not inside) or abs(d) < 1e-9


def test_contact_normal_is_translation_gradient(rng):
    from conftest import central_diff

    for _ in range(50):
        R = exp_so3(rng.normal(size=3))
        p = rng.uniform(-0.6, 0.6, 3)
        r = contact((p, R), CUBE, CUBE)
        g = central_diff(lambda x: dist((x, R), CUBE, CUBE), p)[0]
        np.testing.assert_allclose(r.normal, g, atol=1e-5)


def test_compound_contact_uses_closest_piece():
    hook = Shape(
        (
            ConvexShape.box([0.2, 0.02, 0.02], center=[0, 0, 0]),
            ConvexShape.box([0.02, 0.08, 0.02], center=[0.18, 0.1, 0]),
        )
    )
    d = dist((np.array([0.0, -0.3, 0.0]), I3), hook, CUBE)
    expected = min(
        box_gap_oracle(np.array([0.0, -0.3, 0.0]), np.array([0.2, 0.02, 0.02]), np.zeros(3), CUBE.half_extents),
        box_gap_oracle(np.array([0.18, -0.2, 0.0]), np.array([0.02, 0.08, 0.02]), np.zeros(3), CUBE.half_extents),
    )
    assert d == pytest.approx(expected, abs=1e-12)


# --- cast ----------------------------------------------------------------------

def test_cast_from_inside_exits():
    np.testing.assert_allclose(cast([0, 0, 0], [0, 0, -1], CUBE), [0, 0, -0.5])


def test_cast_from_above_enters():
    np.testing.assert_allclose(cast([0, 0, 2], [0, 0, -1], CUBE), [0, 0, 0.5])


def slab_oracle(x, dx, h):
    tmin, tmax = -np.inf, np.inf
    for k in range(3):
        if dx[k] != 0:
            t1, t2 = (-h[k] - x[k]) / dx[k], (h[k] - x[k]) / dx[k]
            tmin, tmax = max(tmin, min(t1, t2)), min(tmax, max(t1, t2))
    t = tmin if tmin >= 0 else tmax
    return x + t * dx


def test_cast_oblique_matches_slab_oracle(rng):
    box = ConvexShape.box([0.3, 0.2, 0.1])
    hits = 0
    for _ in range(500):
        x = rng.uniform(-0.2, 0.2, 3) * [1, 1, 0.5]
        dx = rng.normal(size=3)
        np.testing.assert_allclose(cast(x, dx, box), slab_oracle(x, dx, box.half_extents), atol=1e-9)
        hits += 1
    assert hits == 500


def test_cast_miss_raises():
    with pytest.raises(RaycastMiss):
        cast([0, 0, 2], [0, 0, 1], CUBE)
    with pytest.raises(RaycastMiss):
        cast([0, 0, 0], [0, 0, 0], CUBE)


# --- 2-D shadow ----------------------------------------------------------------

SQUARE = shadow(CUBE)


def test_shadow_of_cube_is_unit_square():
    assert isinstance(SQUARE, Polygon)
    assert len(SQUARE.vertices) == 4
    np.testing.assert_allclose(np.sort(np.abs(SQUARE.vertices).ravel()), 0.5)


def test_proj2d_center(rng):
    p = proj2d([0.0, 0.0], SQUARE)
    assert np.linalg.norm(p) == pytest.approx(0.5)
    edge = rng.uniform(-0.5, 0.5, size=(10_000, 2))
    k = rng.integers(0, 2, size=10_000)
    edge[np.arange(10_000), k] = rng.choice([-0.5, 0.5], size=10_000)
    assert np.min(np.linalg.norm(edge, axis=1)) >= 0.5 - 1e-12


def test_proj2d_outside_and_normal():
    np.testing.assert_allclose(proj2d([1.0, 0.0], SQUARE), [0.5, 0.0])
    np.testing.assert_allclose(normal2d([0.5, 0.0], SQUARE), [1.0, 0.0], atol=1e-12)


def test_proj2d_boundary_fixed():
    np.testing.assert_allclose(proj2d([0.5, 0.1], SQUARE), [0.5, 0.1])


def test_shape_validation():
    with pytest.raises(ValueError):
        ConvexShape.box([0.1, 0.0, 0.1])
    with pytest.raises(ValueError):
        ConvexShape.hull([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    with pytest.raises(ValueError):
        ConvexShape.hull(CUBE.vertices, com=[2.0, 0, 0])
