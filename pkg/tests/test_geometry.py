import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rdcbf import fuzz
from rdcbf.geometry import (
    Cuboid,
    Rect3,
    Segment3,
    bbox_volume,
    cuboid_bounding_box,
    point_point_sqdist,
    point_segment_sqdist,
    project_segment_to_plane,
    segment_rect_intersections,
    segment_rect_sqdist,
    segment_segment_sqdist,
    sqdist_gradient,
)

coord = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord, coord).map(np.array)
segment = st.tuples(point, point).map(lambda p: Segment3(*p))


def square(half=1.0, z=0.0):
    return Rect3([[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]])


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# -- point queries ----------------------------------------------------------------


def test_point_point_examples(rng):
    assert point_point_sqdist([0, 0, 0], [0, 0, 0]).d2 == 0
    assert point_point_sqdist([0, 0, 0], [3, 4, 0]).d2 == 25
    a, b = rng.normal(size=3), rng.normal(size=3)
    assert point_point_sqdist(a, b).d2 == pytest.approx(sum((a - b) ** 2), rel=1e-15)


def test_point_segment_examples():
    s = Segment3([-1, 0, 0], [1, 0, 0])
    r = point_segment_sqdist([0, 1, 0], s)
    assert r.d2 == pytest.approx(1.0) and r.params[0] == pytest.approx(0.5)
    r = point_segment_sqdist([2, 0, 0], s)
    assert r.d2 == pytest.approx(1.0) and r.params[0] == 1.0


def test_point_segment_matches_dense_oracle(rng):
    n = 300
    p, s0, s1 = rng.uniform(-1, 1, (3, n, 3))
    got = np.array([point_segment_sqdist(p[k], Segment3(s0[k], s1[k])).d2 for k in range(n)])
    assert np.max(np.abs(got - fuzz.oracle_point_segment(p, s0, s1))) <= 1e-9


def test_non_finite_point_rejected():
    with pytest.raises(ValueError):
        Segment3([0, 0, math.nan], [1, 0, 0])


# -- segment-segment ----------------------------------------------------------------


@pytest.mark.parametrize("a, b, d2, params", [
    (([0, 0, 0], [1, 0, 0]), ([0, 1, 0], [1, 1, 0]), 1.0, None),
    (([-1, 0, 0], [1, 0, 0]), ([0, -1, 0], [0, 1, 0]), 0.0, (0.5, 0.5)),
    (([0, 0, 0], [1, 0, 0]), ([0.5, 1, -1], [0.5, 1, 1]), 1.0, (0.5, 0.5)),
])
def test_segment_segment_examples(a, b, d2, params):
    r = segment_segment_sqdist(Segment3(*a), Segment3(*b))
    assert r.d2 == pytest.approx(d2, abs=1e-15)
    if params is not None:
        assert r.params == pytest.approx(params)


def test_parallel_overlapping_segments_pick_a_valid_witness():
    r = segment_segment_sqdist(Segment3([0, 0, 0], [2, 0, 0]), Segment3([1, 1, 0], [3, 1, 0]))
    assert r.d2 == pytest.approx(1.0)
    assert np.sum((r.witness_a - r.witness_b) ** 2) == pytest.approx(1.0)


@given(segment, segment)
def test_segment_segment_symmetry_and_witnesses(a, b):
    r = segment_segment_sqdist(a, b)
    s = segment_segment_sqdist(b, a)
    assert abs(r.d2 - s.d2) <= 1e-12 * max(1.0, r.d2)
    assert r.d2 >= 0
    w = np.sum((r.witness_a - r.witness_b) ** 2)
    assert abs(w - r.d2) <= 1e-12 * max(1.0, r.d2)
    xi, tau = r.params
    assert -1e-9 <= xi <= 1 + 1e-9 and -1e-9 <= tau <= 1 + 1e-9
    assert np.allclose(a.at(xi), r.witness_a, atol=1e-9)
    assert np.allclose(b.at(tau), r.witness_b, atol=1e-9)


@given(segment, point)
def test_degenerate_segment_equals_point_segment(b, p):
    r = segment_segment_sqdist(Segment3(p, p), b)
    assert r.d2 == point_segment_sqdist(p, b).d2


@given(segment, segment, st.integers(0, 2 ** 31))
def test_rigid_invariance_and_scaling(a, b, seed):
    rng = np.random.default_rng(seed)
    R = random_rotation(rng)
    t = rng.uniform(-5, 5, 3)
    d2 = segment_segment_sqdist(a, b).d2
    moved = [Segment3(R @ s.p0 + t, R @ s.p1 + t) for s in (a, b)]
    assert segment_segment_sqdist(*moved).d2 == pytest.approx(d2, rel=1e-9, abs=1e-9)
    k = float(rng.uniform(0.1, 10))
    scaled = [Segment3(k * s.p0, k * s.p1) for s in (a, b)]
    assert segment_segment_sqdist(*scaled).d2 == pytest.approx(k * k * d2, rel=1e-9, abs=1e-9)


def test_segment_segment_matches_oracle(rng):
    rep = fuzz.fuzz_segment_segment(500, rng)
    assert rep.max_error <= 1e-9


# -- rectangles ---------------------------------------------------------------------


def test_rect_validation():
    with pytest.raises(ValueError, match="opposite edges"):
        Rect3([[0, 0, 0], [2, 0, 0], [2, 1, 0], [0, 2, 0]])
    with pytest.raises(ValueError, match="orthogonal"):
        Rect3([[0, 0, 0], [1, 0, 0], [1.5, 1, 0], [0.5, 1, 0]])
    with pytest.raises(ValueError, match="coplanar"):
        Rect3([[0, 0, 0], [1, 0, 0], [1, 1, 1e-6], [0, 1, 0]])


def test_projection_examples(rng):
    r = square()
    p = project_segment_to_plane(Segment3([0.2, 0.3, 1], [0.2, 0.3, 5]), r)
    assert p.degenerate or np.allclose(p.p0, p.p1, atol=1e-15)
    inplane = Segment3([0.1, 0.2, 0], [0.5, -0.3, 0])
    q = project_segment_to_plane(inplane, r)
    assert np.array_equal(q.p0, inplane.p0) and np.array_equal(q.p1, inplane.p1)
    rr = Rect3.from_frame(rng.normal(size=3), *random_rotation(rng)[:, :2].T, 0.7, 0.4)
    s = Segment3(rng.normal(size=3), rng.normal(size=3))
    q = project_segment_to_plane(s, rr)
    n = rr.normal
    for a, b in ((s.p0, q.p0), (s.p1, q.p1)):
        assert abs((b - rr.vertices[0]) @ n) < 1e-12
        # the removed part is parallel to the normal
        assert np.linalg.norm(np.cross(a - b, n)) < 1e-12


def test_intersection_counts():
    r = square()
    n, pts = segment_rect_intersections(Segment3([2, 0, 0], [3, 0, 0]), r)
    assert n == 0 and pts == []
    n, pts = segment_rect_intersections(Segment3([0, 0, 0], [3, 0, 0]), r)
    assert n == 1 and np.allclose(pts[0], [1, 0, 0])
    n, pts = segment_rect_intersections(Segment3([-3, 0.5, 0], [3, 0.5, 0]), r)
    assert n == 2
    assert np.allclose(sorted(p[0] for p in pts), [-1, 1])


def test_intersection_rejects_out_of_plane():
    with pytest.raises(ValueError, match="off the rectangle plane"):
        segment_rect_intersections(Segment3([0, 0, 1e-3], [1, 0, 0]), square())


def test_intersection_interval_matches_dense_containment(rng):
    r = square()
    ts = np.linspace(0, 1, 20001)
    for _ in range(200):
        p0, p1 = rng.uniform(-2, 2, (2, 3))
        p0[2] = p1[2] = 0.0
        s = Segment3(p0, p1)
        n, pts = segment_rect_intersections(s, r)
        pts_dense = p0 + ts[:, None] * (p1 - p0)
        inside = np.all(np.abs(pts_dense[:, :2]) <= 1, axis=1)
        if not inside.any():
            assert n == 0
            continue
        assert n in (1, 2)
        first, last = pts_dense[inside][0], pts_dense[inside][-1]
        got = pts if n == 2 else pts + [p0 if inside[0] else p1]
        ends = sorted(got, key=lambda q: np.linalg.norm(q - p0))
        assert np.linalg.norm(ends[0] - first) < 2e-4 * np.linalg.norm(p1 - p0) + 1e-12
        assert np.linalg.norm(ends[-1] - last) < 2e-4 * np.linalg.norm(p1 - p0) + 1e-12


def test_segment_rect_examples():
    r = square(0.5)
    assert segment_rect_sqdist(Segment3([-0.5, 0, 1], [0.5, 0, 1]), r).d2 == pytest.approx(1.0)
    assert segment_rect_sqdist(Segment3([2, 0, 1], [3, 0, 1]), r).d2 == pytest.approx(3.25)
    assert segment_rect_sqdist(Segment3([-0.4, 0.2, 0], [0.3, -0.1, 0]), r).d2 == 0.0


def test_segment_rect_matches_oracle(rng):
    rep = fuzz.fuzz_segment_rect(300, rng)
    assert rep.max_error <= 1e-9


def test_segment_rect_witness_on_rectangle(rng):
    verts = fuzz.random_rects(rng, 200)
    for k in range(200):
        r = Rect3(verts[k], tol=1e-7)
        s = Segment3(*rng.uniform(-1.5, 1.5, (2, 3)))
        res = segment_rect_sqdist(s, r)
        xi, u, v = res.params
        assert -1e-9 <= xi <= 1 + 1e-9
        assert -1e-9 <= u <= 1 + 1e-9 and -1e-9 <= v <= 1 + 1e-9
        assert abs(np.sum((res.witness_a - res.witness_b) ** 2) - res.d2) <= 1e-12 * max(1, res.d2)


# -- cuboids and the bounding volume ------------------------------------------------


def test_cuboid_canonicalises_extents():
    c = Cuboid([0, 0, 0], [0.2, 1.0, 0.5])
    assert list(c.extents) == [1.0, 0.5, 0.2]
    # column 0 now spans the former y axis
    assert np.allclose(np.abs(c.rotation[:, 0]), [0, 1, 0])
    assert np.linalg.det(c.rotation) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Cuboid([0, 0, 0], [1, 1, 0])
    with pytest.raises(ValueError, match="orthonormal"):
        Cuboid([0, 0, 0], [1, 1, 1], np.diag([1.0, 1.0, 1.1]))


def test_bbox_volume_examples():
    assert bbox_volume((1.0, 0.5, 0.0), 0.0) == 0.0
    assert bbox_volume((2.0, 2.0, 2.0), 0.0) == pytest.approx(8 + 4 * math.pi + 4 / 3 * math.pi)
    res = cuboid_bounding_box(Cuboid([0, 0, 0], [2, 2, 2]))
    assert res.volume <= min(bbox_volume((2, 2, 2), 0.0), bbox_volume((2, 2, 2), 1.0)) + 1e-12


def test_bbox_result_invariants(rng):
    for _ in range(50):
        c = Cuboid(rng.normal(size=3), rng.uniform(0.05, 2.0, 3), random_rotation(rng))
        res = cuboid_bounding_box(c)
        a, b, h = c.extents
        assert 0 <= res.d_re <= b / 2
        assert res.r_e == pytest.approx(math.sqrt(2 * res.d_re ** 2 + h * h / 4))
        assert res.volume == pytest.approx(bbox_volume(c.extents, res.d_re))
        grid = np.linspace(0, b / 2, 2001)
        assert res.volume <= min(bbox_volume(c.extents, d) for d in grid) * (1 + 1e-6)
        for v in c.vertices():
            d = math.sqrt(segment_rect_sqdist(Segment3(v, v), res.rect2).d2)
            assert d <= res.r_e + 1e-9


# -- gradients ----------------------------------------------------------------------


def test_gradient_examples():
    r = point_segment_sqdist([0, 0, 1], Segment3([-1, 0, 0], [1, 0, 0]))
    assert np.allclose(sqdist_gradient(r, "point"), [0, 0, 2])
    touch = segment_segment_sqdist(Segment3([-1, 0, 0], [1, 0, 0]), Segment3([0, -1, 0], [0, 1, 0]))
    assert np.array_equal(sqdist_gradient(touch), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        sqdist_gradient(r, "sphere")


def test_segment_gradient_matches_finite_differences(rng):
    h = 1e-6
    checked = 0
    while checked < 100:
        a = Segment3(*rng.uniform(-1, 1, (2, 3)))
        b = Segment3(*rng.uniform(-1, 1, (2, 3)))
        r = segment_segment_sqdist(a, b)
        xi, tau = r.params
        # smooth instances only: interior witnesses, away from contact
        if not (0.05 < xi < 0.95 and 0.05 < tau < 0.95 and r.d2 > 1e-3):
            continue
        g = sqdist_gradient(r)
        fd = np.zeros((2, 3))
        for e in range(2):
            for k in range(3):
                d = np.zeros((2, 3))
                d[e, k] = h
                pa = a.as_array() + d
                pb = a.as_array() - d
                fd[e, k] = (segment_segment_sqdist(Segment3(*pa), b).d2
                            - segment_segment_sqdist(Segment3(*pb), b).d2) / (2 * h)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))
        checked += 1
