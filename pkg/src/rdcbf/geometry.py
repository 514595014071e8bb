"""Exact minimum squared distances between 3D primitives.

Points are length-3 float arrays. Segments, rectangles and cuboids are small
immutable containers validated at construction. Every query returns a
:class:`DistResult` whose ``d2`` is recomputed from the witness points, so
``|witness_a - witness_b|**2 == d2`` holds to rounding.

The heavy lifting happens in :mod:`rdcbf.kernels` (compiled when available).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

RECT_TOL = 1e-9
PLANE_TOL = 1e-7
ROTATION_TOL = 1e-9
BBOX_XTOL = 1e-9
BBOX_SCAN = 64


def _point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite point {arr}")
    return arr


@dataclass(frozen=True)
class Segment3:
    p0: np.ndarray
    p1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p0", _point(self.p0))
        object.__setattr__(self, "p1", _point(self.p1))

    @property
    def degenerate(self) -> bool:
        return bool(np.array_equal(self.p0, self.p1))

    def at(self, xi: float) -> np.ndarray:
        return self.p0 + xi * (self.p1 - self.p0)

    def as_array(self) -> np.ndarray:
        return np.stack([self.p0, self.p1])


@dataclass(frozen=True)
class Rect3:
    """Rectangle given by four vertices in cyclic order."""

    vertices: np.ndarray
    tol: float = field(default=RECT_TOL, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(4, 3)
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite rectangle vertex")
        object.__setattr__(self, "vertices", v)
        e = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(e, axis=1)
        if abs(lengths[0] - lengths[2]) > self.tol or abs(lengths[1] - lengths[3]) > self.tol:
            raise ValueError(f"opposite edges differ in length: {lengths}")
        for k in range(4):
            a, b = e[k], e[(k + 1) % 4]
            na, nb = np.linalg.norm(a), np.linalg.norm(b)
            if na > 0 and nb > 0:
                angle = abs(math.asin(min(1.0, abs(a @ b) / (na * nb))))
                if angle > self.tol:
                    raise ValueError(f"edges {k} and {(k + 1) % 4} not orthogonal ({angle:.3g} rad)")
        normal = self.normal
        if normal is not None:
            off = (v - v[0]) @ normal
            if np.max(np.abs(off)) > self.tol:
                raise ValueError("rectangle vertices are not coplanar")

    @classmethod
    def from_frame(cls, center, u_axis, v_axis, half_u, half_v) -> "Rect3":
        """Rectangle centred at ``center`` spanning ``±half_u`` along ``u_axis``
        and ``±half_v`` along ``v_axis`` (unit, orthogonal)."""
        c = _point(center)
        u = _point(u_axis) * half_u
        w = _point(v_axis) * half_v
        return cls(np.stack([c - u - w, c + u - w, c + u + w, c - u + w]))

    @property
    def normal(self) -> np.ndarray | None:
        *_, n = kernels.rect_frame(self.vertices.tolist())
        return None if n is None else np.array(n)

    def edges(self) -> list[Segment3]:
        v = self.vertices
        return [Segment3(v[k], v[(k + 1) % 4]) for k in range(4)]

    def local_coords(self, p) -> tuple[float, float]:
        """Coordinates of ``p`` along the two edge directions, in [0, 1] inside."""
        v = self.vertices
        e1, e2 = v[1] - v[0], v[3] - v[0]
        d = np.asarray(p, dtype=float) - v[0]
        return float(d @ e1 / (e1 @ e1)), float(d @ e2 / (e2 @ e2))

    def translated(self, offset) -> "Rect3":
        return Rect3(self.vertices + np.asarray(offset, dtype=float), tol=self.tol)


@dataclass(frozen=True)
class Cuboid:
    """Oriented box. ``extents`` are full side lengths ``(a_r, b_r, h_r)``.

    Extents are sorted so that ``a_r >= b_r >= h_r``; the columns of
    ``rotation`` are permuted with them, so column 0 is the length axis,
    column 1 the width axis and column 2 the height axis.
    """

    center: np.ndarray
    extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        c = _point(self.center)
        ext = np.asarray(self.extents, dtype=float).reshape(3)
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.any(ext <= 0) or not np.all(np.isfinite(ext)):
            raise ValueError(f"cuboid extents must be positive, got {ext}")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ROTATION_TOL:
            raise ValueError("cuboid rotation is not orthonormal")
        order = np.argsort(-ext, kind="stable")
        ext = ext[order]
        rot = rot[:, order]
        if np.linalg.det(rot) < 0:
            rot = rot.copy()
            rot[:, 2] = -rot[:, 2]
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "rotation", rot)

    @property
    def half_extents(self) -> np.ndarray:
        return self.extents / 2

    def vertices(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        return self.center + (signs * self.half_extents) @ self.rotation.T

    def faces(self) -> list[Rect3]:
        """The six faces as rectangles."""
        out = []
        half = self.half_extents
        for k in range(3):
            i, j = [m for m in range(3) if m != k]
            for s in (-1.0, 1.0):
                c = self.center + s * half[k] * self.rotation[:, k]
                out.append(Rect3.from_frame(c, self.rotation[:, i], self.rotation[:, j], half[i], half[j]))
        return out


@dataclass(frozen=True)
class DistResult:
    d2: float
    witness_a: np.ndarray
    witness_b: np.ndarray
    params: tuple = ()


@dataclass(frozen=True)
class CuboidBoundResult:
    rect2: Rect3
    r_e: float
    d_re: float
    volume: float


def point_point_sqdist(a, b) -> DistResult:
    a = _point(a)
    b = _point(b)
    e = a - b
    return DistResult(float(e @ e), a, b, ())


def point_segment_sqdist(p, s: Segment3) -> DistResult:
    """Closest point on ``s`` to ``p``; ``params == (xi,)``."""
    p = _point(p)
    d2, xi, wx, wy, wz = kernels.point_seg(*p.tolist(), *s.p0.tolist(), *s.p1.tolist())
    return DistResult(float(d2), p, np.array([wx, wy, wz]), (float(xi),))


def segment_segment_sqdist(a: Segment3, b: Segment3) -> DistResult:
    """Minimum squared distance between two segments; ``params == (xi, tau)``.

    The quadratic ``D(xi, tau)`` is minimised at its unconstrained centre when
    that lies in the unit square; otherwise along the four edges of the square
    (each a clamped 1D quadratic). Parallel and degenerate segments take the
    edge route directly.
    """
    res = kernels.seg_seg(a.p0, a.p1, b.p0, b.p1)
    return DistResult(float(res[0]), np.array(res[3:6], dtype=float),
                      np.array(res[6:9], dtype=float), (float(res[1]), float(res[2])))


def project_segment_to_plane(s: Segment3, r: Rect3) -> Segment3:
    """Orthogonal projection of both endpoints onto the rectangle's plane."""
    n = r.normal
    if n is None:
        raise ValueError("rectangle has zero area; its plane is undefined")
    o = r.vertices[0]
    return Segment3(s.p0 - ((s.p0 - o) @ n) * n, s.p1 - ((s.p1 - o) @ n) * n)


def segment_rect_intersections(s_proj: Segment3, r: Rect3) -> tuple[int, list[np.ndarray]]:
    """Intersection of an in-plane segment with a rectangle.

    Returns ``(n, points)``. With one endpoint inside, the single point is
    the boundary crossing; with both inside, the endpoints themselves.
    """
    n_vec = r.normal
    if n_vec is None:
        raise ValueError("rectangle has zero area; its plane is undefined")
    o = r.vertices[0]
    off = max(abs((s_proj.p0 - o) @ n_vec), abs((s_proj.p1 - o) @ n_vec))
    if off > PLANE_TOL:
        raise ValueError(f"segment lies {off:.3g} m off the rectangle plane (limit {PLANE_TOL})")
    v = r.vertices
    n, t0, t1 = kernels.rect_clip(s_proj.p0, s_proj.p1, v[0], v[1] - v[0], v[3] - v[0],
                                  float((v[1] - v[0]) @ (v[1] - v[0])),
                                  float((v[3] - v[0]) @ (v[3] - v[0])))
    if n == 0:
        return 0, []
    if n == 1:
        # single crossing: the clipped end that is not a segment endpoint
        t = t1 if t0 == 0.0 else t0
        return 1, [s_proj.at(t)]
    return 2, [s_proj.at(t0), s_proj.at(t1)]


def segment_rect_sqdist(s: Segment3, r: Rect3) -> DistResult:
    """Minimum squared distance between a segment and a rectangle.

    The projected segment is clipped to the rectangle; the clipped piece and
    all four edges are candidate rectangle segments, each resolved with the
    segment-segment query. ``params == (xi, u, v)`` with ``(u, v)`` the
    rectangle coordinates of ``witness_b``.
    """
    res = kernels.seg_rect(s.p0, s.p1, r.vertices)
    wb = np.array(res[5:8], dtype=float)
    u, v = r.local_coords(wb)
    return DistResult(float(res[0]), np.array(res[2:5], dtype=float), wb, (float(res[1]), u, v))


def bbox_volume(extents, d_re: float) -> float:
    """Volume of the rounded box obtained by inflating the inner rectangle."""
    a, b, h = extents
    x = a - 2 * d_re
    y = b - 2 * d_re
    r = math.sqrt(2 * d_re * d_re + h * h / 4)
    return 2 * x * y * r + math.pi * r * r * (x + y) + 4.0 / 3.0 * math.pi * r ** 3


def _golden(f, lo, hi, xtol):
    invphi = (math.sqrt(5) - 1) / 2
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > xtol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = f(d)
    return (lo + hi) / 2


def cuboid_bounding_box(c: Cuboid, xtol: float = BBOX_XTOL, scan: int = BBOX_SCAN) -> CuboidBoundResult:
    """Smallest rounded box (inner rectangle inflated by ``r_e``) around ``c``.

    The inset ``d_re`` is chosen on ``[0, b_r/2]`` by a coarse scan followed
    by golden-section refinement around the best scan point.
    """
    a, b, h = c.extents
    f = lambda d: bbox_volume(c.extents, d)  # noqa: E731
    grid = np.linspace(0.0, b / 2, scan)
    vals = [f(d) for d in grid]
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, scan - 1)]
    d_star = _golden(f, lo, hi, xtol)
    best_d, best_v = d_star, f(d_star)
    for d in (grid[k], 0.0, b / 2):
        if f(d) < best_v:
            best_d, best_v = d, f(d)
    best_d = float(min(max(best_d, 0.0), b / 2))
    r_e = math.sqrt(2 * best_d * best_d + h * h / 4)
    rect2 = Rect3.from_frame(c.center, c.rotation[:, 0], c.rotation[:, 1],
                             a / 2 - best_d, b / 2 - best_d)
    return CuboidBoundResult(rect2, r_e, best_d, f(best_d))


def sqdist_gradient(result: DistResult, first: str = "segment") -> np.ndarray:
    """Gradient of ``d2`` with respect to the first primitive's points.

    ``first="point"`` returns shape (3,); ``first="segment"`` returns shape
    (2, 3), the rows belonging to ``p0`` and ``p1``. Moving the second
    primitive rigidly by ``t`` changes ``d2`` at rate ``-2 (wa - wb)``.
    """
    g = 2.0 * (result.witness_a - result.witness_b)
    if first == "point":
        return g
    if first == "segment":
        xi = result.params[0]
        return np.stack([(1.0 - xi) * g, xi * g])
    raise ValueError(f"unknown primitive kind {first!r}")
