"""Safety values and linear safety-filter constraints.

For robot component ``i`` and obstacle ``j`` the safety value is the squared
distance between the predicted component and the predicted obstacle minus the
squared safe distance::

    h_ij = D(L_i(x + T xdot), p_j + T v_hat_j) - R_ij**2

With ``xdot = u + d`` every constraint is linear in ``u``: ``a . u >= b`` with
``a = dh/dx`` and ``b = -phi`` where ``phi`` depends on the planner mode:

=======  ==============================================================
cbf      gamma h
dcbf     gamma h + dh/dp . v_hat
r1cbf    gamma h + dh/dp . v_hat + dh/dx . d_hat - w1^2/(2 mu beta) - chi
r2cbf    gamma h + Lambda
rdcbf    gamma h + dh/dx . d_hat - w1^2/(2 mu beta) - chi + Lambda
=======  ==============================================================

``chi = beta |dh/dx|^2 / (4 alpha - 2 mu - 2 gamma)`` and
``Lambda = dh/dp . v_hat - |dh/dp|_1 eps_v``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import Cuboid, Rect3, Segment3, cuboid_bounding_box

log = logging.getLogger(__name__)

MODES = ("cbf", "dcbf", "r1cbf", "r2cbf", "rdcbf")
DISTURBANCE_MODES = ("r1cbf", "rdcbf")
VELOCITY_MODES = ("r2cbf", "rdcbf")
DEFAULT_MARGIN = 0.05
DEFAULT_ACTIVATION_H = 1.0


class ParamError(ValueError):
    """A parameter combination violates a hypothesis of the robust condition."""


@dataclass(frozen=True)
class RdcbfParams:
    gamma: float = 2.0
    alpha: float = 20.0
    mu: float = 20.0
    beta: float = 1.0
    T: float = 0.02
    omega0: float = 0.0
    omega1: float = 0.0
    e0: float | None = None
    margin: float = DEFAULT_MARGIN
    activation_h: float = DEFAULT_ACTIVATION_H

    def __post_init__(self):
        if self.e0 is None:
            object.__setattr__(self, "e0", float(self.omega0))
        self.validate()

    @property
    def kappa(self) -> float:
        return self.alpha - self.mu / 2

    @property
    def chi_denominator(self) -> float:
        return 4 * self.alpha - 2 * self.mu - 2 * self.gamma

    @property
    def disturbance_free(self) -> bool:
        return self.omega0 == 0 and self.omega1 == 0

    def validate(self, h0: float | None = None) -> None:
        """Raise :class:`ParamError` naming the first violated inequality."""
        checks = [
            (self.gamma > 0, "gamma > 0"),
            (self.alpha > 0, "alpha > 0"),
            (self.beta > 0, "beta > 0"),
            (self.T > 0, "T > 0"),
            (0 < self.mu < 2 * self.alpha, "0 < mu < 2*alpha"),
            (self.alpha > (self.gamma + self.mu) / 2, "alpha > (gamma+mu)/2"),
            (self.omega0 >= 0 and self.omega1 >= 0, "omega0 >= 0 and omega1 >= 0"),
            (self.activation_h > 0, "activation_h > 0"),
        ]
        if h0 is not None:
            checks.append((h0 > 0, "h0 > 0"))
            if h0 > 0:
                checks.append((self.beta > self.e0 ** 2 / (2 * h0), "beta > e0^2/(2*h0)"))
        for ok, text in checks:
            if not ok:
                raise ParamError(f"parameter check failed: {text} ({self._describe(h0)})")

    def _describe(self, h0):
        parts = [f"gamma={self.gamma}", f"alpha={self.alpha}", f"mu={self.mu}", f"beta={self.beta}",
                 f"T={self.T}", f"omega0={self.omega0}", f"omega1={self.omega1}", f"e0={self.e0}"]
        if h0 is not None:
            parts.append(f"h0={h0:.6g}")
        return ", ".join(parts)


# -- obstacles ---------------------------------------------------------------


@dataclass(frozen=True)
class Sphere:
    radius: float


@dataclass(frozen=True)
class Capsule:
    p0: tuple
    p1: tuple
    radius: float


@dataclass(frozen=True)
class Box:
    extents: tuple
    rotation: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    exact: bool = False


@dataclass(frozen=True)
class Plate:
    """Flat rectangle given by its four vertices relative to the obstacle position."""

    vertices: tuple
    radius: float = 0.0


@dataclass
class Obstacle:
    id: str
    shape: object
    p: np.ndarray
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_hat: np.ndarray | None = None
    eps_v: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        self.v_hat = self.v.copy() if self.v_hat is None else np.asarray(self.v_hat, dtype=float).reshape(3)
        if self.eps_v < 0:
            raise ValueError(f"obstacle {self.id}: eps_v must be non-negative")

    def check_velocity_error(self, tol=1e-12) -> None:
        err = float(np.linalg.norm(self.v_hat - self.v))
        if err > self.eps_v + tol:
            raise ValueError(f"obstacle {self.id}: |v_hat - v| = {err:.6g} exceeds eps_v = {self.eps_v}")


def shape_primitives(shape):
    """Local-frame distance primitives of a shape.

    Returns a list of ``(kind, geometry, inflation)`` with ``kind`` either
    ``"seg"`` (geometry (2,3)) or ``"rect"`` (geometry (4,3)).
    """
    if isinstance(shape, Sphere):
        return [("seg", np.zeros((2, 3)), float(shape.radius))]
    if isinstance(shape, Capsule):
        return [("seg", np.array([shape.p0, shape.p1], dtype=float), float(shape.radius))]
    if isinstance(shape, Plate):
        return [("rect", Rect3(shape.vertices).vertices, float(shape.radius))]
    if isinstance(shape, Box):
        c = Cuboid(np.zeros(3), shape.extents, np.array(shape.rotation, dtype=float))
        if shape.exact:
            return [("rect", f.vertices, 0.0) for f in c.faces()]
        bb = cuboid_bounding_box(c)
        return [("rect", bb.rect2.vertices, float(bb.r_e))]
    raise TypeError(f"unsupported obstacle shape {shape!r}")


class ObstacleSet:
    """Flattened primitives of a fixed list of obstacles for batched queries."""

    def __init__(self, obstacles):
        self.obstacles = list(obstacles)
        segs, seg_owner, seg_r = [], [], []
        rects, rect_owner, rect_r = [], [], []
        for j, ob in enumerate(self.obstacles):
            for kind, geo, r in shape_primitives(ob.shape):
                if kind == "seg":
                    segs.append(geo)
                    seg_owner.append(j)
                    seg_r.append(r)
                else:
                    rects.append(geo)
                    rect_owner.append(j)
                    rect_r.append(r)
        self.seg_local = np.array(segs, dtype=float).reshape(-1, 2, 3)
        self.seg_owner = np.array(seg_owner, dtype=int)
        self.seg_radius = np.array(seg_r, dtype=float)
        self.rect_local = np.array(rects, dtype=float).reshape(-1, 4, 3)
        self.rect_owner = np.array(rect_owner, dtype=int)
        self.rect_radius = np.array(rect_r, dtype=float)

    def __len__(self):
        return len(self.obstacles)


# -- safety values -------------------------------------------------------------


def predict_link(link, jac, xdot_prev, T: float) -> Segment3:
    """First-order prediction of a link after ``T`` seconds at ``xdot_prev``."""
    if not T > 0:
        raise ValueError("T must be positive")
    seg = link.as_array() if isinstance(link, Segment3) else np.asarray(link, dtype=float)
    moved = seg + np.asarray(jac) @ (T * np.asarray(xdot_prev, dtype=float))
    return Segment3(moved[0], moved[1])


@dataclass
class PairValues:
    """Safety values and gradients for a batch of (link, primitive) pairs."""

    h: np.ndarray  # (K,)
    dhdx: np.ndarray  # (K, dof)
    dhdp: np.ndarray  # (K, 3)
    v_hat: np.ndarray  # (K, 3)
    eps_v: np.ndarray  # (K,)
    sources: list


def _pair_block(segments, J, radii, prims, kind, owner, prim_r, offsets, margin):
    if prims.shape[0] == 0:
        return None
    world = prims + offsets[owner][:, None, :]
    if kind == "seg":
        d2, xi, wa, wb = kernels.link_segment_sqdist(segments, world)
    else:
        d2, xi, wa, wb = kernels.link_rect_sqdist(segments, world)
    R = radii[:, None] + prim_r[None, :] + margin
    h = d2 - R * R
    diff = 2.0 * (wa - wb)  # (L, P, 3)
    # chain rule through the witness' barycentric weights on the link
    Jw = (1.0 - xi)[:, :, None, None] * J[:, None, 0] + xi[:, :, None, None] * J[:, None, 1]
    dhdx = np.einsum("lpk,lpkn->lpn", diff, Jw)
    return h, dhdx, -diff


def obstacle_values(segments, J, radii, obs: ObstacleSet, positions, v_hat, eps_v,
                    T: float, margin: float = DEFAULT_MARGIN, predict: bool = True) -> PairValues:
    """Safety values for every (link, obstacle primitive) pair.

    ``segments``/``J`` describe the (already predicted) robot links;
    obstacles are advanced by ``T * v_hat`` when ``predict`` is set.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    v_hat = np.asarray(v_hat, dtype=float).reshape(-1, 3)
    eps_v = np.asarray(eps_v, dtype=float).reshape(-1)
    offsets = positions + T * v_hat if predict else positions
    L = segments.shape[0]
    dof = J.shape[-1]
    hs, gx, gp, owners, srcs = [], [], [], [], []
    for kind, prims, owner, pr in (("seg", obs.seg_local, obs.seg_owner, obs.seg_radius),
                                   ("rect", obs.rect_local, obs.rect_owner, obs.rect_radius)):
        blk = _pair_block(segments, J, radii, prims, kind, owner, pr, offsets, margin)
        if blk is None:
            continue
        h, dx, dp = blk
        hs.append(h.reshape(-1))
        gx.append(dx.reshape(-1, dof))
        gp.append(dp.reshape(-1, 3))
        own = np.broadcast_to(owner[None, :], (L, owner.size)).reshape(-1)
        owners.append(own)
        link_idx = np.repeat(np.arange(L), owner.size)
        prim_idx = np.broadcast_to(np.arange(owner.size)[None, :], (L, owner.size)).reshape(-1)
        srcs.extend(("obstacle", kind, int(i), int(o), int(k)) for i, o, k in zip(link_idx, own, prim_idx))
    if not hs:
        return PairValues(np.zeros(0), np.zeros((0, dof)), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), [])
    own = np.concatenate(owners)
    return PairValues(np.concatenate(hs), np.concatenate(gx), np.concatenate(gp),
                      v_hat[own], eps_v[own], srcs)


def safety_value(link, radius: float, jac, obstacle: Obstacle, params: RdcbfParams, predict_obstacle=True):
    """Safety value of one link against one obstacle and its gradients.

    ``link`` is the (predicted) link segment with endpoint Jacobians ``jac``
    of shape (2, 3, dof). Returns ``(h, dh/dx, dh/dp)`` for the closest
    primitive of the obstacle.
    """
    seg = link.as_array() if isinstance(link, Segment3) else np.asarray(link, dtype=float)
    obs = ObstacleSet([obstacle])
    pv = obstacle_values(seg[None], np.asarray(jac)[None], np.array([radius]), obs, obstacle.p[None],
                         obstacle.v_hat[None], np.array([obstacle.eps_v]), params.T, params.margin,
                         predict=predict_obstacle)
    k = int(np.argmin(pv.h))
    return float(pv.h[k]), pv.dhdx[k], pv.dhdp[k]


# -- constraint rows -----------------------------------------------------------


@dataclass(frozen=True)
class ConstraintRow:
    a: np.ndarray
    b: float
    h: float
    source: tuple
    mode: str


@dataclass
class RowSet:
    """Constraint rows ``a . u >= b`` stored as arrays."""

    a: np.ndarray
    b: np.ndarray
    h: np.ndarray
    sources: list
    mode: str
    total: int = 0

    def __len__(self):
        return len(self.b)

    def rows(self) -> list[ConstraintRow]:
        return [ConstraintRow(self.a[k], float(self.b[k]), float(self.h[k]), self.sources[k], self.mode)
                for k in range(len(self.b))]

    @classmethod
    def empty(cls, dof: int, mode: str) -> "RowSet":
        return cls(np.zeros((0, dof)), np.zeros(0), np.zeros(0), [], mode, 0)

    @classmethod
    def concat(cls, sets, mode: str, dof: int) -> "RowSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return cls.empty(dof, mode)
        return cls(np.concatenate([s.a for s in sets]), np.concatenate([s.b for s in sets]),
                   np.concatenate([s.h for s in sets]), [x for s in sets for x in s.sources], mode,
                   sum(s.total for s in sets))


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")


def robust_phi(h, dhdx, dhdp, d_hat, v_hat, eps_v, params: RdcbfParams, mode: str) -> np.ndarray:
    """``phi`` of every row for ``mode`` (vectorised over rows)."""
    _check_mode(mode)
    h = np.asarray(h, dtype=float)
    phi = params.gamma * h
    if mode == "cbf":
        return phi
    transport = np.einsum("kj,kj->k", dhdp, v_hat)
    if mode == "dcbf":
        return phi + transport
    if mode in DISTURBANCE_MODES:
        if params.disturbance_free:
            # no disturbance means zero estimation error; the compensation vanishes
            phi = phi + dhdx @ np.asarray(d_hat, dtype=float)
        else:
            denom = params.chi_denominator
            if denom <= 0:
                raise ParamError("parameter check failed: 4*alpha - 2*mu - 2*gamma > 0")
            chi = params.beta * np.einsum("kj,kj->k", dhdx, dhdx) / denom
            phi = phi + dhdx @ np.asarray(d_hat, dtype=float) - params.omega1 ** 2 / (2 * params.mu * params.beta) - chi
    if mode in VELOCITY_MODES:
        lam = transport - np.abs(dhdp).sum(axis=1) * eps_v
        return phi + lam
    return phi + transport


_warned: set = set()


def build_rows(h, dhdx, dhdp, d_hat, v_hat, eps_v, params: RdcbfParams, mode: str, sources) -> RowSet:
    """Rows ``dh/dx . u >= -phi``. Rows with zero ``dh/dx`` are dropped."""
    dhdx = np.asarray(dhdx, dtype=float)
    if len(h) == 0:
        _check_mode(mode)
        return RowSet.empty(dhdx.shape[-1], mode)
    dhdx = dhdx.reshape(len(h), -1)
    dhdp = np.asarray(dhdp, dtype=float).reshape(len(h), 3)
    v_hat = np.asarray(v_hat, dtype=float).reshape(len(h), 3)
    eps_v = np.broadcast_to(np.asarray(eps_v, dtype=float), (len(h),))
    phi = robust_phi(h, dhdx, dhdp, d_hat, v_hat, eps_v, params, mode)
    keep = np.any(dhdx != 0, axis=1)
    if not np.all(keep):
        fresh = [sources[k] for k in np.flatnonzero(~keep) if sources[k] not in _warned]
        if fresh:
            _warned.update(fresh)
            log.warning("dropping rows independent of u (reported once per source): %s", fresh[:5])
    idx = np.flatnonzero(keep)
    return RowSet(dhdx[idx], -phi[idx], np.asarray(h, dtype=float)[idx], [sources[k] for k in idx], mode, len(h))


def build_row(h, dhdx, dhdp, d_hat, obstacle: Obstacle | None, params: RdcbfParams, mode: str,
              source=("obstacle",)) -> ConstraintRow:
    """Single-row form of :func:`build_rows`; ``obstacle=None`` means static."""
    v_hat = np.zeros(3) if obstacle is None else obstacle.v_hat
    eps_v = 0.0 if obstacle is None else obstacle.eps_v
    phi = robust_phi(np.array([h]), np.atleast_2d(dhdx), np.atleast_2d(dhdp), d_hat,
                     np.atleast_2d(v_hat), np.array([eps_v]), params, mode)
    return ConstraintRow(np.asarray(dhdx, dtype=float), float(-phi[0]), float(h), source, mode)


def boundary_rows(state, workspace, params: RdcbfParams, mode: str, d_hat=None, dof: int = 8) -> RowSet:
    """Rows keeping the base inside an axis-aligned box ``(xmin, xmax, ymin, ymax)``.

    ``h`` is the linear signed distance to each face (metres).
    """
    if workspace is None:
        return RowSet.empty(dof, mode)
    x = np.asarray(state, dtype=float)
    xmin, xmax, ymin, ymax = workspace
    h = np.array([x[0] - xmin, xmax - x[0], x[1] - ymin, ymax - x[1]])
    a = np.zeros((4, dof))
    a[0, 0], a[1, 0], a[2, 1], a[3, 1] = 1.0, -1.0, 1.0, -1.0
    d_hat = np.zeros(dof) if d_hat is None else d_hat
    srcs = [("boundary", face, 0) for face in ("xmin", "xmax", "ymin", "ymax")]
    return build_rows(h, a, np.zeros((4, 3)), d_hat, np.zeros((4, 3)), 0.0, params, mode, srcs)


def self_collision_values(segments, J, radii, pairs):
    """``h``, ``dh/dx`` for each link pair (static, no prediction of obstacles)."""
    if not pairs:
        return np.zeros(0), np.zeros((0, J.shape[-1]))
    i = np.array([p[0] for p in pairs])
    j = np.array([p[1] for p in pairs])
    d2, xi, tau, wa, wb = kernels.segment_pairs_sqdist(segments[i], segments[j])
    R = radii[i] + radii[j]
    h = d2 - R * R
    diff = 2.0 * (wa - wb)
    Ja = (1.0 - xi)[:, None, None] * J[i, 0] + xi[:, None, None] * J[i, 1]
    Jb = (1.0 - tau)[:, None, None] * J[j, 0] + tau[:, None, None] * J[j, 1]
    dhdx = np.einsum("pk,pkn->pn", diff, Ja - Jb)
    return h, dhdx


def self_collision_rows(segments, J, radii, pairs, params: RdcbfParams, mode: str, d_hat=None) -> RowSet:
    dof = J.shape[-1]
    h, dhdx = self_collision_values(segments, J, radii, pairs)
    if not len(h):
        return RowSet.empty(dof, mode)
    d_hat = np.zeros(dof) if d_hat is None else d_hat
    srcs = [("self", int(a), int(b)) for a, b in pairs]
    return build_rows(h, dhdx, np.zeros((len(h), 3)), d_hat, np.zeros((len(h), 3)), 0.0, params, mode, srcs)


def prune_rows(rows: RowSet, activation_h: float) -> RowSet:
    """Keep rows with ``h <= activation_h`` (violated rows always survive)."""
    if not activation_h > 0:
        raise ValueError("activation_h must be positive")
    keep = np.flatnonzero((rows.h <= activation_h) | (rows.h < 0))
    return RowSet(rows.a[keep], rows.b[keep], rows.h[keep], [rows.sources[k] for k in keep],
                  rows.mode, rows.total)


@dataclass
class SafetyReport:
    min_h: float
    active_rows: int
    violated: bool
