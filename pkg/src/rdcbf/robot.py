"""Kinematics of the planar-base mobile manipulator.

The state vector is ``x = (base_x, base_y, q1, ..., q6)``. Each robot
component is a capsule rigidly attached to one kinematic frame; forward
kinematics maps ``x`` to the world-frame capsule segments and
:func:`link_jacobians` gives the 3x8 position Jacobian of every endpoint.

Model files are JSON::

    {
      "version": 1,
      "name": "...",
      "base": {"height": 0.0},
      "joints": [{"name": "j1", "parent": -1, "origin": [x, y, z],
                  "axis": [ax, ay, az]}, ...],
      "links": [{"name": "base", "frame": -1, "p0": [...], "p1": [...],
                 "radius": 0.25}, ...],
      "self_collision_exclusions": [[i, j], ...]
    }

``parent``/``frame`` index joints; ``-1`` is the base frame, which sits at
``(base_x, base_y, height)`` with fixed orientation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import Segment3

BASE_DOF = 2


def wrap_angle(q):
    """Wrap to (-pi, pi]."""
    q = np.asarray(q, dtype=float)
    w = np.remainder(q + math.pi, 2 * math.pi) - math.pi
    return np.where(w == -math.pi, math.pi, w)


@dataclass(frozen=True)
class RobotState:
    base: np.ndarray
    joints: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).reshape(BASE_DOF)
        joints = wrap_angle(np.asarray(self.joints, dtype=float).ravel())
        if not (np.all(np.isfinite(base)) and np.all(np.isfinite(joints))):
            raise ValueError("non-finite robot state")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "joints", joints)

    @classmethod
    def from_vector(cls, x) -> "RobotState":
        x = np.asarray(x, dtype=float)
        return cls(x[:BASE_DOF], x[BASE_DOF:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.base, self.joints])


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int
    origin: np.ndarray
    axis: np.ndarray


@dataclass(frozen=True)
class Link:
    name: str
    frame: int
    p0: np.ndarray
    p1: np.ndarray
    radius: float


@dataclass(frozen=True)
class LinkGeometry:
    segments: np.ndarray  # (L, 2, 3)
    radii: np.ndarray  # (L,)

    def segment(self, i: int) -> Segment3:
        return Segment3(self.segments[i, 0], self.segments[i, 1])

    def __len__(self):
        return len(self.radii)


class KinematicModel:
    """Serial/tree chain of revolute joints on a planar translating base."""

    def __init__(self, joints, links, base_height=0.0, exclusions=(), name="", version=1):
        self.joints = tuple(joints)
        self.links = tuple(links)
        self.base_height = float(base_height)
        self.exclusions = tuple(tuple(sorted(p)) for p in exclusions)
        self.name = name
        self.version = version
        nj = len(self.joints)
        for k, j in enumerate(self.joints):
            if not -1 <= j.parent < k:
                raise ValueError(f"joint {j.name!r}: parent {j.parent} must precede it")
        for link in self.links:
            if link.radius <= 0:
                raise ValueError(f"link {link.name!r}: radius must be positive")
            if not -1 <= link.frame < nj:
                raise ValueError(f"link {link.name!r}: unknown frame {link.frame}")
        # ancestors[f, k]: joint k moves frame f (f = -1 maps to row 0)
        anc = np.zeros((nj + 1, nj), dtype=bool)
        for k, j in enumerate(self.joints):
            anc[k + 1] = anc[j.parent + 1]
            anc[k + 1, k] = True
        self._ancestors = anc
        self._link_frames = np.array([link.frame for link in self.links])
        self._local = np.array([[link.p0, link.p1] for link in self.links], dtype=float).reshape(-1, 2, 3)
        self._radii = np.array([link.radius for link in self.links], dtype=float)
        self._origins = np.array([j.origin for j in self.joints], dtype=float).reshape(-1, 3)
        self._axes = np.array([j.axis for j in self.joints], dtype=float).reshape(-1, 3)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def dof(self) -> int:
        return BASE_DOF + self.n_joints

    @property
    def radii(self) -> np.ndarray:
        return self._radii

    @classmethod
    def from_dict(cls, d: dict) -> "KinematicModel":
        joints = []
        for j in d["joints"]:
            axis = np.asarray(j["axis"], dtype=float)
            joints.append(Joint(j["name"], int(j["parent"]), np.asarray(j["origin"], dtype=float),
                                axis / np.linalg.norm(axis)))
        links = [Link(l["name"], int(l["frame"]), np.asarray(l["p0"], dtype=float),
                      np.asarray(l["p1"], dtype=float), float(l["radius"])) for l in d["links"]]
        return cls(joints, links, d.get("base", {}).get("height", 0.0),
                   d.get("self_collision_exclusions", ()), d.get("name", ""), d.get("version", 1))

    @classmethod
    def load(cls, path) -> "KinematicModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls) -> "KinematicModel":
        text = resources.files("rdcbf").joinpath("data/default_robot.json").read_text()
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "name": self.name,
            "base": {"height": self.base_height},
            "joints": [{"name": j.name, "parent": j.parent, "origin": j.origin.tolist(),
                        "axis": j.axis.tolist()} for j in self.joints],
            "links": [{"name": l.name, "frame": l.frame, "p0": l.p0.tolist(), "p1": l.p1.tolist(),
                       "radius": l.radius} for l in self.links],
            "self_collision_exclusions": [list(p) for p in self.exclusions],
        }

    # -- kinematics ---------------------------------------------------------

    def frames(self, x):
        """World positions, rotations and joint axes of every joint frame."""
        x = np.asarray(x, dtype=float)
        nj = self.n_joints
        pos = np.empty((nj, 3))
        rot = np.empty((nj, 3, 3))
        axes = np.empty((nj, 3))
        base_p = np.array([x[0], x[1], self.base_height])
        for k, j in enumerate(self.joints):
            if j.parent < 0:
                pp, pr = base_p, np.eye(3)
            else:
                pp, pr = pos[j.parent], rot[j.parent]
            pos[k] = pp + pr @ self._origins[k]
            w = pr @ self._axes[k]
            axes[k] = w
            rot[k] = _axis_angle(w, x[BASE_DOF + k]) @ pr
        return base_p, pos, rot, axes

    def _segments(self, base_p, pos, rot):
        out = np.empty_like(self._local)
        for i, f in enumerate(self._link_frames):
            if f < 0:
                out[i] = base_p + self._local[i]
            else:
                out[i] = pos[f] + self._local[i] @ rot[f].T
        return out


def _axis_angle(w, angle):
    """Rotation matrix for ``angle`` about unit vector ``w``."""
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = w
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def _as_vector(state) -> np.ndarray:
    if isinstance(state, RobotState):
        return state.vector
    return np.asarray(state, dtype=float)


def forward_kinematics(model: KinematicModel, state) -> LinkGeometry:
    """Capsule segments of every link at ``state`` (RobotState or 8-vector)."""
    base_p, pos, rot, _ = model.frames(_as_vector(state))
    return LinkGeometry(model._segments(base_p, pos, rot), model.radii)


def kinematics(model: KinematicModel, state):
    """Forward kinematics and endpoint Jacobians in one pass.

    Returns ``(LinkGeometry, J)`` with ``J`` of shape (L, 2, 3, dof).
    """
    x = _as_vector(state)
    base_p, pos, rot, axes = model.frames(x)
    seg = model._segments(base_p, pos, rot)
    L = seg.shape[0]
    J = np.zeros((L, 2, 3, model.dof))
    J[:, :, 0, 0] = 1.0
    J[:, :, 1, 1] = 1.0
    # revolute columns: w_k x (p - o_k) for every joint moving the link
    rel = seg[:, :, None, :] - pos[None, None, :, :]  # (L, 2, nj, 3)
    cols = np.cross(axes[None, None, :, :], rel)
    mask = model._ancestors[model._link_frames + 1]  # (L, nj)
    cols *= mask[:, None, :, None]
    J[:, :, :, BASE_DOF:] = np.swapaxes(cols, 2, 3)
    return LinkGeometry(seg, model.radii), J


def link_jacobians(model: KinematicModel, state) -> np.ndarray:
    """Endpoint position Jacobians, shape (L, 2, 3, dof)."""
    return kinematics(model, state)[1]


def self_collision_pairs(model: KinematicModel) -> list[tuple[int, int]]:
    """Non-adjacent link pairs minus the model's configured exclusions.

    Two links are adjacent when they share a frame or one is the nearest
    link-carrying ancestor of the other.
    """
    frames = [l.frame for l in model.links]
    carrying = set(frames)

    def link_parent(f):
        while f >= 0:
            f = model.joints[f].parent
            if f in carrying or f < 0:
                return f
        return None

    excluded = set(model.exclusions)
    pairs = []
    for i in range(len(frames)):
        for j in range(i + 1, len(frames)):
            fi, fj = frames[i], frames[j]
            if fi == fj or link_parent(fj) == fi or link_parent(fi) == fj:
                continue
            if (i, j) in excluded:
                continue
            pairs.append((i, j))
    return pairs


def save_model(model: KinematicModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2))
