"""Scenario engine: disturbed kinematics, scripted obstacles and the safety-filter loop.

Each planning cycle senses the obstacles (true positions, velocities scaled
by the scenario's corruption factor), updates the disturbance observer,
builds and prunes the safety rows at the predicted configuration, solves
the QP and holds the command while the physics advances in ``dt`` steps of
explicit Euler on ``xdot = u + d``.
"""
from __future__ import annotations

import copy
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import observer, qp, safety
from .io import atomic_write_csv, atomic_write_json
from .robot import KinematicModel, kinematics, self_collision_pairs

log = logging.getLogger(__name__)

GOAL_RADIUS = 0.1
BUILTIN = {"a": "scenario_a.json", "b": "scenario_b.json"}


class ConfigError(ValueError):
    """Invalid scenario or run configuration."""


# -- disturbance and sensing ---------------------------------------------------


@dataclass(frozen=True)
class DisturbanceProfile:
    """``d_i(t) = A_i sin(w_i t + phi_i)`` per channel, or identically zero."""

    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray
    kind: str = "trigonometric"

    @classmethod
    def none(cls, dof=8) -> "DisturbanceProfile":
        z = np.zeros(dof)
        return cls(z, z, z, "none")

    @property
    def omega0(self) -> float:
        """Bound on ``|d(t)|``."""
        return 0.0 if self.kind == "none" else float(np.linalg.norm(self.amplitude))

    @property
    def omega1(self) -> float:
        """Bound on ``|d'(t)|``."""
        return 0.0 if self.kind == "none" else float(np.linalg.norm(self.amplitude * self.frequency))

    def value(self, t):
        if self.kind == "none":
            return np.zeros_like(self.amplitude)
        return self.amplitude * np.sin(self.frequency * t + self.phase)

    def rate(self, t):
        if self.kind == "none":
            return np.zeros_like(self.amplitude)
        return self.amplitude * self.frequency * np.cos(self.frequency * t + self.phase)

    def euler_sum(self, t0, dt, n):
        """``sum_{k<n} d(t0 + k dt)``, the disturbance part of ``n`` Euler steps."""
        if self.kind == "none":
            return np.zeros_like(self.amplitude)
        ts = t0 + dt * np.arange(n)
        return (self.amplitude * np.sin(np.outer(ts, self.frequency) + self.phase)).sum(axis=0)


@dataclass(frozen=True)
class VelocityCorruption:
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.scale <= 1:
            raise ConfigError(f"velocity_scale must lie in (0, 1], got {self.scale}")

    def eps_v(self, max_speed: float) -> float:
        return (1.0 - self.scale) * max_speed

    def sense(self, v):
        return self.scale * np.asarray(v)


# -- obstacle motion -------------------------------------------------------------


@dataclass(frozen=True)
class Motion:
    """Piecewise-constant velocity script: ``velocity[k]`` holds on
    ``[times[k], times[k+1])`` and the last one holds forever. Before
    ``times[0]`` the obstacle rests at its initial position."""

    times: np.ndarray
    velocities: np.ndarray

    @classmethod
    def static(cls) -> "Motion":
        return cls(np.zeros(1), np.zeros((1, 3)))

    @classmethod
    def from_dict(cls, d: dict, where: str) -> "Motion":
        kind = d.get("type", "static")
        if kind == "static":
            return cls.static()
        if kind == "constant":
            return cls(np.zeros(1), np.array([_vec(d, "v", 3, where)]))
        if kind == "piecewise":
            segs = d.get("segments")
            if not segs:
                raise ConfigError(f"{where}.segments: expected a non-empty list of [t, vx, vy, vz]")
            arr = np.array(segs, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 4 or np.any(np.diff(arr[:, 0]) <= 0):
                raise ConfigError(f"{where}.segments: rows must be [t, vx, vy, vz] with increasing t")
            return cls(arr[:, 0], arr[:, 1:])
        if kind == "waypoints":
            pts = np.array(d.get("points", []), dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 4 or len(pts) < 2 or np.any(np.diff(pts[:, 0]) <= 0):
                raise ConfigError(f"{where}.points: need >= 2 rows [t, x, y, z] with increasing t")
            vel = np.diff(pts[:, 1:], axis=0) / np.diff(pts[:, 0])[:, None]
            return cls(pts[:, 0], np.vstack([vel, np.zeros((1, 3))]))
        raise ConfigError(f"{where}.type: unknown motion type {kind!r}")

    @property
    def max_speed(self) -> float:
        return float(np.linalg.norm(self.velocities, axis=1).max())

    def velocity(self, t: float):
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return np.zeros(3) if k < 0 else self.velocities[k]

    def displacement(self, t: float):
        """Offset from the initial position at time ``t``."""
        ends = np.append(self.times[1:], np.inf)
        span = np.clip(np.minimum(ends, t) - self.times, 0.0, None)
        return span @ self.velocities


@dataclass
class ScriptedObstacle:
    id: str
    shape: object
    p0: np.ndarray
    motion: Motion

    def position(self, t):
        return self.p0 + self.motion.displacement(t)


# -- scenario ------------------------------------------------------------------


@dataclass
class ControllerGains:
    kp_base: float = 3.0
    v_max: float = 1.0
    kp_arm: float = 2.0
    w_max: float = 1.0


@dataclass
class Goal:
    xy: np.ndarray
    pause: float = 0.0


@dataclass
class Scenario:
    name: str
    model: KinematicModel
    start: np.ndarray  # 8-vector
    carry_pose: np.ndarray  # 6-vector
    goals: list
    obstacles: list
    workspace: tuple | None
    duration: float
    dt: float
    period: float
    seed: int
    disturbance: dict
    corruption: VelocityCorruption
    gains: ControllerGains
    u_limits: np.ndarray  # per-channel |u| bound
    params: dict
    joint_jitter: float = 0.0
    self_collision: bool = True
    source: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    def disturbance_profile(self, rng) -> DisturbanceProfile:
        d = self.disturbance
        if d.get("kind", "none") == "none":
            return DisturbanceProfile.none(self.model.dof)
        amp = np.array(d["amplitude"], dtype=float)
        freq = np.array(d["frequency"], dtype=float)
        phase = d.get("phase", "random")
        phase = rng.uniform(0, 2 * math.pi, amp.size) if phase == "random" else np.array(phase, dtype=float)
        return DisturbanceProfile(amp, freq, phase, "trigonometric")

    def bounds(self):
        """Declared ``(omega0, omega1)``; the profile bounds are analytic."""
        prof = self.disturbance_profile(np.random.default_rng(0))
        return prof.omega0, prof.omega1

    def make_params(self, overrides=None) -> safety.RdcbfParams:
        p = dict(self.params)
        p.update({k: v for k, v in (overrides or {}).items() if v is not None})
        p.setdefault("T", self.period)
        w0, w1 = self.bounds()
        p["omega0"], p["omega1"] = w0, w1
        if "mu" not in p and "alpha" in p:
            p["mu"] = p["alpha"]
        try:
            return safety.RdcbfParams(**p)
        except TypeError as exc:
            raise ConfigError(f"params: {exc}") from None
        except safety.ParamError as exc:
            raise ConfigError(str(exc)) from None


def _vec(d, key, n, where):
    if key not in d:
        raise ConfigError(f"{where}.{key}: missing")
    try:
        v = np.array(d[key], dtype=float).reshape(n)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected {n} numbers, got {d[key]!r}") from None
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"{where}.{key}: non-finite value")
    return v


def _num(d, key, where, default=None, positive=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}.{key}: missing")
        return default
    try:
        v = float(d[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a number, got {d[key]!r}") from None
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {v}")
    return v


def _yaw(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return ((c, -s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0))


def _shape(d, where):
    kind = d.get("type")
    if kind == "sphere":
        return safety.Sphere(_num(d, "radius", where, positive=True))
    if kind == "capsule":
        return safety.Capsule(tuple(_vec(d, "p0", 3, where)), tuple(_vec(d, "p1", 3, where)),
                              _num(d, "radius", where, positive=True))
    if kind == "cuboid":
        ext = tuple(_vec(d, "extents", 3, where))
        if min(ext) <= 0:
            raise ConfigError(f"{where}.extents: must be positive")
        if "rotation" in d:
            rot = tuple(map(tuple, np.array(d["rotation"], dtype=float).reshape(3, 3)))
        else:
            rot = _yaw(_num(d, "yaw_deg", where, default=0.0))
        return safety.Box(ext, rot, bool(d.get("exact", False)))
    if kind == "rect":
        verts = np.array(d.get("vertices", []), dtype=float)
        if verts.shape != (4, 3):
            raise ConfigError(f"{where}.vertices: expected 4 points")
        try:
            from .geometry import Rect3
            Rect3(verts)
        except ValueError as exc:
            raise ConfigError(f"{where}.vertices: {exc}") from None
        return safety.Plate(tuple(map(tuple, verts)), _num(d, "radius", where, default=0.0))
    raise ConfigError(f"{where}.type: unknown shape {kind!r}")


def scenario_from_dict(d: dict, source: str = "<dict>", base_dir: Path | None = None) -> Scenario:
    where = source
    if not isinstance(d, dict):
        raise ConfigError(f"{source}: top level must be an object")
    if "model" in d and d["model"]:
        mpath = Path(d["model"])
        if base_dir is not None and not mpath.is_absolute():
            mpath = base_dir / mpath
        try:
            model = KinematicModel.load(mpath)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"{where}.model: cannot load {mpath}: {exc}") from None
    else:
        model = KinematicModel.default()
    nj = model.n_joints
    base = _vec(d, "start", 2, where)
    joints = _vec(d, "start_joints", nj, where) if "start_joints" in d else np.zeros(nj)
    carry = _vec(d, "carry_pose", nj, where) if "carry_pose" in d else joints.copy()
    goals = []
    for k, g in enumerate(d.get("goals", [])):
        gw = f"{where}.goals[{k}]"
        goals.append(Goal(_vec(g, "xy", 2, gw), _num(g, "pause", gw, default=0.0)))
    if not goals:
        raise ConfigError(f"{where}.goals: at least one goal required")
    obstacles = []
    seen = set()
    for k, o in enumerate(d.get("obstacles", [])):
        ow = f"{where}.obstacles[{k}]"
        oid = str(o.get("id", k))
        if oid in seen:
            raise ConfigError(f"{ow}.id: duplicate id {oid!r}")
        seen.add(oid)
        if "shape" not in o:
            raise ConfigError(f"{ow}.shape: missing")
        obstacles.append(ScriptedObstacle(oid, _shape(o["shape"], f"{ow}.shape"), _vec(o, "p", 3, ow),
                                          Motion.from_dict(o.get("motion", {}), f"{ow}.motion")))
    ws = d.get("workspace")
    if ws is not None:
        ws = tuple(_vec(d, "workspace", 4, where))
        if not (ws[0] < ws[1] and ws[2] < ws[3]):
            raise ConfigError(f"{where}.workspace: expected [xmin, xmax, ymin, ymax] with min < max")
    dist = d.get("disturbance", {"kind": "none"})
    if dist.get("kind", "none") not in ("none", "trigonometric"):
        raise ConfigError(f"{where}.disturbance.kind: expected 'none' or 'trigonometric'")
    if dist.get("kind") == "trigonometric":
        for key in ("amplitude", "frequency"):
            _vec(dist, key, model.dof, f"{where}.disturbance")
    ctl = d.get("controller", {})
    gains = ControllerGains(**{k: _num(ctl, k, f"{where}.controller", default=v)
                               for k, v in vars(ControllerGains()).items()})
    lim = d.get("limits", {})
    u_lim = np.concatenate([np.full(2, _num(lim, "base", f"{where}.limits", default=1.5, positive=True)),
                            np.full(nj, _num(lim, "joint", f"{where}.limits", default=2.5, positive=True))])
    params = dict(d.get("params", {}))
    unknown = set(params) - {"gamma", "alpha", "mu", "beta", "T", "margin", "activation_h", "e0"}
    if unknown:
        raise ConfigError(f"{where}.params: unknown keys {sorted(unknown)}")
    sc = Scenario(
        name=str(d.get("name", Path(source).stem)), model=model, start=np.concatenate([base, joints]),
        carry_pose=carry, goals=goals, obstacles=obstacles, workspace=ws,
        duration=_num(d, "duration", where, default=30.0), dt=_num(d, "dt", where, default=1e-3, positive=True),
        period=_num(d, "period", where, default=0.02, positive=True), seed=int(d.get("seed", 0)),
        disturbance=dist, corruption=VelocityCorruption(_num(d, "velocity_scale", where, default=1.0)),
        gains=gains, u_limits=u_lim, params=params, joint_jitter=_num(d, "joint_jitter", where, default=0.0),
        self_collision=bool(d.get("self_collision", True)), source=source, raw=copy.deepcopy(d))
    if sc.duration < 0:
        raise ConfigError(f"{where}.duration: must be non-negative")
    return sc


def load_scenario(path) -> Scenario:
    """Load a scenario JSON file; ``a``/``b`` select the shipped replicas."""
    key = str(path).lower()
    if key in BUILTIN:
        text = resources.files("rdcbf").joinpath(f"data/{BUILTIN[key]}").read_text()
        source, base_dir = BUILTIN[key], None
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read scenario: {exc.strerror}") from None
        source, base_dir = str(path), Path(path).parent
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return scenario_from_dict(d, source, base_dir)


# -- controller ----------------------------------------------------------------


def nominal_controller(state, goal, gains: ControllerGains, carry_pose) -> np.ndarray:
    """Saturated proportional go-to-goal for the base, joint regulation for the arm."""
    x = np.asarray(state, dtype=float)
    e = np.asarray(goal, dtype=float) - x[:2]
    ub = gains.kp_base * e
    n = float(np.linalg.norm(ub))
    if n > gains.v_max:
        ub *= gains.v_max / n
    err = np.remainder(np.asarray(carry_pose) - x[2:] + math.pi, 2 * math.pi) - math.pi
    ua = np.clip(gains.kp_arm * err, -gains.w_max, gains.w_max)
    return np.concatenate([ub, ua])


# -- world and stepping ----------------------------------------------------------


@dataclass
class World:
    scenario: Scenario
    params: safety.RdcbfParams
    profile: DisturbanceProfile
    obstacle_set: safety.ObstacleSet
    eps_v: np.ndarray
    pairs: list
    x: np.ndarray
    t: float = 0.0
    u_prev: np.ndarray = None
    dob: observer.DobState = None
    goal_index: int = 0
    pause_left: float = 0.0
    done: bool = False
    cycle: int = 0

    def obstacle_state(self, t):
        P = np.array([o.position(t) for o in self.scenario.obstacles]).reshape(-1, 3)
        V = np.array([o.motion.velocity(t) for o in self.scenario.obstacles]).reshape(-1, 3)
        return P, V


def make_world(scenario: Scenario, seed: int | None = None, overrides=None) -> World:
    seed = scenario.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    profile = scenario.disturbance_profile(rng)
    params = scenario.make_params(overrides)
    x = scenario.start.copy()
    if scenario.joint_jitter > 0:
        x[2:] += rng.uniform(-scenario.joint_jitter, scenario.joint_jitter, scenario.model.n_joints)
    eps = np.array([scenario.corruption.eps_v(o.motion.max_speed) for o in scenario.obstacles])
    obs = safety.ObstacleSet([safety.Obstacle(o.id, o.shape, o.p0) for o in scenario.obstacles])
    pairs = self_collision_pairs(scenario.model) if scenario.self_collision else []
    w = World(scenario, params, profile, obs, eps, pairs, x, 0.0, np.zeros(scenario.model.dof),
              observer.dob_init(x, params.alpha))
    return w


def _rows(w: World, mode: str, x_eval, P, V_hat, predict=True):
    sc = w.scenario
    seg, J = kinematics(sc.model, x_eval)
    segs = seg.segments
    p = w.params
    T = p.T if predict else 0.0
    if mode == "cbf":
        V_hat = np.zeros_like(V_hat)
    pv = safety.obstacle_values(segs, J, seg.radii, w.obstacle_set, P, V_hat, w.eps_v, T, p.margin)
    d_hat = w.dob.d_hat if mode in safety.DISTURBANCE_MODES else np.zeros(sc.model.dof)
    v_hat = pv.v_hat if mode != "cbf" else np.zeros_like(pv.v_hat)
    sets = [safety.build_rows(pv.h, pv.dhdx, pv.dhdp, d_hat, v_hat, pv.eps_v, p, mode, pv.sources)]
    sets.append(safety.self_collision_rows(segs, J, seg.radii, w.pairs, p, mode, d_hat))
    sets.append(safety.boundary_rows(x_eval, sc.workspace, p, mode, d_hat, sc.model.dof))
    return safety.RowSet.concat(sets, mode, sc.model.dof)


def true_min_h(w: World, x=None, t=None) -> float:
    """Minimum safety value at the actual configuration and obstacle positions."""
    sc = w.scenario
    x = w.x if x is None else x
    t = w.t if t is None else t
    P, _ = w.obstacle_state(t)
    seg, J = kinematics(sc.model, x)
    hs = []
    if len(w.obstacle_set):
        pv = safety.obstacle_values(seg.segments, J, seg.radii, w.obstacle_set, P, np.zeros_like(P),
                                    w.eps_v, 0.0, w.params.margin, predict=False)
        hs.append(pv.h)
    hs.append(safety.self_collision_values(seg.segments, J, seg.radii, w.pairs)[0])
    if sc.workspace is not None:
        xmin, xmax, ymin, ymax = sc.workspace
        hs.append(np.array([x[0] - xmin, xmax - x[0], x[1] - ymin, ymax - x[1]]))
    h = np.concatenate(hs) if hs else np.zeros(0)
    return float(h.min()) if h.size else math.inf


def initial_h0(w: World) -> float:
    """Smallest safety value at t = 0 over every pair, including rows later
    dropped for having no dependence on ``u``."""
    sc = w.scenario
    P, V = w.obstacle_state(0.0)
    seg, J = kinematics(sc.model, w.x)
    hs = [safety.self_collision_values(seg.segments, J, seg.radii, w.pairs)[0]]
    if len(w.obstacle_set):
        hs.append(safety.obstacle_values(seg.segments, J, seg.radii, w.obstacle_set, P, sc.corruption.sense(V),
                                         w.eps_v, w.params.T, w.params.margin).h)
    if sc.workspace is not None:
        hs.append(safety.boundary_rows(w.x, sc.workspace, w.params, "cbf", dof=sc.model.dof).h)
    h = np.concatenate(hs)
    return float(h.min()) if h.size else math.inf


@dataclass
class CycleLog:
    t: float
    x: np.ndarray
    u_nom: np.ndarray
    u_safe: np.ndarray
    d: np.ndarray
    d_hat: np.ndarray
    min_h: float
    active_rows: int
    total_rows: int
    status: str
    plan_seconds: float


def step(w: World, mode: str, dump_dir=None) -> CycleLog:
    """Advance the world by one planning period."""
    sc = w.scenario
    n_sub = max(1, int(round(sc.period / sc.dt)))
    t0 = w.t
    P, V = w.obstacle_state(t0)
    min_h = true_min_h(w)
    tic = time.perf_counter()
    V_hat = sc.corruption.sense(V)
    x_pred = w.x + w.params.T * w.u_prev
    rows = _rows(w, mode, x_pred, P, V_hat)
    total = len(rows)
    rows = safety.prune_rows(rows, w.params.activation_h)
    goal = sc.goals[w.goal_index].xy
    u_nom = nominal_controller(w.x, goal, sc.gains, sc.carry_pose)
    if w.pause_left > 0:
        u_nom[:2] = 0.0
    prob = qp.QpProblem(u_nom, rows.a, rows.b, -sc.u_limits, sc.u_limits, rows.sources)
    sol = qp.solve(prob)
    u = sol.u if sol.status != "failed" else np.zeros_like(u_nom)
    plan = time.perf_counter() - tic
    if dump_dir is not None and sol.status != "optimal":
        qp.dump_problem(prob, sol, Path(dump_dir) / f"qp_{w.cycle:06d}.json")
    d_now = w.profile.value(t0)
    # physics substeps; the observer samples the state at every one of them
    ts = t0 + sc.dt * np.arange(n_sub)
    if w.profile.kind == "none":
        incs = np.broadcast_to(sc.dt * u, (n_sub, u.size))
    else:
        incs = sc.dt * (u + w.profile.amplitude * np.sin(np.outer(ts, w.profile.frequency) + w.profile.phase))
    xs = np.vstack([w.x, w.x + np.cumsum(incs, axis=0)])
    w.dob = observer.dob_update_many(w.dob, xs, u, sc.dt)
    w.x = xs[-1]
    w.t = t0 + n_sub * sc.dt
    w.u_prev = u
    w.cycle += 1
    _advance_goal(w, n_sub * sc.dt)
    return CycleLog(t0, w.x.copy(), u_nom, u, d_now, w.dob.d_hat.copy(), min_h, len(rows), total,
                    sol.status, plan)


def _advance_goal(w: World, elapsed):
    sc = w.scenario
    if w.pause_left > 0:
        w.pause_left -= elapsed
        if w.pause_left <= 1e-12:
            w.pause_left = 0.0
            w.goal_index += 1
        return
    if np.linalg.norm(w.x[:2] - sc.goals[w.goal_index].xy) <= GOAL_RADIUS:
        if w.goal_index == len(sc.goals) - 1:
            w.done = True
        elif sc.goals[w.goal_index].pause > 0:
            w.pause_left = sc.goals[w.goal_index].pause
        else:
            w.goal_index += 1


# -- runs ----------------------------------------------------------------------


@dataclass
class RunRecord:
    scenario: str
    mode: str
    seed: int
    log: list
    success: bool
    reached_goal: bool
    path_length: float
    total_time: float
    mean_frequency: float
    min_h: float
    all_optimal: bool
    n_relaxed: int
    n_failed: int
    mean_active_rows: float
    mean_total_rows: float
    config: dict

    def summary(self) -> dict:
        s = {k: getattr(self, k) for k in ("scenario", "mode", "seed", "success", "reached_goal", "path_length",
                                          "total_time", "mean_frequency", "min_h", "all_optimal", "n_relaxed",
                                          "n_failed", "mean_active_rows", "mean_total_rows")}
        s["cycles"] = len(self.log)
        s["config"] = self.config
        for k, v in s.items():
            if isinstance(v, float) and not math.isfinite(v):
                s[k] = None
        return s

    def timing_free_summary(self) -> dict:
        s = self.summary()
        s.pop("mean_frequency")
        return s


def prepare(scenario: Scenario, mode: str, overrides=None, seed: int | None = None, validate=True):
    """Apply overrides, build the initial world and check the parameters.

    Returns ``(scenario, world)``; raises :class:`ConfigError` on bad input.
    """
    try:
        safety._check_mode(mode)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    seed = scenario.seed if seed is None else int(seed)
    if overrides and overrides.get("dt") is not None:
        scenario = copy.copy(scenario)
        scenario.dt = float(overrides["dt"])
    if overrides and overrides.get("period") is not None:
        scenario = copy.copy(scenario)
        scenario.period = float(overrides["period"])
    ov = {k: v for k, v in (overrides or {}).items() if k not in ("dt", "period")}
    if not 0 < scenario.dt <= 0.1:
        raise ConfigError(f"dt must lie in (0, 0.1] (got {scenario.dt})")
    if not scenario.period >= scenario.dt:
        raise ConfigError(f"period ({scenario.period}) must be >= dt ({scenario.dt})")
    w = make_world(scenario, seed, ov)
    if validate:
        h0 = initial_h0(w)
        if not h0 > 0:
            raise ConfigError(f"{scenario.source}: initial safety value must be positive (h0 = {h0:.6g})")
        if mode in safety.DISTURBANCE_MODES:
            try:
                w.params.validate(h0)
            except safety.ParamError as exc:
                raise ConfigError(str(exc)) from None
    return scenario, w


def run(scenario: Scenario, mode: str, overrides=None, seed: int | None = None, dump_dir=None,
        validate=True) -> RunRecord:
    """Simulate until the final goal is reached or the duration cap expires."""
    seed = scenario.seed if seed is None else int(seed)
    scenario, w = prepare(scenario, mode, overrides, seed, validate)
    logs = []
    while not w.done and w.t < scenario.duration - 1e-12:
        logs.append(step(w, mode, dump_dir))
    final_h = true_min_h(w)
    xs = np.array([scenario.start[:2]] + [c.x[:2] for c in logs])
    length = float(np.linalg.norm(np.diff(xs, axis=0), axis=1).sum())
    min_h = min([c.min_h for c in logs] + [final_h])
    plan = np.array([c.plan_seconds for c in logs])
    statuses = [c.status for c in logs]
    config = {"mode": mode, "seed": seed, "dt": scenario.dt, "period": scenario.period,
              "gamma": w.params.gamma, "alpha": w.params.alpha, "mu": w.params.mu, "beta": w.params.beta,
              "T": w.params.T, "margin": w.params.margin, "activation_h": _finite_or_str(w.params.activation_h),
              "e0": w.params.e0, "omega0": w.params.omega0, "omega1": w.params.omega1,
              "velocity_scale": scenario.corruption.scale, "duration": scenario.duration}
    return RunRecord(
        scenario=scenario.name, mode=mode, seed=seed, log=logs, success=bool(w.done and min_h >= 0),
        reached_goal=bool(w.done), path_length=length, total_time=w.t,
        mean_frequency=float(1.0 / plan.mean()) if plan.size and plan.mean() > 0 else 0.0,
        min_h=min_h, all_optimal=all(s == "optimal" for s in statuses),
        n_relaxed=statuses.count("relaxed"), n_failed=statuses.count("failed"),
        mean_active_rows=float(np.mean([c.active_rows for c in logs])) if logs else 0.0,
        mean_total_rows=float(np.mean([c.total_rows for c in logs])) if logs else 0.0, config=config)


def _finite_or_str(v):
    return v if math.isfinite(v) else "inf"


LOG_HEADER = (["t"] + [f"x{i}" for i in range(8)] + [f"u_nom{i}" for i in range(8)]
              + [f"u_safe{i}" for i in range(8)] + [f"d{i}" for i in range(8)] + [f"d_hat{i}" for i in range(8)]
              + ["min_h", "active_rows", "total_rows", "status", "plan_ms"])


def write_run(rec: RunRecord, out_dir, stem: str | None = None):
    """CSV time series plus JSON summary, both written atomically."""
    out = Path(out_dir)
    stem = stem or f"{rec.scenario}_{rec.mode}_seed{rec.seed}"
    rows = []
    for c in rec.log:
        rows.append([f"{c.t:.6f}", *(f"{v:.9g}" for v in c.x), *(f"{v:.9g}" for v in c.u_nom),
                     *(f"{v:.9g}" for v in c.u_safe), *(f"{v:.9g}" for v in c.d), *(f"{v:.9g}" for v in c.d_hat),
                     f"{c.min_h:.9g}", c.active_rows, c.total_rows, c.status, f"{1e3 * c.plan_seconds:.4f}"])
    atomic_write_csv(out / f"{stem}.csv", LOG_HEADER, rows)
    atomic_write_json(out / f"{stem}.json", rec.summary())
    return out / f"{stem}.csv", out / f"{stem}.json"


def write_row_dump(w: World, mode: str, path) -> None:
    """Current constraint rows as CSV (source, h, b, a...) for debugging."""
    P, V = w.obstacle_state(w.t)
    rows = _rows(w, mode, w.x + w.params.T * w.u_prev, P, w.scenario.corruption.sense(V))
    dof = w.scenario.model.dof
    atomic_write_csv(path, ["source", "h", "b"] + [f"a{i}" for i in range(dof)],
                     [["/".join(map(str, s)), f"{h:.12g}", f"{b:.12g}", *(f"{v:.12g}" for v in a)]
                      for s, h, b, a in zip(rows.sources, rows.h, rows.b, rows.a)])


# -- batches -------------------------------------------------------------------


def _run_summary(args):
    scenario, mode, seed, overrides = args
    rec = run(scenario, mode, overrides, seed)
    return rec.summary()


def aggregate(summaries) -> dict:
    n = len(summaries)
    if n == 0:
        raise ValueError("no runs to aggregate")
    succ = sum(s["success"] for s in summaries)
    mins = [s["min_h"] for s in summaries if s["min_h"] is not None]
    return {
        "n_runs": n,
        "successes": succ,
        "success_rate": succ / n,
        "mean_frequency": float(np.mean([s["mean_frequency"] for s in summaries])),
        "mean_min_h": float(np.mean(mins)) if mins else None,
        "min_min_h": float(np.min(mins)) if mins else None,
        "all_optimal_runs": sum(s["all_optimal"] for s in summaries),
        "mean_active_rows": float(np.mean([s["mean_active_rows"] for s in summaries])),
        "mean_path_length": float(np.mean([s["path_length"] for s in summaries])),
        "runs": sorted(summaries, key=lambda s: s["seed"]),
    }


def monte_carlo(scenario: Scenario, modes, n_runs: int, overrides=None, jobs: int = 1, seed0: int = 0) -> dict:
    """Seeds ``seed0 .. seed0 + n_runs - 1`` for every mode, aggregated per mode."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    for m in modes:
        safety._check_mode(m)
    tasks = [(scenario, m, seed0 + k, overrides) for m in modes for k in range(n_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_summary, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_run_summary(t) for t in tasks]
    out = {}
    for m in modes:
        out[m] = aggregate([r for r in results if r["mode"] == m])
    return out


# -- obstacle speed sweep ------------------------------------------------------


def with_obstacle_speed(scenario: Scenario, speed: float) -> Scenario:
    """Copy of ``scenario`` with every moving obstacle's script rescaled so its
    peak speed equals ``speed``. Static obstacles stay static."""
    if not speed >= 0:
        raise ConfigError(f"obstacle speed must be >= 0 (got {speed})")
    out = copy.copy(scenario)
    obs = []
    for o in scenario.obstacles:
        vmax = o.motion.max_speed
        if vmax > 0:
            o = ScriptedObstacle(o.id, o.shape, o.p0, Motion(o.motion.times, o.motion.velocities * (speed / vmax)))
        obs.append(o)
    out.obstacles = obs
    return out


def max_safe_speed(scenario: Scenario, mode: str, seed: int = 0, hi: float = 2.0, tol: float = 0.02,
                   overrides=None):
    """Bisect the largest obstacle speed in ``[0, hi]`` at which ``run`` succeeds.

    Assumes success is monotone in speed, which a single seed does not
    guarantee; the result is the bracket edge found by bisection. Returns
    ``(speed, trials)`` with ``trials`` a list of ``(speed, success)``.
    """
    trials = []

    def ok(v):
        rec = run(with_obstacle_speed(scenario, v), mode, overrides, seed)
        trials.append((float(v), rec.success))
        return rec.success

    if not ok(0.0):
        return 0.0, trials
    if ok(hi):
        return float(hi), trials
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, trials
