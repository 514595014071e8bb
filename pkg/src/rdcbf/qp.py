"""Safety-filter QP: ``min 1/2 |u - u_nom|^2  s.t.  a_k . u >= b_k,  lb <= u <= ub``.

The solver is the Goldfarb-Idnani dual active-set method specialised to an
identity Hessian. It starts from the unconstrained minimiser ``u_nom`` and
adds the most violated constraint (measured in normalised distance, so row
scaling does not change the pivot order) until none is violated. Box
bounds are treated as ordinary rows appended after the safety rows.

Infeasible problems are relaxed in two phases: an LP finds the least total
violation of the safety rows with the box kept hard, then the QP is solved
with every row's bound lowered by its optimal slack.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

log = logging.getLogger(__name__)

FEAS_TOL = 1e-12
ACTIVE_TOL = 1e-9
RELAX_PAD = 1e-10


@dataclass
class QpProblem:
    u_nom: np.ndarray
    A: np.ndarray  # (m, n), rows a_k
    b: np.ndarray  # (m,)
    lb: np.ndarray
    ub: np.ndarray
    sources: list = field(default_factory=list)

    def __post_init__(self):
        self.u_nom = np.asarray(self.u_nom, dtype=float).ravel()
        n = self.u_nom.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        if self.A.shape[0] != self.b.size:
            raise ValueError("row count mismatch between A and b")
        if np.any(self.lb > self.ub):
            raise ValueError("lb must not exceed ub")

    @classmethod
    def from_rows(cls, u_nom, rows, lb, ub) -> "QpProblem":
        """Build from ``(a, b)`` pairs or objects with ``.a``/``.b``."""
        n = np.asarray(u_nom).size
        A = [r.a if hasattr(r, "a") else r[0] for r in rows]
        b = [r.b if hasattr(r, "b") else r[1] for r in rows]
        return cls(u_nom, np.array(A, dtype=float).reshape(-1, n), np.array(b, dtype=float), lb, ub)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u_nom)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))
                    and not np.any(np.isnan(self.lb)) and not np.any(np.isnan(self.ub)))

    def stacked(self):
        """Safety rows followed by the finite box bounds as rows."""
        n = self.u_nom.size
        eye = np.eye(n)
        lo = np.flatnonzero(np.isfinite(self.lb))
        hi = np.flatnonzero(np.isfinite(self.ub))
        C = np.vstack([self.A, eye[lo], -eye[hi]])
        d = np.concatenate([self.b, self.lb[lo], -self.ub[hi]])
        return C, d

    def to_dict(self) -> dict:
        def enc(x):
            return [v if math.isfinite(v) else ("inf" if v > 0 else "-inf") for v in np.asarray(x, dtype=float).ravel()]
        return {"u_nom": enc(self.u_nom), "A": [enc(r) for r in self.A], "b": enc(self.b),
                "lb": enc(self.lb), "ub": enc(self.ub), "sources": [list(map(str, s)) for s in self.sources]}

    @classmethod
    def from_dict(cls, d: dict) -> "QpProblem":
        n = len(d["u_nom"])
        return cls(np.array(d["u_nom"], dtype=float), np.array(d["A"], dtype=float).reshape(-1, n),
                   np.array(d["b"], dtype=float), np.array(d["lb"], dtype=float), np.array(d["ub"], dtype=float))


@dataclass
class QpSolution:
    u: np.ndarray
    status: str  # optimal | relaxed | failed
    slack: float = 0.0
    kkt_residual: float = 0.0
    iterations: int = 0
    active: tuple = ()


def _gi(u0, C, d, max_iter):
    """Dual active-set iterations. Returns (u, active, multipliers, iters, ok)."""
    n = u0.size
    x = u0.copy()
    norms = np.linalg.norm(C, axis=1)
    norms[norms == 0] = 1.0
    active: list[int] = []
    lam = np.zeros(0)
    it = 0
    while True:
        s = (C @ x - d) / norms
        p = int(np.argmin(s)) if s.size else -1
        if p < 0 or s[p] >= -FEAS_TOL:
            return x, active, lam, it, True
        if p in active:
            # numerically stuck on an already active row
            return x, active, lam, it, False
        lam_p = 0.0
        cp = C[p]
        while True:
            it += 1
            if it > max_iter:
                return x, active, lam, it, False
            if active:
                N = C[active].T
                Q, R = np.linalg.qr(N)
                z = cp - Q @ (Q.T @ cp)
                r = np.linalg.solve(R, Q.T @ cp)
            else:
                z = cp.copy()
                r = np.zeros(0)
            # partial step limited by the first multiplier reaching zero
            t1, drop = math.inf, -1
            for j, rj in enumerate(r):
                if rj > 0:
                    tj = lam[j] / rj
                    if tj < t1:
                        t1, drop = tj, j
            zz = float(z @ cp)
            t2 = (d[p] - float(cp @ x)) / zz if zz > 1e-14 * float(cp @ cp) else math.inf
            t = min(t1, t2)
            if math.isinf(t):
                return x, active, lam, it, False
            if math.isfinite(t2):
                x = x + t * z
            lam = lam - t * r
            lam_p += t
            if t2 <= t1:
                active.append(p)
                lam = np.append(lam, lam_p)
                break
            del active[drop]
            lam = np.delete(lam, drop)


def _max_iter(m):
    return 10 * m + 100


def _relax(p: QpProblem):
    """Least total violation of the safety rows with the box kept hard."""
    m, n = p.A.shape
    c = np.concatenate([np.zeros(n), np.ones(m)])
    A_ub = np.hstack([-p.A, -np.eye(m)])
    bounds = [(lo if math.isfinite(lo) else None, hi if math.isfinite(hi) else None)
              for lo, hi in zip(p.lb, p.ub)] + [(0, None)] * m
    res = linprog(c, A_ub=A_ub, b_ub=-p.b, bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return np.maximum(res.x[n:], 0.0)


def solve(p: QpProblem) -> QpSolution:
    """Minimise ``|u - u_nom|^2`` over the safety rows and the box."""
    if not p.finite:
        return QpSolution(np.zeros_like(p.u_nom), "failed", kkt_residual=math.inf)
    C, d = p.stacked()
    cap = _max_iter(C.shape[0])
    u, active, _, it, ok = _gi(p.u_nom, C, d, cap)
    if ok:
        return QpSolution(u, "optimal", 0.0, check_kkt(p, u), it, tuple(active))
    if it > cap:
        log.warning("qp iteration cap %d exceeded", cap)
        return QpSolution(np.zeros_like(p.u_nom), "failed", kkt_residual=math.inf, iterations=it)
    slack = _relax(p)
    if slack is None:
        return QpSolution(np.zeros_like(p.u_nom), "failed", kkt_residual=math.inf, iterations=it)
    relaxed = QpProblem(p.u_nom, p.A, p.b - slack - RELAX_PAD * (1 + np.abs(p.b)) * (slack > 0), p.lb, p.ub)
    C2, d2 = relaxed.stacked()
    u, active, _, it2, ok = _gi(p.u_nom, C2, d2, _max_iter(C2.shape[0]))
    if not ok:
        return QpSolution(np.zeros_like(p.u_nom), "failed", kkt_residual=math.inf, iterations=it + it2)
    log.info("qp infeasible; relaxed with total slack %.3g", slack.sum())
    return QpSolution(u, "relaxed", float(slack.sum()), check_kkt(relaxed, u), it + it2, tuple(active))


def check_kkt(p: QpProblem, u) -> float:
    """Largest of primal infeasibility, stationarity, dual infeasibility and
    complementarity at ``u``. Multipliers come from least squares on the
    rows active at ``u``."""
    u = np.asarray(u, dtype=float)
    C, d = p.stacked()
    slack = C @ u - d
    primal = float(max(0.0, -slack.min())) if slack.size else 0.0
    act = np.flatnonzero(np.abs(slack) <= ACTIVE_TOL * (1 + np.abs(d)))
    g = u - p.u_nom
    if act.size:
        lam, *_ = np.linalg.lstsq(C[act].T, g, rcond=None)
        stat = float(np.linalg.norm(g - C[act].T @ lam))
        dual = float(max(0.0, -lam.min()))
        comp = float(np.max(np.abs(lam * slack[act])))
    else:
        stat, dual, comp = float(np.linalg.norm(g)), 0.0, 0.0
    return max(primal, stat, dual, comp)


def dump_problem(p: QpProblem, sol: QpSolution | None, path) -> None:
    """Write a problem (and optional solution) as JSON for offline triage."""
    from .io import atomic_write_text

    doc = {"problem": p.to_dict()}
    if sol is not None:
        doc["solution"] = {"u": sol.u.tolist(), "status": sol.status, "slack": sol.slack,
                           "kkt_residual": sol.kkt_residual if math.isfinite(sol.kkt_residual) else None,
                           "iterations": sol.iterations}
    atomic_write_text(path, json.dumps(doc, indent=1))
