"""Brute-force oracles for the distance queries and a seeded fuzz driver.

The oracles never touch the closed-form branch logic used in
:mod:`rdcbf.geometry`: they sample the parameter domain on a dense grid,
then refine the best sample by exact cyclic coordinate descent (each
coordinate of a convex quadratic is minimised by a clamped projection).
Everything is vectorised over instances.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry as g
from . import kernels

TOL_ABS = 1e-9
STOP_GAP = 1e-13


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _safe_div(num, den):
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def oracle_point_segment(p, s0, s1, samples=1025, iters=80):
    """Dense 1D sampling followed by golden-section refinement."""
    p, s0, s1 = (np.asarray(x, dtype=float) for x in (p, s0, s1))
    d = s1 - s0
    ts = np.linspace(0.0, 1.0, samples)
    pts = s0[:, None, :] + ts[None, :, None] * d[:, None, :]
    vals = _dot(pts - p[:, None, :], pts - p[:, None, :])
    k = np.argmin(vals, axis=1)
    lo = ts[np.maximum(k - 1, 0)]
    hi = ts[np.minimum(k + 1, samples - 1)]
    f = lambda t: _dot(s0 + t[:, None] * d - p, s0 + t[:, None] * d - p)  # noqa: E731
    invphi = (np.sqrt(5) - 1) / 2
    for _ in range(iters):
        c = hi - invphi * (hi - lo)
        e = lo + invphi * (hi - lo)
        left = f(c) <= f(e)
        hi = np.where(left, e, hi)
        lo = np.where(left, lo, c)
    best = np.minimum(f((lo + hi) / 2), vals.min(axis=1))
    return best


def oracle_segment_segment(a0, a1, b0, b1, grid=32, max_sweeps=200000, chunk=2048):
    """Grid over (xi, tau) then cyclic coordinate descent until stationary."""
    a0, a1, b0, b1 = (np.asarray(x, dtype=float) for x in (a0, a1, b0, b1))
    n = a0.shape[0]
    da, db = a1 - a0, b1 - b0
    laa, lbb = _dot(da, da), _dot(db, db)
    ts = np.linspace(0.0, 1.0, grid)
    xi = np.empty(n)
    tau = np.empty(n)
    for s in range(0, n, chunk):
        sl = slice(s, s + chunk)
        A = a0[sl, None, :] + ts[None, :, None] * da[sl, None, :]
        B = b0[sl, None, :] + ts[None, :, None] * db[sl, None, :]
        diff = A[:, :, None, :] - B[:, None, :, :]
        vals = _dot(diff, diff).reshape(A.shape[0], -1)
        k = np.argmin(vals, axis=1)
        xi[sl] = ts[k // grid]
        tau[sl] = ts[k % grid]
    # two-block descent contracts the objective gap by at most `coupling`
    # per sweep, so a sweep gain below STOP_GAP * (1 - coupling) bounds the
    # remaining gap by STOP_GAP
    coupling = np.clip(_safe_div(_dot(da, db) ** 2, laa * lbb), 0.0, 1.0)
    f = lambda i: _dot(a0[i] + xi[i, None] * da[i] - b0[i] - tau[i, None] * db[i],  # noqa: E731
                       a0[i] + xi[i, None] * da[i] - b0[i] - tau[i, None] * db[i])
    active = np.arange(n)
    prev = f(active)
    for _ in range(max_sweeps):
        if active.size == 0:
            break
        i = active
        pb = b0[i] + tau[i, None] * db[i]
        nxi = np.clip(_safe_div(_dot(da[i], pb - a0[i]), laa[i]), 0.0, 1.0)
        pa = a0[i] + nxi[:, None] * da[i]
        ntau = np.clip(_safe_div(_dot(db[i], pa - b0[i]), lbb[i]), 0.0, 1.0)
        step = np.maximum(np.abs(nxi - xi[i]), np.abs(ntau - tau[i]))
        xi[i] = nxi
        tau[i] = ntau
        cur = f(i)
        keep = (step > 1e-15) & (prev - cur > STOP_GAP * (1.0 - coupling[i]))
        active = i[keep]
        prev = cur[keep]
    e = a0 + xi[:, None] * da - b0 - tau[:, None] * db
    return _dot(e, e)


def oracle_segment_rect(p0, p1, verts, grid=11, max_sweeps=200000, chunk=1024):
    """Grid over (t, u, v) then alternating exact minimisation.

    Assumes orthogonal rectangle edges, so the rectangle coordinates
    decouple once the segment parameter is fixed.
    """
    p0, p1, verts = (np.asarray(x, dtype=float) for x in (p0, p1, verts))
    n = p0.shape[0]
    d = p1 - p0
    o = verts[:, 0]
    e1 = verts[:, 1] - o
    e2 = verts[:, 3] - o
    ldd, l1, l2 = _dot(d, d), _dot(e1, e1), _dot(e2, e2)
    ts = np.linspace(0.0, 1.0, grid)
    t = np.empty(n)
    for s in range(0, n, chunk):
        sl = slice(s, s + chunk)
        P = p0[sl, None, :] + ts[None, :, None] * d[sl, None, :]
        Q = (o[sl, None, None, :] + ts[None, :, None, None] * e1[sl, None, None, :]
             + ts[None, None, :, None] * e2[sl, None, None, :]).reshape(P.shape[0], -1, 3)
        diff = P[:, :, None, :] - Q[:, None, :, :]
        vals = _dot(diff, diff).reshape(P.shape[0], -1)
        k = np.argmin(vals, axis=1)
        t[sl] = ts[k // (grid * grid)]
    u = np.zeros(n)
    v = np.zeros(n)
    # coupling between the segment block and the in-plane block
    in_plane = _safe_div(_dot(d, e1) ** 2, ldd * l1) + _safe_div(_dot(d, e2) ** 2, ldd * l2)
    coupling = np.clip(in_plane, 0.0, 1.0)

    def f(i):
        e = p0[i] + t[i, None] * d[i] - (o[i] + u[i, None] * e1[i] + v[i, None] * e2[i])
        return _dot(e, e)

    active = np.arange(n)
    prev = np.full(n, np.inf)
    for _ in range(max_sweeps):
        if active.size == 0:
            break
        i = active
        pt = p0[i] + t[i, None] * d[i]
        nu = np.clip(_safe_div(_dot(e1[i], pt - o[i]), l1[i]), 0.0, 1.0)
        nv = np.clip(_safe_div(_dot(e2[i], pt - o[i]), l2[i]), 0.0, 1.0)
        q = o[i] + nu[:, None] * e1[i] + nv[:, None] * e2[i]
        nt = np.clip(_safe_div(_dot(d[i], q - p0[i]), ldd[i]), 0.0, 1.0)
        step = np.maximum.reduce([np.abs(nt - t[i]), np.abs(nu - u[i]), np.abs(nv - v[i])])
        t[i], u[i], v[i] = nt, nu, nv
        cur = f(i)
        keep = (step > 1e-15) & (prev - cur > STOP_GAP * (1.0 - coupling[i]))
        active = i[keep]
        prev = cur[keep]
    e = p0 + t[:, None] * d - (o + u[:, None] * e1 + v[:, None] * e2)
    return _dot(e, e)


def random_rotations(rng, n):
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], 1)


def random_segment_pairs(rng, n):
    """Random pairs with a share of parallel, degenerate and crossing cases."""
    a0 = rng.uniform(-1, 1, (n, 3))
    a1 = rng.uniform(-1, 1, (n, 3))
    b0 = rng.uniform(-1, 1, (n, 3))
    b1 = rng.uniform(-1, 1, (n, 3))
    kind = rng.integers(0, 20, n)
    par = kind == 0
    b1[par] = b0[par] + (a1[par] - a0[par]) * rng.uniform(-1.5, 1.5, (par.sum(), 1))
    deg = kind == 1
    b1[deg] = b0[deg]
    deg_a = kind == 2
    a1[deg_a] = a0[deg_a]
    return a0, a1, b0, b1


def random_rects(rng, n):
    rot = random_rotations(rng, n)
    c = rng.uniform(-0.5, 0.5, (n, 3))
    hu = rng.uniform(0.05, 1.0, n)
    hv = rng.uniform(0.05, 1.0, n)
    u, v = rot[:, :, 0] * hu[:, None], rot[:, :, 1] * hv[:, None]
    return np.stack([c - u - v, c + u - v, c + u + v, c - u + v], axis=1)


@dataclass
class FuzzReport:
    query: str
    n: int
    max_error: float
    worst_index: int
    seconds: float = field(compare=False)

    @property
    def ok(self) -> bool:
        return self.max_error <= TOL_ABS


def _report(name, got, want, t0):
    err = np.abs(got - want)
    k = int(np.argmax(err)) if err.size else -1
    return FuzzReport(name, int(got.size), float(err.max()) if err.size else 0.0, k, time.perf_counter() - t0)


def fuzz_point_segment(n, rng):
    t0 = time.perf_counter()
    p = rng.uniform(-1, 1, (n, 3))
    s0 = rng.uniform(-1, 1, (n, 3))
    s1 = rng.uniform(-1, 1, (n, 3))
    got = np.array([g.point_segment_sqdist(p[k], g.Segment3(s0[k], s1[k])).d2 for k in range(n)])
    return _report("point_segment", got, oracle_point_segment(p, s0, s1), t0)


def fuzz_segment_segment(n, rng):
    t0 = time.perf_counter()
    a0, a1, b0, b1 = random_segment_pairs(rng, n)
    got = kernels.segment_pairs_sqdist(np.stack([a0, a1], 1), np.stack([b0, b1], 1))[0]
    return _report("segment_segment", got, oracle_segment_segment(a0, a1, b0, b1), t0)


def fuzz_segment_rect(n, rng):
    t0 = time.perf_counter()
    verts = random_rects(rng, n)
    p0 = rng.uniform(-1.5, 1.5, (n, 3))
    p1 = rng.uniform(-1.5, 1.5, (n, 3))
    flat = rng.integers(0, 10, n) == 0
    # a share of segments lying in the rectangle plane
    nrm = np.cross(verts[:, 1] - verts[:, 0], verts[:, 3] - verts[:, 0])
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    for p in (p0, p1):
        off = _dot(p - verts[:, 0], nrm)
        p[flat] -= off[flat, None] * nrm[flat]
    got = np.array([kernels.seg_rect(p0[k], p1[k], verts[k])[0] for k in range(n)])
    return _report("segment_rect", got, oracle_segment_rect(p0, p1, verts), t0)


def fuzz_geometry(n: int, seed: int = 0) -> list[FuzzReport]:
    """Run ``n`` seeded random instances per query type against the oracles."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return [fuzz_point_segment(n, rng), fuzz_segment_segment(n, rng), fuzz_segment_rect(n, rng)]
