"""Independent oracles used only by the test-suite."""
from __future__ import annotations

import numpy as np


def _polish(u_nom, C, d, lam, tol=1e-12):
    """Exact solution on the support of ``lam`` if it satisfies KKT, else None."""
    S = np.flatnonzero(lam > 1e-12)
    if S.size == 0:
        u = u_nom.copy()
        mu = np.zeros(0)
    else:
        N = C[S]
        # least-norm multipliers solving N (u_nom + N^T mu) = d_S
        mu, *_ = np.linalg.lstsq(N @ N.T, d[S] - N @ u_nom, rcond=None)
        u = u_nom + N.T @ mu
    if np.any(mu < -tol) or np.min(C @ u - d) < -tol:
        return None
    return u


def qp_projected_gradient(u_nom, C, d, max_sweeps=1_000_000, polish_every=50):
    """Batched Hildreth iteration: projected coordinate ascent on the QP dual.

    Solves ``min 1/2 |u - u_nom|^2 s.t. C u >= d`` for a batch of problems
    (shapes (B, n), (B, m, n), (B, m)). Each coordinate step maximises the
    dual ``-1/2 |C^T lam|^2 + lam . (d - C u_nom)`` over one multiplier and
    projects it onto ``lam >= 0``; the primal point ``u = u_nom + C^T lam``
    is stationary by construction. Every ``polish_every`` sweeps the support
    of ``lam`` is solved exactly and accepted only if the result satisfies
    the KKT conditions, which then certify the unique minimiser.
    """
    u_nom = np.asarray(u_nom, dtype=float)
    C = np.asarray(C, dtype=float)
    d = np.asarray(d, dtype=float)
    B, m, n = C.shape
    cc = np.einsum("bmn,bmn->bm", C, C)
    inv = np.divide(1.0, cc, out=np.zeros_like(cc), where=cc > 0)
    lam = np.zeros((B, m))
    u = u_nom.copy()
    out = u_nom.copy()
    active = np.arange(B)
    for sweep in range(1, max_sweeps + 1):
        if active.size == 0:
            break
        i = active
        ui = u[i]
        li = lam[i]
        for k in range(m):
            ck = C[i, k]
            new = np.maximum(li[:, k] + (d[i, k] - np.einsum("bn,bn->b", ck, ui)) * inv[i, k], 0.0)
            ui += (new - li[:, k])[:, None] * ck
            li[:, k] = new
        u[i] = ui
        lam[i] = li
        out[i] = ui
        if sweep % polish_every == 0 or sweep == max_sweeps:
            keep = []
            for b in i:
                sol = _polish(u_nom[b], C[b], d[b], lam[b])
                if sol is None:
                    keep.append(b)
                else:
                    out[b] = sol
            active = np.array(keep, dtype=int)
    return out


def random_feasible_qps(rng, batch, n=8, max_rows=40, box=2.0):
    """Random feasible problems with some rows violated by ``u_nom``."""
    probs = []
    for _ in range(batch):
        m = int(rng.integers(1, max_rows + 1))
        feas = rng.uniform(-0.5 * box, 0.5 * box, n)
        A = rng.normal(size=(m, n))
        b = A @ feas - rng.uniform(0.0, 1.0, m)
        u_nom = rng.uniform(-1.5 * box, 1.5 * box, n)
        probs.append((u_nom, A, b, -box * np.ones(n), box * np.ones(n)))
    return probs


def fk_homogeneous(model_dict, x):
    """Forward kinematics by composing 4x4 transforms, parent frame first.

    Works from the raw model dictionary so it shares no code with the
    package: each joint frame is ``T_parent @ Trans(origin) @ Rot(axis, q)``
    with the axis expressed in the parent frame.
    """
    from scipy.spatial.transform import Rotation

    x = np.asarray(x, dtype=float)
    base = np.eye(4)
    base[:3, 3] = [x[0], x[1], model_dict["base"]["height"]]
    frames = []
    for k, j in enumerate(model_dict["joints"]):
        parent = base if j["parent"] < 0 else frames[j["parent"]]
        t = np.eye(4)
        t[:3, 3] = j["origin"]
        r = np.eye(4)
        axis = np.asarray(j["axis"], dtype=float)
        r[:3, :3] = Rotation.from_rotvec(axis / np.linalg.norm(axis) * x[2 + k]).as_matrix()
        frames.append(parent @ t @ r)
    out = []
    for link in model_dict["links"]:
        T = base if link["frame"] < 0 else frames[link["frame"]]
        ends = [T @ np.append(np.asarray(link[p], dtype=float), 1.0) for p in ("p0", "p1")]
        out.append([e[:3] for e in ends])
    return np.array(out)
