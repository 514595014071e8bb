"""Pure-Python distance kernels.

Mirrors ``_ckernels.pyx`` operation for operation so that both backends
agree to the last bit on ordinary inputs. Used when the compiled extension
is unavailable or when ``RDCBF_PURE_PYTHON=1`` is set.
"""
import math

import numpy as np

PARALLEL_RTOL = 1e-12


def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


def point_seg(px, py, pz, ax, ay, az, bx, by, bz):
    """Squared distance from a point to segment ``a-b``.

    Returns ``(d2, xi, wx, wy, wz)`` with ``w`` the closest point on the segment.
    """
    dx = bx - ax
    dy = by - ay
    dz = bz - az
    dd = dx * dx + dy * dy + dz * dz
    if dd > 0.0:
        xi = _clamp01(((px - ax) * dx + (py - ay) * dy + (pz - az) * dz) / dd)
    else:
        xi = 0.0
    wx = ax + xi * dx
    wy = ay + xi * dy
    wz = az + xi * dz
    ex = px - wx
    ey = py - wy
    ez = pz - wz
    return ex * ex + ey * ey + ez * ez, xi, wx, wy, wz


def _eval(a0, d1, b0, d2v, xi, tau):
    wax = a0[0] + xi * d1[0]
    way = a0[1] + xi * d1[1]
    waz = a0[2] + xi * d1[2]
    wbx = b0[0] + tau * d2v[0]
    wby = b0[1] + tau * d2v[1]
    wbz = b0[2] + tau * d2v[2]
    ex = wax - wbx
    ey = way - wby
    ez = waz - wbz
    return (ex * ex + ey * ey + ez * ez, xi, tau, wax, way, waz, wbx, wby, wbz)


def seg_seg(a0, a1, b0, b1):
    """Minimum squared distance between segments ``a0-a1`` and ``b0-b1``.

    Returns ``(d2, xi, tau, wax, way, waz, wbx, wby, wbz)``.
    """
    d1 = (a1[0] - a0[0], a1[1] - a0[1], a1[2] - a0[2])
    d2v = (b1[0] - b0[0], b1[1] - b0[1], b1[2] - b0[2])
    r = (a0[0] - b0[0], a0[1] - b0[1], a0[2] - b0[2])
    z1 = d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2]
    z2 = d1[0] * d2v[0] + d1[1] * d2v[1] + d1[2] * d2v[2]
    z3 = d2v[0] * d2v[0] + d2v[1] * d2v[1] + d2v[2] * d2v[2]
    z4 = d1[0] * r[0] + d1[1] * r[1] + d1[2] * r[2]
    z5 = d2v[0] * r[0] + d2v[1] * r[1] + d2v[2] * r[2]
    delta = z1 * z3 - z2 * z2
    if delta > PARALLEL_RTOL * z1 * z3:
        xb = (z2 * z5 - z3 * z4) / delta
        tb = (z1 * z5 - z2 * z4) / delta
        if 0.0 <= xb <= 1.0 and 0.0 <= tb <= 1.0:
            return _eval(a0, d1, b0, d2v, xb, tb)
    # boundary of the parameter square: xi=0, xi=1, tau=0, tau=1
    if z3 > 0.0:
        t_lo = _clamp01(z5 / z3)
        t_hi = _clamp01((z2 + z5) / z3)
    else:
        t_lo = t_hi = 0.0
    if z1 > 0.0:
        x_lo = _clamp01(-z4 / z1)
        x_hi = _clamp01((z2 - z4) / z1)
    else:
        x_lo = x_hi = 0.0
    best = _eval(a0, d1, b0, d2v, 0.0, t_lo)
    for xi, tau in ((1.0, t_hi), (x_lo, 0.0), (x_hi, 1.0)):
        cand = _eval(a0, d1, b0, d2v, xi, tau)
        if cand[0] < best[0]:
            best = cand
    return best


def rect_frame(v):
    """Origin, edge vectors, squared edge lengths and unit normal of a rectangle.

    ``normal`` is ``None`` when the rectangle has (numerically) zero area.
    """
    o = v[0]
    e1 = (v[1][0] - o[0], v[1][1] - o[1], v[1][2] - o[2])
    e2 = (v[3][0] - o[0], v[3][1] - o[1], v[3][2] - o[2])
    l1 = e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]
    l2 = e2[0] * e2[0] + e2[1] * e2[1] + e2[2] * e2[2]
    nx = e1[1] * e2[2] - e1[2] * e2[1]
    ny = e1[2] * e2[0] - e1[0] * e2[2]
    nz = e1[0] * e2[1] - e1[1] * e2[0]
    nn = nx * nx + ny * ny + nz * nz
    if nn <= 1e-24 * l1 * l2:
        return o, e1, e2, l1, l2, None
    inv = 1.0 / math.sqrt(nn)
    return o, e1, e2, l1, l2, (nx * inv, ny * inv, nz * inv)


def project_point(p, o, n):
    s = (p[0] - o[0]) * n[0] + (p[1] - o[1]) * n[1] + (p[2] - o[2]) * n[2]
    return (p[0] - s * n[0], p[1] - s * n[1], p[2] - s * n[2])


def rect_clip(q0, q1, o, e1, e2, l1, l2):
    """Clip the in-plane segment ``q0-q1`` against the rectangle slabs.

    Returns ``(n, t0, t1)``: the number of intersection points and the
    parameter interval of the clipped part (meaningless when ``n == 0``).
    """
    dq = (q1[0] - q0[0], q1[1] - q0[1], q1[2] - q0[2])
    rq = (q0[0] - o[0], q0[1] - o[1], q0[2] - o[2])
    t0 = 0.0
    t1 = 1.0
    for e, ll in ((e1, l1), (e2, l2)):
        c0 = (rq[0] * e[0] + rq[1] * e[1] + rq[2] * e[2]) / ll
        dc = (dq[0] * e[0] + dq[1] * e[1] + dq[2] * e[2]) / ll
        # 0 <= c0 + t*dc <= 1
        if dc == 0.0:
            if c0 < 0.0 or c0 > 1.0:
                return 0, 0.0, 0.0
            continue
        ta = -c0 / dc
        tb = (1.0 - c0) / dc
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return 0, 0.0, 0.0
    in0 = t0 == 0.0
    in1 = t1 == 1.0
    if in0 != in1:
        n = 1
    elif in0 or t1 > t0:
        n = 2
    else:
        n = 1
    return n, t0, t1


def seg_rect(p0, p1, v):
    """Minimum squared distance between segment ``p0-p1`` and rectangle ``v``.

    Returns ``(d2, xi, wax, way, waz, wbx, wby, wbz, n)``.
    """
    o, e1, e2, l1, l2, nrm = rect_frame(v)
    best = None
    n = 0
    if nrm is not None:
        q0 = project_point(p0, o, nrm)
        q1 = project_point(p1, o, nrm)
        n, t0, t1 = rect_clip(q0, q1, o, e1, e2, l1, l2)
        if n > 0:
            dq = (q1[0] - q0[0], q1[1] - q0[1], q1[2] - q0[2])
            c0 = (q0[0] + t0 * dq[0], q0[1] + t0 * dq[1], q0[2] + t0 * dq[2])
            c1 = (q0[0] + t1 * dq[0], q0[1] + t1 * dq[1], q0[2] + t1 * dq[2])
            best = seg_seg(p0, p1, c0, c1)
    for k in range(4):
        cand = seg_seg(p0, p1, v[k], v[(k + 1) % 4])
        if best is None or cand[0] < best[0]:
            best = cand
    return (best[0], best[1], best[3], best[4], best[5], best[6], best[7], best[8], n)


def link_segment_sqdist(links, segs):
    """All link/segment pairs. ``links`` (L,2,3), ``segs`` (S,2,3).

    Returns ``d2 (L,S)``, ``xi (L,S)``, ``wa (L,S,3)``, ``wb (L,S,3)``.
    """
    links = np.asarray(links, dtype=float)
    segs = np.asarray(segs, dtype=float)
    L, S = links.shape[0], segs.shape[0]
    d2 = np.empty((L, S))
    xi = np.empty((L, S))
    wa = np.empty((L, S, 3))
    wb = np.empty((L, S, 3))
    ll = links.tolist()
    ss = segs.tolist()
    for i in range(L):
        a0, a1 = ll[i]
        for j in range(S):
            res = seg_seg(a0, a1, ss[j][0], ss[j][1])
            d2[i, j] = res[0]
            xi[i, j] = res[1]
            wa[i, j] = res[3:6]
            wb[i, j] = res[6:9]
    return d2, xi, wa, wb


def link_rect_sqdist(links, rects):
    """All link/rectangle pairs. ``links`` (L,2,3), ``rects`` (R,4,3)."""
    links = np.asarray(links, dtype=float)
    rects = np.asarray(rects, dtype=float)
    L, R = links.shape[0], rects.shape[0]
    d2 = np.empty((L, R))
    xi = np.empty((L, R))
    wa = np.empty((L, R, 3))
    wb = np.empty((L, R, 3))
    ll = links.tolist()
    rr = rects.tolist()
    for i in range(L):
        p0, p1 = ll[i]
        for j in range(R):
            res = seg_rect(p0, p1, rr[j])
            d2[i, j] = res[0]
            xi[i, j] = res[1]
            wa[i, j] = res[2:5]
            wb[i, j] = res[5:8]
    return d2, xi, wa, wb


def segment_pairs_sqdist(a, b):
    """Row-wise segment pairs. ``a``, ``b`` (P,2,3).

    Returns ``d2 (P,)``, ``xi (P,)``, ``tau (P,)``, ``wa (P,3)``, ``wb (P,3)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    P = a.shape[0]
    d2 = np.empty(P)
    xi = np.empty(P)
    tau = np.empty(P)
    wa = np.empty((P, 3))
    wb = np.empty((P, 3))
    al = a.tolist()
    bl = b.tolist()
    for k in range(P):
        res = seg_seg(al[k][0], al[k][1], bl[k][0], bl[k][1])
        d2[k] = res[0]
        xi[k] = res[1]
        tau[k] = res[2]
        wa[k] = res[3:6]
        wb[k] = res[6:9]
    return d2, xi, tau, wa, wb
