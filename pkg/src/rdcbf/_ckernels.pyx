# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef double PARALLEL_RTOL = 1e-12


cdef inline double _clamp01(double x) noexcept nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef inline void _eval(const double* a0, const double* d1, const double* b0,
                       const double* d2v, double xi, double tau,
                       double* out) noexcept nogil:
    # out: d2, xi, tau, wa[3], wb[3]
    cdef double wax = a0[0] + xi * d1[0]
    cdef double way = a0[1] + xi * d1[1]
    cdef double waz = a0[2] + xi * d1[2]
    cdef double wbx = b0[0] + tau * d2v[0]
    cdef double wby = b0[1] + tau * d2v[1]
    cdef double wbz = b0[2] + tau * d2v[2]
    cdef double ex = wax - wbx
    cdef double ey = way - wby
    cdef double ez = waz - wbz
    out[0] = ex * ex + ey * ey + ez * ez
    out[1] = xi
    out[2] = tau
    out[3] = wax
    out[4] = way
    out[5] = waz
    out[6] = wbx
    out[7] = wby
    out[8] = wbz


cdef void _seg_seg(const double* a0, const double* a1, const double* b0,
                   const double* b1, double* out) noexcept nogil:
    cdef double d1[3]
    cdef double d2v[3]
    cdef double r[3]
    cdef double cand[9]
    cdef double z1, z2, z3, z4, z5, delta, xb, tb, t_lo, t_hi, x_lo, x_hi
    cdef int k
    for k in range(3):
        d1[k] = a1[k] - a0[k]
        d2v[k] = b1[k] - b0[k]
        r[k] = a0[k] - b0[k]
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
            _eval(a0, d1, b0, d2v, xb, tb, out)
            return
    if z3 > 0.0:
        t_lo = _clamp01(z5 / z3)
        t_hi = _clamp01((z2 + z5) / z3)
    else:
        t_lo = 0.0
        t_hi = 0.0
    if z1 > 0.0:
        x_lo = _clamp01(-z4 / z1)
        x_hi = _clamp01((z2 - z4) / z1)
    else:
        x_lo = 0.0
        x_hi = 0.0
    _eval(a0, d1, b0, d2v, 0.0, t_lo, out)
    _eval(a0, d1, b0, d2v, 1.0, t_hi, cand)
    if cand[0] < out[0]:
        for k in range(9):
            out[k] = cand[k]
    _eval(a0, d1, b0, d2v, x_lo, 0.0, cand)
    if cand[0] < out[0]:
        for k in range(9):
            out[k] = cand[k]
    _eval(a0, d1, b0, d2v, x_hi, 1.0, cand)
    if cand[0] < out[0]:
        for k in range(9):
            out[k] = cand[k]


cdef int _rect_clip(const double* q0, const double* q1, const double* o,
                    const double* e1, const double* e2, double l1, double l2,
                    double* t0_out, double* t1_out) noexcept nogil:
    cdef double dq[3]
    cdef double rq[3]
    cdef double t0 = 0.0
    cdef double t1 = 1.0
    cdef double c0, dc, ta, tb, tmp, ll
    cdef const double* e
    cdef int k, axis
    cdef bint in0, in1
    for k in range(3):
        dq[k] = q1[k] - q0[k]
        rq[k] = q0[k] - o[k]
    for axis in range(2):
        if axis == 0:
            e = e1
            ll = l1
        else:
            e = e2
            ll = l2
        c0 = (rq[0] * e[0] + rq[1] * e[1] + rq[2] * e[2]) / ll
        dc = (dq[0] * e[0] + dq[1] * e[1] + dq[2] * e[2]) / ll
        if dc == 0.0:
            if c0 < 0.0 or c0 > 1.0:
                return 0
            continue
        ta = -c0 / dc
        tb = (1.0 - c0) / dc
        if ta > tb:
            tmp = ta
            ta = tb
            tb = tmp
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return 0
    t0_out[0] = t0
    t1_out[0] = t1
    in0 = t0 == 0.0
    in1 = t1 == 1.0
    if in0 != in1:
        return 1
    if in0 or t1 > t0:
        return 2
    return 1


cdef int _seg_rect(const double* p0, const double* p1, const double* v,
                   double* out) noexcept nogil:
    """``v`` holds 12 doubles (4 vertices). ``out`` as in ``_seg_seg``."""
    cdef double e1[3]
    cdef double e2[3]
    cdef double nrm[3]
    cdef double q0[3]
    cdef double q1[3]
    cdef double c0[3]
    cdef double c1[3]
    cdef double cand[9]
    cdef double l1, l2, nn, inv, s0, s1, t0 = 0.0, t1 = 0.0
    cdef int k, m, n = 0
    cdef bint have = False
    for k in range(3):
        e1[k] = v[3 + k] - v[k]
        e2[k] = v[9 + k] - v[k]
    l1 = e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]
    l2 = e2[0] * e2[0] + e2[1] * e2[1] + e2[2] * e2[2]
    nrm[0] = e1[1] * e2[2] - e1[2] * e2[1]
    nrm[1] = e1[2] * e2[0] - e1[0] * e2[2]
    nrm[2] = e1[0] * e2[1] - e1[1] * e2[0]
    nn = nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]
    if nn > 1e-24 * l1 * l2:
        inv = 1.0 / sqrt(nn)
        for k in range(3):
            nrm[k] = nrm[k] * inv
        s0 = (p0[0] - v[0]) * nrm[0] + (p0[1] - v[1]) * nrm[1] + (p0[2] - v[2]) * nrm[2]
        s1 = (p1[0] - v[0]) * nrm[0] + (p1[1] - v[1]) * nrm[1] + (p1[2] - v[2]) * nrm[2]
        for k in range(3):
            q0[k] = p0[k] - s0 * nrm[k]
            q1[k] = p1[k] - s1 * nrm[k]
        n = _rect_clip(q0, q1, v, e1, e2, l1, l2, &t0, &t1)
        if n > 0:
            for k in range(3):
                c0[k] = q0[k] + t0 * (q1[k] - q0[k])
                c1[k] = q0[k] + t1 * (q1[k] - q0[k])
            _seg_seg(p0, p1, c0, c1, out)
            have = True
    for k in range(4):
        m = (k + 1) % 4
        _seg_seg(p0, p1, &v[3 * k], &v[3 * m], cand)
        if not have or cand[0] < out[0]:
            for m in range(9):
                out[m] = cand[m]
            have = True
    return n


def _as3(p):
    return np.ascontiguousarray(p, dtype=np.float64).reshape(3)


def point_seg(double px, double py, double pz, double ax, double ay, double az,
              double bx, double by, double bz):
    cdef double dx = bx - ax
    cdef double dy = by - ay
    cdef double dz = bz - az
    cdef double dd = dx * dx + dy * dy + dz * dz
    cdef double xi, wx, wy, wz, ex, ey, ez
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


def seg_seg(a0, a1, b0, b1):
    cdef double[::1] va0 = _as3(a0)
    cdef double[::1] va1 = _as3(a1)
    cdef double[::1] vb0 = _as3(b0)
    cdef double[::1] vb1 = _as3(b1)
    cdef double out[9]
    _seg_seg(&va0[0], &va1[0], &vb0[0], &vb1[0], out)
    return (out[0], out[1], out[2], out[3], out[4], out[5], out[6], out[7], out[8])


def rect_clip(q0, q1, o, e1, e2, double l1, double l2):
    cdef double[::1] vq0 = _as3(q0)
    cdef double[::1] vq1 = _as3(q1)
    cdef double[::1] vo = _as3(o)
    cdef double[::1] ve1 = _as3(e1)
    cdef double[::1] ve2 = _as3(e2)
    cdef double t0 = 0.0, t1 = 0.0
    cdef int n = _rect_clip(&vq0[0], &vq1[0], &vo[0], &ve1[0], &ve2[0], l1, l2, &t0, &t1)
    if n == 0:
        return 0, 0.0, 0.0
    return n, t0, t1


def seg_rect(p0, p1, v):
    cdef double[::1] vp0 = _as3(p0)
    cdef double[::1] vp1 = _as3(p1)
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64).reshape(12)
    cdef double out[9]
    cdef int n = _seg_rect(&vp0[0], &vp1[0], &vv[0], out)
    return (out[0], out[1], out[3], out[4], out[5], out[6], out[7], out[8], n)


def link_segment_sqdist(links, segs):
    cdef double[:, :, ::1] L = np.ascontiguousarray(links, dtype=np.float64).reshape(-1, 2, 3)
    cdef double[:, :, ::1] S = np.ascontiguousarray(segs, dtype=np.float64).reshape(-1, 2, 3)
    cdef Py_ssize_t nl = L.shape[0], ns = S.shape[0], i, j
    d2 = np.empty((nl, ns))
    xi = np.empty((nl, ns))
    wa = np.empty((nl, ns, 3))
    wb = np.empty((nl, ns, 3))
    cdef double[:, ::1] d2v = d2
    cdef double[:, ::1] xiv = xi
    cdef double[:, :, ::1] wav = wa
    cdef double[:, :, ::1] wbv = wb
    cdef double out[9]
    cdef int k
    if nl == 0 or ns == 0:
        return d2, xi, wa, wb
    with nogil:
        for i in range(nl):
            for j in range(ns):
                _seg_seg(&L[i, 0, 0], &L[i, 1, 0], &S[j, 0, 0], &S[j, 1, 0], out)
                d2v[i, j] = out[0]
                xiv[i, j] = out[1]
                for k in range(3):
                    wav[i, j, k] = out[3 + k]
                    wbv[i, j, k] = out[6 + k]
    return d2, xi, wa, wb


def link_rect_sqdist(links, rects):
    cdef double[:, :, ::1] L = np.ascontiguousarray(links, dtype=np.float64).reshape(-1, 2, 3)
    cdef double[:, :, ::1] R = np.ascontiguousarray(rects, dtype=np.float64).reshape(-1, 4, 3)
    cdef Py_ssize_t nl = L.shape[0], nr = R.shape[0], i, j
    d2 = np.empty((nl, nr))
    xi = np.empty((nl, nr))
    wa = np.empty((nl, nr, 3))
    wb = np.empty((nl, nr, 3))
    cdef double[:, ::1] d2v = d2
    cdef double[:, ::1] xiv = xi
    cdef double[:, :, ::1] wav = wa
    cdef double[:, :, ::1] wbv = wb
    cdef double out[9]
    cdef int k
    if nl == 0 or nr == 0:
        return d2, xi, wa, wb
    with nogil:
        for i in range(nl):
            for j in range(nr):
                _seg_rect(&L[i, 0, 0], &L[i, 1, 0], &R[j, 0, 0], out)
                d2v[i, j] = out[0]
                xiv[i, j] = out[1]
                for k in range(3):
                    wav[i, j, k] = out[3 + k]
                    wbv[i, j, k] = out[6 + k]
    return d2, xi, wa, wb


def segment_pairs_sqdist(a, b):
    cdef double[:, :, ::1] A = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 2, 3)
    cdef double[:, :, ::1] B = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 2, 3)
    cdef Py_ssize_t n = A.shape[0], p
    d2 = np.empty(n)
    xi = np.empty(n)
    tau = np.empty(n)
    wa = np.empty((n, 3))
    wb = np.empty((n, 3))
    cdef double[::1] d2v = d2
    cdef double[::1] xiv = xi
    cdef double[::1] tauv = tau
    cdef double[:, ::1] wav = wa
    cdef double[:, ::1] wbv = wb
    cdef double out[9]
    cdef int k
    if n == 0:
        return d2, xi, tau, wa, wb
    with nogil:
        for p in range(n):
            _seg_seg(&A[p, 0, 0], &A[p, 1, 0], &B[p, 0, 0], &B[p, 1, 0], out)
            d2v[p] = out[0]
            xiv[p] = out[1]
            tauv[p] = out[2]
            for k in range(3):
                wav[p, k] = out[3 + k]
                wbv[p, k] = out[6 + k]
    return d2, xi, tau, wa, wb
