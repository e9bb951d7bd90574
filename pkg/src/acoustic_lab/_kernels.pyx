# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled quadrature kernels for the Boltzmann gain terms.

Must agree with ``_kernels_py`` to rounding; the frame and the clamped
trilinear stencil are defined identically in both.
"""
from libc.math cimport sqrt, pow, fabs

import numpy as np


cdef inline void _locate(double x, const double* a, const double* inv, int n, bint uniform,
                         int* i0, double* t) noexcept nogil:
    # inv[i] = 1 / (a[i+1] - a[i])
    cdef int lo, hi, mid
    if x <= a[0]:
        i0[0] = 0
        t[0] = 0.0
        return
    if x >= a[n - 1]:
        i0[0] = n - 2
        t[0] = 1.0
        return
    if uniform:
        lo = <int>((x - a[0]) * inv[0])
        if lo > n - 2:
            lo = n - 2
    else:
        lo = 0
        hi = n - 1
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if a[mid] <= x:
                lo = mid
            else:
                hi = mid
    i0[0] = lo
    t[0] = (x - a[lo]) * inv[lo]


cdef inline void _stencil(double x, double y, double z,
                          const double* a0, const double* a1, const double* a2,
                          const double* i0, const double* i1, const double* i2,
                          int n0, int n1, int n2, bint uniform,
                          int* idx, double* wt) noexcept nogil:
    cdef int i, j, k, di, dj, dk, c
    cdef double tx, ty, tz, wx, wy
    _locate(x, a0, i0, n0, uniform, &i, &tx)
    _locate(y, a1, i1, n1, uniform, &j, &ty)
    _locate(z, a2, i2, n2, uniform, &k, &tz)
    c = 0
    for di in range(2):
        wx = tx if di else 1.0 - tx
        for dj in range(2):
            wy = wx * (ty if dj else 1.0 - ty)
            for dk in range(2):
                idx[c] = ((i + di) * n1 + (j + dj)) * n2 + (k + dk)
                wt[c] = wy * (tz if dk else 1.0 - tz)
                c += 1


cdef inline void _frame(double ex, double ey, double ez, double* e1, double* e2) noexcept nogil:
    cdef double ax, ay, az, d, nrm
    if fabs(ex) < 0.9:
        ax, ay, az = 1.0, 0.0, 0.0
    else:
        ax, ay, az = 0.0, 1.0, 0.0
    d = ax * ex + ay * ey + az * ez
    e1[0] = ax - d * ex
    e1[1] = ay - d * ey
    e1[2] = az - d * ez
    nrm = sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2])
    e1[0] /= nrm
    e1[1] /= nrm
    e1[2] /= nrm
    e2[0] = ey * e1[2] - ez * e1[1]
    e2[1] = ez * e1[0] - ex * e1[2]
    e2[2] = ex * e1[1] - ey * e1[0]


cdef inline double _rel_speed(double r, double gamma, double rself) noexcept nogil:
    if r == 0.0:
        return rself
    if gamma == 0.0:
        return 1.0
    if gamma == 1.0:
        return r
    return pow(r, gamma)


def gain_matrix(const double[::1] a0, const double[::1] a1, const double[::1] a2,
                const double[:, ::1] nodes, const double[::1] wmu, double gamma,
                const double[::1] rself, const double[::1] cth, const double[::1] bth,
                const double[::1] cphi, const double[::1] sphi, bint uniform):
    """M[k, a] = sum_m wmu_m R_km sum_omega b [t_a(u') + t_a(v')].

    Pairs (k, m) and (m, k) share the post-collision points, so each
    unordered pair is interpolated once and scattered into both rows.
    """
    cdef int n0 = a0.shape[0], n1 = a1.shape[0], n2 = a2.shape[0]
    cdef int nv = nodes.shape[0], nth = cth.shape[0], nph = cphi.shape[0]
    cdef double[::1] d0 = 1.0 / np.diff(np.asarray(a0))
    cdef double[::1] d1 = 1.0 / np.diff(np.asarray(a1))
    cdef double[::1] d2 = 1.0 / np.diff(np.asarray(a2))
    cdef double[::1] sth = np.sqrt(1.0 - np.asarray(cth) ** 2)
    cdef double ir
    out_arr = np.zeros((nv, nv), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int k, m, j, l, c
    cdef double dx, dy, dz, r, R, ck, cm, ex, ey, ez, s, ox, oy, oz, bw
    cdef double e1[3]
    cdef double e2[3]
    cdef int iv[8]
    cdef int iu[8]
    cdef double tv[8]
    cdef double tu[8]
    with nogil:
        for k in range(nv):
            for m in range(k, nv):
                dx = nodes[k, 0] - nodes[m, 0]
                dy = nodes[k, 1] - nodes[m, 1]
                dz = nodes[k, 2] - nodes[m, 2]
                r = sqrt(dx * dx + dy * dy + dz * dz)
                R = _rel_speed(r, gamma, rself[k])
                ck = wmu[m] * R
                cm = wmu[k] * R
                if ck == 0.0 and cm == 0.0:
                    continue
                if r == 0.0:
                    # coincident nodes: v' = v, u' = u
                    out[k, k] += 2.0 * ck
                    continue
                ir = 1.0 / r
                ex = dx * ir
                ey = dy * ir
                ez = dz * ir
                _frame(ex, ey, ez, e1, e2)
                for j in range(nth):
                    for l in range(nph):
                        s = sth[j]
                        ox = cth[j] * ex + s * (cphi[l] * e1[0] + sphi[l] * e2[0])
                        oy = cth[j] * ey + s * (cphi[l] * e1[1] + sphi[l] * e2[1])
                        oz = cth[j] * ez + s * (cphi[l] * e1[2] + sphi[l] * e2[2])
                        s = r * cth[j]
                        _stencil(nodes[k, 0] - s * ox, nodes[k, 1] - s * oy, nodes[k, 2] - s * oz,
                                 &a0[0], &a1[0], &a2[0], &d0[0], &d1[0], &d2[0], n0, n1, n2, uniform, iv, tv)
                        _stencil(nodes[m, 0] + s * ox, nodes[m, 1] + s * oy, nodes[m, 2] + s * oz,
                                 &a0[0], &a1[0], &a2[0], &d0[0], &d1[0], &d2[0], n0, n1, n2, uniform, iu, tu)
                        bw = bth[j]
                        for c in range(8):
                            out[k, iv[c]] += ck * bw * tv[c]
                            out[k, iu[c]] += ck * bw * tu[c]
                            if m != k:
                                out[m, iv[c]] += cm * bw * tv[c]
                                out[m, iu[c]] += cm * bw * tu[c]
    return out_arr


def gain_bilinear(const double[::1] a0, const double[::1] a1, const double[::1] a2,
                  const double[:, ::1] nodes, const double[::1] wmu, double gamma,
                  const double[::1] rself, const double[::1] cth, const double[::1] bth,
                  const double[::1] cphi, const double[::1] sphi, bint uniform,
                  const double[:, ::1] hf, const double[:, ::1] hg):
    """G[k, p] = sum_m wmu_m R_km sum_omega b HF(v')[p] HG(u')[p].

    ``hf``/``hg`` hold nodal values f/sqrt(mu) with a trailing batch axis p.
    Swapping k and m swaps v' and u', so each unordered pair is located once
    and feeds row k with HF(v')HG(u') and row m with HF(u')HG(v').
    """
    cdef int n0 = a0.shape[0], n1 = a1.shape[0], n2 = a2.shape[0]
    cdef int nv = nodes.shape[0], nth = cth.shape[0], nph = cphi.shape[0]
    cdef double[::1] d0 = 1.0 / np.diff(np.asarray(a0))
    cdef double[::1] d1 = 1.0 / np.diff(np.asarray(a1))
    cdef double[::1] d2 = 1.0 / np.diff(np.asarray(a2))
    cdef double[::1] sth = np.sqrt(1.0 - np.asarray(cth) ** 2)
    cdef double ir
    cdef int P = hf.shape[1]
    out_arr = np.zeros((nv, P), dtype=np.float64)
    buf_arr = np.zeros((4, P), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] buf = buf_arr
    cdef int k, m, j, l, c, p, a, b
    cdef double dx, dy, dz, r, R, ck, cm, ex, ey, ez, s, ox, oy, oz, bk, bm, ta, tb
    cdef double e1[3]
    cdef double e2[3]
    cdef int iv[8]
    cdef int iu[8]
    cdef double tv[8]
    cdef double tu[8]
    with nogil:
        for k in range(nv):
            for m in range(k, nv):
                dx = nodes[k, 0] - nodes[m, 0]
                dy = nodes[k, 1] - nodes[m, 1]
                dz = nodes[k, 2] - nodes[m, 2]
                r = sqrt(dx * dx + dy * dy + dz * dz)
                R = _rel_speed(r, gamma, rself[k])
                ck = wmu[m] * R
                cm = wmu[k] * R
                if ck == 0.0 and cm == 0.0:
                    continue
                if r == 0.0:
                    for p in range(P):
                        out[k, p] += ck * hf[k, p] * hg[k, p]
                    continue
                ir = 1.0 / r
                ex = dx * ir
                ey = dy * ir
                ez = dz * ir
                _frame(ex, ey, ez, e1, e2)
                for j in range(nth):
                    for l in range(nph):
                        s = sth[j]
                        ox = cth[j] * ex + s * (cphi[l] * e1[0] + sphi[l] * e2[0])
                        oy = cth[j] * ey + s * (cphi[l] * e1[1] + sphi[l] * e2[1])
                        oz = cth[j] * ez + s * (cphi[l] * e1[2] + sphi[l] * e2[2])
                        s = r * cth[j]
                        _stencil(nodes[k, 0] - s * ox, nodes[k, 1] - s * oy, nodes[k, 2] - s * oz,
                                 &a0[0], &a1[0], &a2[0], &d0[0], &d1[0], &d2[0], n0, n1, n2, uniform, iv, tv)
                        _stencil(nodes[m, 0] + s * ox, nodes[m, 1] + s * oy, nodes[m, 2] + s * oz,
                                 &a0[0], &a1[0], &a2[0], &d0[0], &d1[0], &d2[0], n0, n1, n2, uniform, iu, tu)
                        for p in range(P):
                            buf[0, p] = 0.0
                            buf[1, p] = 0.0
                            buf[2, p] = 0.0
                            buf[3, p] = 0.0
                        for c in range(8):
                            a = iv[c]
                            b = iu[c]
                            ta = tv[c]
                            tb = tu[c]
                            for p in range(P):
                                buf[0, p] += ta * hf[a, p]
                                buf[1, p] += tb * hg[b, p]
                                buf[2, p] += tb * hf[b, p]
                                buf[3, p] += ta * hg[a, p]
                        bk = ck * bth[j]
                        bm = cm * bth[j]
                        for p in range(P):
                            out[k, p] += bk * buf[0, p] * buf[1, p]
                            out[m, p] += bm * buf[2, p] * buf[3, p]
    return out_arr
