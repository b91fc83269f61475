# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Kalman filter for ARMA likelihoods (hot backend).

Twin of ``_filter_py.kalman_filter``: identical contract and numerics,
hand-rolled state updates sized for the small ARMA state (m <= 6) and a
steady-state freeze that collapses each post-convergence step to O(m).
"""

import numpy as np

from libc.math cimport NAN, fabs, isfinite, log, sqrt

cdef double STEADY_TOL = 1e-12


cdef int _run(const double[::1] y, const unsigned char[::1] obs,
              const double[:, ::1] tmat, const double[:, ::1] rr,
              const double[:, ::1] p0, bint segmented,
              double[::1] innov_out,
              double[::1] a, double[::1] anew, double[::1] g,
              double[:, ::1] p, double[:, ::1] pupd,
              double[:, ::1] tmp, double[:, ::1] pnext,
              double[::1] out) nogil:
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t m = tmat.shape[0]
    cdef Py_ssize_t t, i, j, k
    cdef bint steady = False
    cdef bint need_reset = False
    cdef double sum_log_f = 0.0
    cdef double ssq = 0.0
    cdef double f, v, s, diff, scale
    cdef long n_obs = 0

    for i in range(m):
        a[i] = 0.0
        for j in range(m):
            p[i, j] = p0[i, j]

    for t in range(n):
        if obs[t] == 0:
            if segmented:
                need_reset = True
            else:
                # a <- T a
                for i in range(m):
                    s = 0.0
                    for j in range(m):
                        s += tmat[i, j] * a[j]
                    anew[i] = s
                for i in range(m):
                    a[i] = anew[i]
                # P <- T P T' + RR
                for i in range(m):
                    for j in range(m):
                        s = 0.0
                        for k in range(m):
                            s += tmat[i, k] * p[k, j]
                        tmp[i, j] = s
                for i in range(m):
                    for j in range(m):
                        s = rr[i, j]
                        for k in range(m):
                            s += tmp[i, k] * tmat[j, k]
                        pnext[i, j] = s
                for i in range(m):
                    for j in range(m):
                        p[i, j] = pnext[i, j]
                steady = False
            continue

        if need_reset:
            steady = False
            need_reset = False
            for i in range(m):
                a[i] = 0.0
                for j in range(m):
                    p[i, j] = p0[i, j]

        f = p[0, 0]
        if not (f > 1e-300) or not isfinite(f):
            out[0] = NAN
            out[1] = NAN
            out[2] = -1.0
            return -1
        v = y[t] - a[0]
        sum_log_f += log(f)
        ssq += v * v / f
        innov_out[t] = v / sqrt(f)
        n_obs += 1

        if steady:
            for i in range(m):
                s = g[i] * v
                for j in range(m):
                    s += tmat[i, j] * a[j]
                anew[i] = s
            for i in range(m):
                a[i] = anew[i]
        else:
            # g = T P[:, 0] / f
            for i in range(m):
                s = 0.0
                for j in range(m):
                    s += tmat[i, j] * p[j, 0]
                g[i] = s / f
            for i in range(m):
                s = g[i] * v
                for j in range(m):
                    s += tmat[i, j] * a[j]
                anew[i] = s
            for i in range(m):
                a[i] = anew[i]
            # P_upd = P - P[:,0] P[0,:] / f
            for i in range(m):
                for j in range(m):
                    pupd[i, j] = p[i, j] - p[i, 0] * p[0, j] / f
            # P_next = T P_upd T' + RR
            for i in range(m):
                for j in range(m):
                    s = 0.0
                    for k in range(m):
                        s += tmat[i, k] * pupd[k, j]
                    tmp[i, j] = s
            diff = 0.0
            for i in range(m):
                for j in range(m):
                    s = rr[i, j]
                    for k in range(m):
                        s += tmp[i, k] * tmat[j, k]
                    pnext[i, j] = s
                    if fabs(pnext[i, j] - p[i, j]) > diff:
                        diff = fabs(pnext[i, j] - p[i, j])
            scale = 1.0 + fabs(pnext[0, 0])
            if diff <= STEADY_TOL * scale:
                steady = True
            for i in range(m):
                for j in range(m):
                    p[i, j] = pnext[i, j]

    out[0] = sum_log_f
    out[1] = ssq
    out[2] = <double> n_obs
    return 0


def kalman_filter(y, obs, tmat, rr, p0, segmented, innov_out):
    """Run the filter; return ``(sum_log_f, sum_v2_over_f, n_obs)``.

    Arguments and semantics match ``_filter_py.kalman_filter``.
    """
    cdef const double[::1] y_v = np.ascontiguousarray(y, dtype=np.float64)
    cdef const unsigned char[::1] obs_v = np.ascontiguousarray(obs, dtype=np.uint8)
    cdef const double[:, ::1] t_v = np.ascontiguousarray(tmat, dtype=np.float64)
    cdef const double[:, ::1] rr_v = np.ascontiguousarray(rr, dtype=np.float64)
    cdef const double[:, ::1] p0_v = np.ascontiguousarray(p0, dtype=np.float64)
    cdef double[::1] innov_v = innov_out
    cdef Py_ssize_t m = t_v.shape[0]

    scratch_v = np.zeros((3, m))
    scratch_m = np.zeros((4, m, m))
    out = np.zeros(3)
    cdef double[:, ::1] sv = scratch_v
    cdef double[:, :, ::1] sm = scratch_m
    cdef double[::1] out_v = out
    cdef bint seg = bool(segmented)

    with nogil:
        _run(y_v, obs_v, t_v, rr_v, p0_v, seg, innov_v,
             sv[0], sv[1], sv[2], sm[0], sm[1], sm[2], sm[3], out_v)
    return float(out[0]), float(out[1]), int(out[2])
