"""Pure-NumPy Kalman filter for ARMA likelihoods (fallback backend).

Same contract as the compiled twin in ``_filter_cy.pyx``: given the
state-space matrices of an ARMA model with unit innovation variance,
accumulate the scaled log-determinant and weighted sum of squares that the
concentrated Gaussian likelihood needs, plus standardized one-step
prediction errors.

Missing observations (``obs == 0``) are either predicted through without
an update (default) or treated as hard segment cuts that restart the
filter from the stationary prior (``segmented=True``).
"""

from __future__ import annotations

import math

import numpy as np

#: Max-abs change between successive prediction covariances that counts
#: as convergence to the steady state, relative to 1 + F.
STEADY_TOL = 1e-12


def kalman_filter(
    y: np.ndarray,
    obs: np.ndarray,
    tmat: np.ndarray,
    rr: np.ndarray,
    p0: np.ndarray,
    segmented: bool,
    innov_out: np.ndarray,
) -> tuple[float, float, int]:
    """Run the filter; return ``(sum_log_f, sum_v2_over_f, n_obs)``.

    ``innov_out`` must be a float64 array of length ``len(y)``; observed
    positions receive ``v_t / sqrt(F_t)``, the rest are left untouched.
    A non-positive or non-finite prediction variance reports failure as
    ``n_obs == -1``.
    """
    n = y.shape[0]
    a = np.zeros(tmat.shape[0])
    p = p0.copy()
    gain = np.zeros_like(a)
    steady = False
    need_reset = False
    sum_log_f = 0.0
    ssq = 0.0
    n_obs = 0

    for t in range(n):
        if not obs[t]:
            if segmented:
                need_reset = True
            else:
                a = tmat @ a
                p = tmat @ p @ tmat.T + rr
                steady = False
            continue
        if need_reset:
            a[:] = 0.0
            p = p0.copy()
            steady = False
            need_reset = False
        f = p[0, 0]
        if not (f > 1e-300) or not math.isfinite(f):
            return math.nan, math.nan, -1
        v = y[t] - a[0]
        sum_log_f += math.log(f)
        ssq += v * v / f
        innov_out[t] = v / math.sqrt(f)
        n_obs += 1
        if steady:
            a = tmat @ a + gain * v
        else:
            g = (tmat @ p[:, 0]) / f
            a = tmat @ a + g * v
            p_upd = p - np.outer(p[:, 0], p[0, :]) / f
            p_next = tmat @ p_upd @ tmat.T + rr
            if np.max(np.abs(p_next - p)) <= STEADY_TOL * (1.0 + abs(p_next[0, 0])):
                steady = True
                gain = g
            p = p_next
    return sum_log_f, ssq, n_obs
