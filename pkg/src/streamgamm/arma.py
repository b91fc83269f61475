"""Exact Gaussian ARMA fitting for mean-zero residual series.

The series lives on a regular time grid with NaN marking missing steps.
The likelihood comes from a Kalman filter over the ARMA state space with
the innovation variance concentrated out, so gaps are handled exactly:
by default the filter predicts through them (one multi-step density),
while ``segmented=True`` restarts from the stationary prior at every gap
and multiplies the per-segment densities instead.

Optimization is quasi-Newton over an unconstrained parameterization:
partial autocorrelations mapped through ``tanh``, which keeps the AR
polynomial stationary and the MA polynomial invertible by construction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from ._kernels import kalman_filter
from .errors import DataError, SingularFitError

LOG_2PI = math.log(2.0 * math.pi)

#: Objective value standing in for an invalid parameter point.
_BIG = 1e300

# Quasi-Newton iteration budget per start.  Matched to common reference
# implementations; see fit_arma for why it is not larger.
MAX_ITER = 60

# Order-walk moves must beat the incumbent by this many AIC units; within
# the band the simpler order wins (the conventional two-unit AIC
# equivalence band, same rule as gam.AIC_MARGIN).
AIC_MARGIN = 2.0

#: Minimum observations per estimated parameter.
MIN_OBS_PER_PARAM = 10


@dataclass
class OrderCell:
    """Outcome of one (p, q) cell in an order search."""

    p: int
    q: int
    aic: float = math.nan
    loglik: float = math.nan
    converged: bool = False
    error: Optional[str] = None


@dataclass
class OrderSearch:
    """Record of a full order-grid search."""

    p_max: int
    q_max: int
    cells: list[OrderCell] = field(default_factory=list)


@dataclass
class ArmaFit:
    """A fitted mean-zero ARMA model.

    ``sigma2`` is the innovation variance from the concentrated
    likelihood; ``innovations`` holds standardized one-step prediction
    errors aligned to the input series (NaN where the input was missing).
    """

    p: int
    q: int
    ar: np.ndarray
    ma: np.ndarray
    sigma2: float
    loglik: float
    aic: float
    n_obs: int
    converged: bool
    innovations: np.ndarray
    segmented: bool = False
    search: Optional[OrderSearch] = None

    @property
    def n_params(self) -> int:
        return self.p + self.q + 1


def _pacf_to_ar(r: np.ndarray) -> np.ndarray:
    """Levinson recursion: partial autocorrelations to AR coefficients."""
    p = r.size
    a = np.zeros(p)
    for k in range(p):
        prev = a[:k].copy()
        a[k] = r[k]
        for j in range(k):
            a[j] = prev[j] - r[k] * prev[k - 1 - j]
    return a


def _ar_to_pacf(a: np.ndarray) -> np.ndarray:
    """Inverse Levinson recursion; raises for a non-stationary polynomial."""
    a = np.asarray(a, dtype=np.float64).copy()
    p = a.size
    r = np.zeros(p)
    for k in range(p - 1, -1, -1):
        r[k] = a[k]
        if not abs(r[k]) < 1.0:
            raise ValueError("polynomial roots on or inside the unit circle")
        denom = 1.0 - r[k] * r[k]
        prev = a[:k].copy()
        for j in range(k):
            a[j] = (prev[j] + r[k] * prev[k - 1 - j]) / denom
    return r


def _unpack(u: np.ndarray, p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Unconstrained vector to (stationary AR, invertible MA)."""
    ar = _pacf_to_ar(np.tanh(u[:p]))
    ma = -_pacf_to_ar(np.tanh(u[p:]))
    return ar, ma


def _pack(ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """Inverse of ``_unpack``; raises ValueError off the valid region."""
    r = np.concatenate([_ar_to_pacf(ar), _ar_to_pacf(-np.asarray(ma))])
    return np.arctanh(np.clip(r, -1 + 1e-12, 1 - 1e-12))


def _state_space(ar: np.ndarray, ma: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Harvey-form transition, innovation outer product, stationary prior.

    State dimension ``m = max(p, q + 1)``; the first state component is
    the observed series.  Unit innovation variance throughout.
    """
    p, q = len(ar), len(ma)
    m = max(p, q + 1)
    tmat = np.zeros((m, m))
    tmat[:p, 0] = ar
    for i in range(m - 1):
        tmat[i, i + 1] = 1.0
    rvec = np.zeros(m)
    rvec[0] = 1.0
    rvec[1 : q + 1] = ma
    rr = np.outer(rvec, rvec)
    eye = np.eye(m * m)
    lhs = eye - np.kron(tmat, tmat)
    p0 = np.linalg.solve(lhs, rr.reshape(-1)).reshape(m, m)
    p0 = (p0 + p0.T) / 2.0
    return tmat, rr, p0


def _prepare(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, int, slice]:
    """Trim outer NaN; return trimmed values, obs mask, count, window."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise DataError("expected a 1-D series")
    finite = np.isfinite(y)
    n_obs = int(finite.sum())
    if n_obs == 0:
        raise DataError("series has no observed values")
    idx = np.flatnonzero(finite)
    window = slice(int(idx[0]), int(idx[-1]) + 1)
    yt = np.ascontiguousarray(y[window])
    obs = np.ascontiguousarray(np.isfinite(yt).astype(np.uint8))
    yt = np.where(np.isfinite(yt), yt, 0.0)
    return yt, obs, n_obs, window


def _filter_stats(
    yt: np.ndarray,
    obs: np.ndarray,
    ar: np.ndarray,
    ma: np.ndarray,
    segmented: bool,
    innov: Optional[np.ndarray] = None,
) -> tuple[float, float, int]:
    if innov is None:
        innov = np.full(yt.shape[0], np.nan)
    tmat, rr, p0 = _state_space(ar, ma)
    return kalman_filter(yt, obs, tmat, rr, p0, segmented, innov)


def arma_loglik(
    y: np.ndarray,
    p: int,
    q: int,
    ar: np.ndarray,
    ma: np.ndarray,
    sigma2: float,
    segmented: bool = False,
) -> float:
    """Exact Gaussian log-likelihood at the given parameter values.

    ``y`` is a regular-grid series with NaN for missing steps; the model
    is mean zero.  The AR polynomial must be stationary and ``sigma2``
    positive.  MA invertibility is not required here: the filtered
    likelihood is well defined either way.
    """
    ar = np.atleast_1d(np.asarray(ar, dtype=np.float64)) if p else np.zeros(0)
    ma = np.atleast_1d(np.asarray(ma, dtype=np.float64)) if q else np.zeros(0)
    if ar.size != p or ma.size != q:
        raise DataError(f"coefficient lengths {ar.size},{ma.size} do not match order ({p},{q})")
    if not sigma2 > 0.0:
        raise DataError("sigma2 must be positive")
    if p:
        try:
            _ar_to_pacf(ar)
        except ValueError as exc:
            raise DataError(f"non-stationary AR coefficients: {exc}") from exc
    yt, obs, n_obs, _ = _prepare(y)
    sum_log_f, ssq, n_used = _filter_stats(yt, obs, ar, ma, segmented)
    if n_used != n_obs or n_used <= 0:
        raise SingularFitError("filter failed: non-positive prediction variance")
    return -0.5 * (n_obs * LOG_2PI + n_obs * math.log(sigma2) + sum_log_f + ssq / sigma2)


def arma_innovations(
    y: np.ndarray,
    p: int,
    q: int,
    ar: np.ndarray,
    ma: np.ndarray,
    sigma2: float,
    segmented: bool = False,
) -> np.ndarray:
    """Standardized one-step prediction errors, NaN at missing steps."""
    ar = np.atleast_1d(np.asarray(ar, dtype=np.float64)) if p else np.zeros(0)
    ma = np.atleast_1d(np.asarray(ma, dtype=np.float64)) if q else np.zeros(0)
    if not sigma2 > 0.0:
        raise DataError("sigma2 must be positive")
    yt, obs, n_obs, window = _prepare(y)
    innov = np.full(yt.shape[0], np.nan)
    _, _, n_used = _filter_stats(yt, obs, ar, ma, segmented, innov)
    if n_used != n_obs or n_used <= 0:
        raise SingularFitError("filter failed: non-positive prediction variance")
    out = np.full(np.asarray(y).shape[0], np.nan)
    out[window] = innov / math.sqrt(sigma2)
    return out


def _neg_conc_loglik(
    u: np.ndarray, yt: np.ndarray, obs: np.ndarray, p: int, q: int, segmented: bool
) -> float:
    """Negative concentrated log-likelihood at an unconstrained point."""
    try:
        ar, ma = _unpack(u, p, q)
        sum_log_f, ssq, n_used = _filter_stats(yt, obs, ar, ma, segmented)
    except (np.linalg.LinAlgError, ValueError):
        return _BIG
    if n_used <= 0:
        return _BIG
    s2 = ssq / n_used
    if not s2 > 0.0 or not math.isfinite(s2) or not math.isfinite(sum_log_f):
        return _BIG
    return 0.5 * (n_used * (LOG_2PI + 1.0) + n_used * math.log(s2) + sum_log_f)


def _central_diff_grad(fun, u: np.ndarray) -> np.ndarray:
    """Central differences with per-coordinate step 1e-6 * (1 + |u_i|)."""
    grad = np.zeros(u.size)
    for i in range(u.size):
        h = 1e-6 * (1.0 + abs(u[i]))
        up = u.copy()
        up[i] += h
        dn = u.copy()
        dn[i] -= h
        grad[i] = (fun(up) - fun(dn)) / (2.0 * h)
    return grad


def _longest_run(values: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Longest stretch of consecutive observed values."""
    best_start, best_len, start = 0, 0, None
    for i, o in enumerate(obs):
        if o and start is None:
            start = i
        elif not o and start is not None:
            if i - start > best_len:
                best_start, best_len = start, i - start
            start = None
    if start is not None and obs.size - start > best_len:
        best_start, best_len = start, obs.size - start
    return values[best_start : best_start + best_len]


def _hannan_rissanen_start(yt: np.ndarray, obs: np.ndarray, p: int, q: int) -> np.ndarray:
    """Two-stage regression start values, projected into the valid region."""
    z = _longest_run(yt, obs)
    n = z.size
    if n < max(3 * (p + q) + 10, 20):
        return np.zeros(p + q)
    try:
        if q == 0:
            design = np.column_stack([z[p - 1 - j : n - 1 - j] for j in range(p)])
            coef, *_ = np.linalg.lstsq(design, z[p:], rcond=None)
            ar_hat, ma_hat = coef, np.zeros(0)
        else:
            h = min(max(20, 2 * (p + q)), (n - 1) // 3)
            design = np.column_stack([z[h - 1 - j : n - 1 - j] for j in range(h)])
            coef, *_ = np.linalg.lstsq(design, z[h:], rcond=None)
            eps = np.concatenate([np.zeros(h), z[h:] - design @ coef])
            lead = max(p, q)
            rows = np.arange(h + lead, n)
            cols = [z[rows - 1 - j] for j in range(p)]
            cols += [eps[rows - 1 - j] for j in range(q)]
            design2 = np.column_stack(cols) if cols else np.zeros((rows.size, 0))
            coef2, *_ = np.linalg.lstsq(design2, z[rows], rcond=None)
            ar_hat, ma_hat = coef2[:p], coef2[p:]
    except np.linalg.LinAlgError:
        return np.zeros(p + q)
    # Shrink toward zero until both polynomials sit inside the valid region.
    for _ in range(80):
        try:
            u = _pack(ar_hat, ma_hat)
        except (ValueError, FloatingPointError):
            ar_hat = ar_hat * 0.9
            ma_hat = ma_hat * 0.9
            continue
        if np.all(np.abs(np.tanh(u)) < 0.995):
            return u
        u = np.clip(u, -2.994, 2.994)  # tanh(2.994) ~ 0.995
        return u
    return np.zeros(p + q)


def fit_arma(
    y: np.ndarray,
    p: int,
    q: int,
    *,
    segmented: bool = False,
    seed: int = 0,
    max_restarts: int = 5,
) -> ArmaFit:
    """Fit a mean-zero ARMA(p, q) by exact maximum likelihood.

    Quasi-Newton ascent from two-stage regression starts, with the
    white-noise point and up to ``max_restarts`` seeded random starts
    tried only when a run fails outright (non-finite likelihood).  The
    iteration budget is deliberately bounded: over-parameterised cells
    contain near-common-factor ridges along which the likelihood keeps
    creeping upward by fitting noise, and chasing that supremum breaks
    the regularity assumptions AIC selection relies on.  Bounded local
    ascent from consistent starts stops at the regular maximum instead.
    A run that exhausts the budget is kept but flagged ``converged=False``.
    """
    if p < 0 or q < 0:
        raise DataError("orders must be non-negative")
    yt, obs, n_obs, window = _prepare(y)
    n_par = p + q + 1
    if n_obs < MIN_OBS_PER_PARAM * n_par:
        raise DataError(
            f"{n_obs} observations cannot support ARMA({p},{q}); "
            f"need at least {MIN_OBS_PER_PARAM * n_par}"
        )

    if p == 0 and q == 0:
        innov = np.full(yt.shape[0], np.nan)
        sum_log_f, ssq, n_used = _filter_stats(yt, obs, np.zeros(0), np.zeros(0), segmented, innov)
        sigma2 = ssq / n_used
        loglik = -0.5 * (n_used * (LOG_2PI + 1.0) + n_used * math.log(sigma2) + sum_log_f)
        out = np.full(np.asarray(y).shape[0], np.nan)
        out[window] = innov / math.sqrt(sigma2)
        return ArmaFit(
            p=0,
            q=0,
            ar=np.zeros(0),
            ma=np.zeros(0),
            sigma2=float(sigma2),
            loglik=float(loglik),
            aic=float(-2.0 * loglik + 2.0),
            n_obs=n_used,
            converged=True,
            innovations=out,
            segmented=segmented,
        )

    def objective(u: np.ndarray) -> float:
        return _neg_conc_loglik(u, yt, obs, p, q, segmented)

    def gradient(u: np.ndarray) -> np.ndarray:
        return _central_diff_grad(objective, u)

    starts = [_hannan_rissanen_start(yt, obs, p, q)]
    rng = np.random.default_rng([seed, p, q])
    runs = []
    tried = 0
    while starts:
        u0 = starts.pop(0)
        res = minimize(
            objective, u0, jac=gradient, method="L-BFGS-B", options={"maxiter": MAX_ITER}
        )
        runs.append(res)
        tried += 1
        # Failure means the likelihood could not be evaluated, not that the
        # iteration budget ran out; only failures earn another start.
        failed = not np.isfinite(res.fun) or res.fun >= _BIG
        if failed and not starts and tried < 2 + max_restarts:
            starts.append(np.zeros(p + q) if tried == 1 else rng.normal(scale=0.5, size=p + q))

    ok = [r for r in runs if r.fun < _BIG and np.isfinite(r.fun)]
    if not ok:
        raise SingularFitError(f"ARMA({p},{q}) likelihood evaluation failed at every start")
    best = min(ok, key=lambda r: r.fun)

    ar, ma = _unpack(best.x, p, q)
    innov = np.full(yt.shape[0], np.nan)
    sum_log_f, ssq, n_used = _filter_stats(yt, obs, ar, ma, segmented, innov)
    sigma2 = ssq / n_used
    loglik = -0.5 * (n_used * (LOG_2PI + 1.0) + n_used * math.log(sigma2) + sum_log_f)
    out = np.full(np.asarray(y).shape[0], np.nan)
    out[window] = innov / math.sqrt(sigma2)
    return ArmaFit(
        p=p,
        q=q,
        ar=ar,
        ma=ma,
        sigma2=float(sigma2),
        loglik=float(loglik),
        aic=float(-2.0 * loglik + 2.0 * n_par),
        n_obs=n_used,
        converged=bool(best.success),
        innovations=out,
        segmented=segmented,
    )


def select_order(
    y: np.ndarray,
    p_max: int = 5,
    q_max: int = 5,
    *,
    segmented: bool = False,
    seed: int = 0,
    n_jobs: int = 1,
) -> ArmaFit:
    """Fit the order grid and pick a model by stepwise AIC descent.

    Every cell on ``[0, p_max] x [0, q_max]`` is fitted; cells that raise
    are recorded in ``fit.search`` and excluded, and cells whose optimizer
    ran out of budget are recorded but never compete: their criterion
    values are not trustworthy, and automatic ARIMA selection
    conventionally drops them.

    Selection walks the AIC surface instead of taking its global minimum.
    From the white-noise corner and the single-lag models, it repeatedly
    moves to the adjacent order (p or q changed by one) that improves
    AIC the most, accepting a move only when it beats the incumbent by
    more than ``AIC_MARGIN``, until no neighbor qualifies; equally good
    orders resolve to smaller ``p + q``, then smaller ``p``.  The global
    grid minimum is deliberately not used: over-parameterised ARMA cells
    are non-identified along near-common-factor ridges, where the
    likelihood creeps upward by fitting noise and AIC's regularity
    assumptions fail, so the raw minimum systematically lands on
    redundant models.  The walk is a deterministic function of the
    fitted grid, so the result does not depend on evaluation order or
    on ``n_jobs``.
    """
    if p_max < 0 or q_max < 0:
        raise DataError("order bounds must be non-negative")
    orders = [(p, q) for p in range(p_max + 1) for q in range(q_max + 1)]

    def run(pq: tuple[int, int]):
        p, q = pq
        try:
            return pq, fit_arma(y, p, q, segmented=segmented, seed=seed), None
        except (DataError, SingularFitError) as exc:
            return pq, None, str(exc)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=min(n_jobs, 4)) as pool:
            results = list(pool.map(run, orders))
    else:
        results = [run(pq) for pq in orders]

    search = OrderSearch(p_max=p_max, q_max=q_max)
    fits: dict[tuple[int, int], ArmaFit] = {}
    for (p, q), fit, err in results:
        if fit is None:
            search.cells.append(OrderCell(p=p, q=q, error=err))
        else:
            search.cells.append(
                OrderCell(p=p, q=q, aic=fit.aic, loglik=fit.loglik, converged=fit.converged)
            )
            fits[(p, q)] = fit
    if not fits:
        raise DataError("every order-grid cell failed; series too short or degenerate")

    pool = {pq: fit.aic for pq, fit in fits.items() if fit.converged}
    if not pool:
        pool = {pq: fit.aic for pq, fit in fits.items()}

    def rank(pq: tuple[int, int]) -> tuple[float, int, int]:
        # Equivalent to "prefer the simpler order unless the larger one is
        # better by more than the margin", applied per parameter.
        return pool[pq] + AIC_MARGIN * (pq[0] + pq[1]), pq[0] + pq[1], pq[0]

    seeds_ = [pq for pq in ((0, 0), (1, 0), (0, 1)) if pq in pool]
    current = min(seeds_, key=rank) if seeds_ else min(pool, key=rank)
    while True:
        p0, q0 = current
        steps = [
            (p0 + dp, q0 + dq)
            for dp, dq in ((1, 0), (-1, 0), (0, 1), (0, -1))
            if (p0 + dp, q0 + dq) in pool
        ]
        if not steps:
            break
        candidate = min(steps, key=rank)
        if rank(candidate) < rank(current):
            current = candidate
        else:
            break
    best = fits[current]
    best.search = search
    return best
