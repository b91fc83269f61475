"""Two-step combined model: additive fit plus ARMA residual structure.

Step one fits the additive model assuming independent errors; step two
fits an ARMA process to its working residuals placed back on the regular
time grid, with order chosen by AIC.  Models with and without the
correlation term are compared on an adjusted AIC built from the fitted
error variance: the independence fit uses the residual variance, the
combined fit the ARMA innovation variance, each charged for its
parameter count.

Deviance is partitioned the same way: covariates explain
``1 - rss / tss``; the correlation term adds the further reduction from
residual variance to innovation variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .arma import ArmaFit, fit_arma, select_order
from .errors import DataError, SingularFitError
from .gam import GamFit, _Design, _optimize_lambdas, _solve_subset, stepwise_select
from .ingest import GRID_STEP_S, AlignedFrame
from .basis import SmoothSpec


@dataclass
class GammModel:
    """The combined fit and its comparison against the independence fit.

    ``aaic_gam`` charges the additive fit ``total_edf`` parameters at its
    residual variance; ``aaic_gamm`` charges ``total_edf + p + q + 1`` at
    the ARMA innovation variance.  Lower is better; the gap is driven by
    how much serial structure the residuals carry.
    """

    gam: GamFit
    arma: ArmaFit
    aaic_gam: float
    aaic_gamm: float
    de_gam: float
    de_arma: float
    de_total: float

    @property
    def order(self) -> tuple[int, int]:
        return self.arma.p, self.arma.q

    @property
    def preferred(self) -> str:
        return "gamm" if self.aaic_gamm < self.aaic_gam else "gam"


@dataclass
class ImportanceEntry:
    """Deviance attribution for one covariate."""

    name: str
    importance_pct: float
    de_total_without: float
    converged: bool = True
    error: Optional[str] = None


@dataclass
class ImportanceReport:
    """Leave-one-covariate-out deviance partition of a combined model.

    ``importance_pct`` for a covariate is the drop in total explained
    deviance (percentage points) when that covariate is removed and the
    rest of the model is refitted (smoothing re-selected, ARMA
    coefficients re-estimated at the fixed selected order).
    ``arma_share_pct`` is the slice explained by the correlation term on
    top of all covariates.
    """

    entries: list[ImportanceEntry] = field(default_factory=list)
    arma_share_pct: float = 0.0
    de_total_pct: float = 0.0

    @property
    def ranking(self) -> list[str]:
        done = [e for e in self.entries if e.error is None]
        return [e.name for e in sorted(done, key=lambda e: (-e.importance_pct, e.name))]


def aaic(n: int, sigma2: float, k: float) -> float:
    """Adjusted AIC: ``n * ln(sigma2) + 2k`` (natural log).

    ``sigma2`` is the fitted error variance of the model being scored
    and ``k`` its parameter count, which may be fractional when smooth
    terms contribute effective degrees of freedom.
    """
    if n <= 0:
        raise DataError("n must be positive")
    if not sigma2 > 0.0:
        raise DataError("sigma2 must be positive")
    if k < 0:
        raise DataError("k must be non-negative")
    return n * math.log(sigma2) + 2.0 * k


def residual_series(frame: AlignedFrame, fit: GamFit) -> np.ndarray:
    """Working residuals placed on the full 15-minute lattice.

    Rows the additive fit never saw (invalid rows and grid gaps) become
    NaN, so the ARMA step sees the true spacing of the observations.
    """
    grid = frame.grid
    n_slots = int((grid[-1] - grid[0]) // GRID_STEP_S) + 1
    out = np.full(n_slots, np.nan)
    pos = (grid - grid[0]) // GRID_STEP_S
    out[pos[frame.valid]] = fit.residuals
    return out


def fit_gamm(
    frame: AlignedFrame,
    candidates: Union[Sequence[SmoothSpec], Sequence[str]],
    *,
    p_max: int = 5,
    q_max: int = 5,
    min_valid_rows: int = 500,
    segmented: bool = False,
    seed: int = 0,
    n_jobs: int = 1,
) -> GammModel:
    """Run the full two-step fit and score both models.

    Covariates are chosen by stepwise AIC with GCV smoothing, the
    residual ARMA order by AIC over ``[0, p_max] x [0, q_max]``.  The
    white-noise cell (0, 0) is always in the grid, so the combined
    model's innovation variance can never exceed the residual variance.
    """
    if frame.n_valid < min_valid_rows:
        raise DataError(
            f"{frame.n_valid} valid rows < required minimum {min_valid_rows}"
        )
    gam_fit = stepwise_select(frame, candidates)
    resid = residual_series(frame, gam_fit)
    arma_fit = select_order(
        resid, p_max, q_max, segmented=segmented, seed=seed, n_jobs=n_jobs
    )
    return _assemble(frame, gam_fit, arma_fit)


def _assemble(frame: AlignedFrame, gam_fit: GamFit, arma_fit: ArmaFit) -> GammModel:
    n = gam_fit.n
    de_gam = gam_fit.deviance_explained
    de_total = 1.0 - n * arma_fit.sigma2 / gam_fit.tss
    aaic_gam = aaic(n, gam_fit.sigma2, gam_fit.total_edf)
    aaic_gamm = aaic(n, arma_fit.sigma2, gam_fit.total_edf + arma_fit.n_params)
    return GammModel(
        gam=gam_fit,
        arma=arma_fit,
        aaic_gam=aaic_gam,
        aaic_gamm=aaic_gamm,
        de_gam=de_gam,
        de_arma=de_total - de_gam,
        de_total=de_total,
    )


def variable_importance(
    model: GammModel,
    frame: AlignedFrame,
    *,
    segmented: bool = False,
    seed: int = 0,
) -> ImportanceReport:
    """Leave-one-out deviance partition of the fitted combined model.

    Each selected covariate is removed in turn; the remaining smooths are
    refitted with smoothing re-selected, and the ARMA coefficients are
    re-estimated at the selected order.  The report lists the total-
    deviance drop per covariate plus the correlation term's own share.
    """
    terms = model.gam.terms
    if len(terms) < 2:
        raise DataError("importance needs at least 2 fitted covariates")
    specs = [t.spec for t in terms]
    design = _Design(frame, specs)
    names = sorted(t.name for t in terms)
    p, q = model.order
    tss = model.gam.tss
    n = model.gam.n

    report = ImportanceReport(
        arma_share_pct=100.0 * model.de_arma,
        de_total_pct=100.0 * model.de_total,
    )
    for name in names:
        rest = [c for c in names if c != name]
        try:
            lam, _, _ = _optimize_lambdas(design, rest)
            sol = _solve_subset(design, rest, lam)
            idx = design.indices(rest)
            residuals = design.yc - design.x[:, idx] @ sol.beta
            resid_fit = GamFit(
                intercept=design.ybar,
                terms=[],
                n=n,
                rss=sol.rss,
                tss=tss,
                deviance_explained=1.0 - sol.rss / tss,
                total_edf=sol.total_edf,
                sigma2=sol.rss / n,
                aic=sol.aic,
                gcv=sol.gcv,
                coef_covariance=np.zeros((1, 1)),
                residuals=residuals,
                fitted=design.ybar + design.x[:, idx] @ sol.beta,
            )
            resid = residual_series(frame, resid_fit)
            arma_fit = fit_arma(resid, p, q, segmented=segmented, seed=seed)
            de_total_without = 1.0 - n * arma_fit.sigma2 / tss
            report.entries.append(
                ImportanceEntry(
                    name=name,
                    importance_pct=100.0 * (model.de_total - de_total_without),
                    de_total_without=de_total_without,
                    converged=arma_fit.converged,
                )
            )
        except (DataError, SingularFitError, np.linalg.LinAlgError) as exc:
            report.entries.append(
                ImportanceEntry(
                    name=name,
                    importance_pct=math.nan,
                    de_total_without=math.nan,
                    converged=False,
                    error=str(exc),
                )
            )
    return report
