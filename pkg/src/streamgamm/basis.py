"""Thin-plate regression spline bases, identifiability constraints, and VIF.

Each covariate gets a low-rank univariate thin-plate basis: the radial
kernel ``|r|^3 / 12`` on up to 1000 representative values, eigen-truncated
to the requested dimension, plus the linear null space.  The sum-to-zero
identifiability constraint is absorbed by column centering, which drops
the constant and leaves ``basis_dim - 1`` columns per term, of which only
the truncated kernel directions are penalized.

The stored penalty measures curvature of the smooth as a function of the
raw covariate: ``coefs @ penalty @ coefs`` equals the integral of the
squared second derivative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DataError, DegenerateColumnError, ExtrapolationError, RankError

MAX_REPRESENTATIVE_VALUES = 1000

#: Relative eigenvalue floor below which a penalty fails the PSD check.
_PSD_SLACK = 1e-10


@dataclass(frozen=True)
class SmoothSpec:
    """Requested shape of one smooth term."""

    covariate: str
    basis_dim: int = 7

    def __post_init__(self):
        if self.basis_dim < 3:
            raise ValueError(f"basis_dim must be >= 3, got {self.basis_dim}")

    @property
    def max_edf(self) -> int:
        """Degrees of freedom available after the sum-to-zero constraint."""
        return self.basis_dim - 1


@dataclass
class BasisExpansion:
    """A constrained thin-plate basis for one covariate.

    ``design_block`` has ``basis_dim - 1`` sum-to-zero columns: the
    truncated kernel directions first, the (centered) linear column last.
    ``penalty`` is PSD with the last row/column zero (linear trend is
    unpenalized), so ``null_dim`` is 1.
    """

    covariate: str
    design_block: np.ndarray  # n x (k-1)
    penalty: np.ndarray  # (k-1) x (k-1), PSD
    null_dim: int
    centering: np.ndarray  # column means absorbed by the constraint
    knot_values: np.ndarray  # representative covariate values (raw units)
    x_mean: float
    x_scale: float
    reps: np.ndarray  # representative values, standardized units
    projector: np.ndarray  # M x (k-2): kernel-to-coefficient map

    @property
    def n_coef(self) -> int:
        return self.design_block.shape[1]


def _representative_values(u: np.ndarray) -> np.ndarray:
    """Distinct standardized values, quantile-subsampled past the cap."""
    uniq = np.unique(u)
    if uniq.size <= MAX_REPRESENTATIVE_VALUES:
        return uniq
    probs = np.linspace(0.0, 1.0, MAX_REPRESENTATIVE_VALUES)
    return np.unique(np.quantile(uniq, probs))


def _kernel(r: np.ndarray) -> np.ndarray:
    # Green's function of the order-2 thin-plate penalty in one dimension.
    return np.abs(r) ** 3 / 12.0


def _kernel_deriv(r: np.ndarray) -> np.ndarray:
    return r * np.abs(r) / 4.0


def _raw_columns(b: BasisExpansion, u: np.ndarray) -> np.ndarray:
    """Unconstrained term columns at standardized values ``u``."""
    radial = _kernel(u[:, None] - b.reps[None, :])
    return np.hstack([radial @ b.projector, u[:, None]])


def _raw_column_derivs(b: BasisExpansion, u: np.ndarray) -> np.ndarray:
    """d/du of the unconstrained columns at standardized values ``u``."""
    d_radial = _kernel_deriv(u[:, None] - b.reps[None, :])
    return np.hstack([d_radial @ b.projector, np.ones((u.size, 1))])


def tprs_basis(x: np.ndarray, spec: SmoothSpec) -> BasisExpansion:
    """Build the constrained thin-plate basis for one covariate column.

    Parameters
    ----------
    x : array
        Covariate values on the rows to be fitted; must be finite with at
        least ``spec.basis_dim`` distinct values.
    spec : SmoothSpec
        Basis dimension request.

    Returns
    -------
    BasisExpansion
        Centered design block, penalty, and everything needed to evaluate
        the smooth at new covariate values.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"{spec.covariate}: expected a 1-D column")
    if not np.isfinite(x).all():
        raise DataError(f"{spec.covariate}: non-finite covariate values")
    k = spec.basis_dim
    n_distinct = np.unique(x).size
    if n_distinct < k:
        raise RankError(
            f"{spec.covariate}: {n_distinct} distinct values cannot support "
            f"basis_dim={k}; reduce the basis dimension"
        )

    mu = float(x.mean())
    sd = float(x.std())
    u = (x - mu) / sd

    reps = _representative_values(u)
    m = reps.size
    gram = _kernel(reps[:, None] - reps[None, :])
    eigvals, eigvecs = np.linalg.eigh(gram)
    # Largest-magnitude eigenpairs carry the kernel's dominant wiggliness.
    top = np.argsort(-np.abs(eigvals), kind="stable")[:k]
    d = eigvals[top]
    u_k = eigvecs[:, top]

    # Null space of the polynomial constraints within the truncated space;
    # keeping it guarantees a PSD penalty and linear tails.
    t_poly = np.column_stack([np.ones(m), reps])
    c = t_poly.T @ u_k  # 2 x k
    _, sv, vt = np.linalg.svd(c)
    if sv.size < 2 or sv[1] <= 1e-10 * sv[0]:
        raise RankError(f"{spec.covariate}: degenerate constraint space")
    z = vt[2:].T  # k x (k-2)
    projector = u_k @ z  # M x (k-2)

    penalty_w = z.T @ (d[:, None] * z)
    penalty_w = (penalty_w + penalty_w.T) / 2.0
    penalty = np.zeros((k - 1, k - 1))
    penalty[: k - 2, : k - 2] = penalty_w / sd**3  # raw-unit curvature

    w = np.linalg.eigvalsh(penalty)
    if w.min() < -_PSD_SLACK * max(w.max(), 1.0):
        raise DataError(f"{spec.covariate}: penalty failed the PSD check")

    expansion = BasisExpansion(
        covariate=spec.covariate,
        design_block=np.empty(0),
        penalty=penalty,
        null_dim=1,
        centering=np.empty(0),
        knot_values=reps * sd + mu,
        x_mean=mu,
        x_scale=sd,
        reps=reps,
        projector=projector,
    )
    raw = _raw_columns(expansion, u)
    expansion.centering = raw.mean(axis=0)
    expansion.design_block = raw - expansion.centering
    return expansion


def term_columns(b: BasisExpansion, x_new: np.ndarray, extrapolate: bool = False) -> np.ndarray:
    """Constrained design columns at new covariate values.

    Inside the representative-value range this reuses the training
    construction exactly; beyond it, values continue linearly from the
    boundary when ``extrapolate`` is set and raise otherwise.
    """
    x_new = np.asarray(x_new, dtype=np.float64)
    lo, hi = float(b.knot_values[0]), float(b.knot_values[-1])
    # Slack keeps training extremes (reconstructed within a ulp) in range.
    tol = 1e-9 * max(hi - lo, 1.0)
    below = x_new < lo - tol
    above = x_new > hi + tol
    outside = below | above
    if outside.any() and not extrapolate:
        raise ExtrapolationError(
            f"{b.covariate}: {int(outside.sum())} values outside "
            f"[{lo:g}, {hi:g}]; pass extrapolate=True for linear extension"
        )
    u = (x_new - b.x_mean) / b.x_scale
    inner = np.where(outside, np.clip(x_new, lo, hi), x_new)
    u_inner = (inner - b.x_mean) / b.x_scale
    cols = _raw_columns(b, u_inner) - b.centering
    if outside.any():
        slope = _raw_column_derivs(b, u_inner[outside])
        cols[outside] += slope * (u - u_inner)[outside, None]
    return cols


def evaluate_smooth(
    b: BasisExpansion,
    coefs: np.ndarray,
    x_new: np.ndarray,
    extrapolate: bool = False,
) -> np.ndarray:
    """Evaluate the fitted smooth at new covariate values."""
    coefs = np.asarray(coefs, dtype=np.float64)
    if coefs.size != b.penalty.shape[0]:
        raise DataError(
            f"{b.covariate}: expected {b.penalty.shape[0]} coefficients, got {coefs.size}"
        )
    return term_columns(b, x_new, extrapolate=extrapolate) @ coefs


def vif(columns: Mapping[str, np.ndarray]) -> dict[str, float]:
    """Variance inflation factor of each column given all the others.

    ``VIF_j = 1 / (1 - R^2_j)`` with ``R^2_j`` from regressing column j on
    the remaining columns plus an intercept.  Perfect collinearity
    (``1 - R^2 < 1e-12``) returns ``inf`` for that column.
    """
    names = list(columns)
    if len(names) < 2:
        raise DataError("vif needs at least 2 columns")
    mat = np.column_stack([np.asarray(columns[n], dtype=np.float64) for n in names])
    if not np.isfinite(mat).all():
        raise DataError("vif columns must be finite (restrict to valid rows first)")
    for j, name in enumerate(names):
        if np.ptp(mat[:, j]) == 0.0:
            raise DegenerateColumnError(f"column {name!r} is constant")

    out: dict[str, float] = {}
    n = mat.shape[0]
    ones = np.ones((n, 1))
    for j, name in enumerate(names):
        yj = mat[:, j]
        design = np.hstack([ones, np.delete(mat, j, axis=1)])
        coef, *_ = np.linalg.lstsq(design, yj, rcond=None)
        resid = yj - design @ coef
        tss = float(((yj - yj.mean()) ** 2).sum())
        one_minus_r2 = float((resid @ resid) / tss)
        out[name] = float("inf") if one_minus_r2 < 1e-12 else 1.0 / one_minus_r2
    return out


def screen_vif(
    columns: Mapping[str, np.ndarray], threshold: float = 6.0
) -> tuple[dict[str, float], list[str]]:
    """VIF table plus the columns at or above the exclusion threshold.

    Reporting only; the caller decides what to drop.
    """
    table = vif(columns)
    flagged = [name for name, v in table.items() if v >= threshold]
    return table, flagged
