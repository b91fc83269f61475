"""Two-step additive modeling of high-frequency stream sensor series.

Pipeline: align multi-rate sensor series to a common 15-minute grid,
screen covariates for collinearity, fit a penalized additive model with
smoothness chosen by GCV and covariates chosen by stepwise AIC, then
model the residual autocorrelation with an exact-likelihood ARMA term and
compare the combined model against the independence fit.
"""

from .arma import ArmaFit, arma_innovations, arma_loglik, fit_arma, select_order
from .basis import BasisExpansion, SmoothSpec, evaluate_smooth, screen_vif, tprs_basis, vif
from .errors import (
    AlignmentError,
    DataError,
    DegenerateColumnError,
    EmptyInputError,
    ExtrapolationError,
    IntegrityError,
    NotFoundError,
    RankError,
    SchemaError,
    SingularFitError,
    StreamGammError,
    TransportError,
)
from .gam import GamFit, GamTerm, fit_penalized, select_lambdas, smooth_se, stepwise_select
from .gamm import GammModel, ImportanceReport, aaic, fit_gamm, residual_series, variable_importance
from .ingest import (
    AlignedFrame,
    ColumnSchema,
    ColumnSummary,
    Gap,
    SensorSeries,
    align,
    frame_from_csv,
    frame_to_csv,
    load_series,
    parse_timestamp,
    summarize,
)
from ._kernels import KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    # errors
    "StreamGammError",
    "SchemaError",
    "EmptyInputError",
    "AlignmentError",
    "DataError",
    "RankError",
    "DegenerateColumnError",
    "SingularFitError",
    "ExtrapolationError",
    "TransportError",
    "NotFoundError",
    "IntegrityError",
    # ingest
    "SensorSeries",
    "ColumnSchema",
    "AlignedFrame",
    "Gap",
    "ColumnSummary",
    "load_series",
    "align",
    "summarize",
    "frame_to_csv",
    "frame_from_csv",
    "parse_timestamp",
    # basis / vif
    "SmoothSpec",
    "BasisExpansion",
    "tprs_basis",
    "evaluate_smooth",
    "vif",
    "screen_vif",
    # gam
    "GamFit",
    "GamTerm",
    "fit_penalized",
    "select_lambdas",
    "stepwise_select",
    "smooth_se",
    # arma
    "ArmaFit",
    "arma_loglik",
    "arma_innovations",
    "fit_arma",
    "select_order",
    # gamm
    "GammModel",
    "ImportanceReport",
    "aaic",
    "fit_gamm",
    "residual_series",
    "variable_importance",
]
