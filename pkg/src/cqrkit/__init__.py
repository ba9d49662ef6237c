"""Composite quantile regression, adaptive CQR and efficiency analytics."""

__version__ = "0.1.0"

from .distributions import ErrorDistribution
from .estimators import (
    Dataset,
    FitResult,
    LinearModelSpec,
    QuantileGrid,
    fit_acqr,
    fit_cqr,
    fit_ols,
    fit_oracle,
    fit_qr,
    predict,
)
from .lp import BACKEND

__all__ = [
    "BACKEND",
    "Dataset",
    "ErrorDistribution",
    "FitResult",
    "LinearModelSpec",
    "QuantileGrid",
    "fit_acqr",
    "fit_cqr",
    "fit_ols",
    "fit_oracle",
    "fit_qr",
    "predict",
]
