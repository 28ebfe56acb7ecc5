"""Spatial weights, OLS, autocorrelation diagnostics and spatial regression models."""

from .diagnostics import LMDiagnostics, LMTest, lm_diagnostics, model_select
from .models import SpatialErrorFit, SpatialLagFit, fit_spatial_error, fit_spatial_lag
from .moran import MoranResult, morans_i
from .ols import OLSFit, ols_fit
from .weights import SpatialWeights, from_neighbours, knn_weights

__all__ = [
    "SpatialWeights",
    "knn_weights",
    "from_neighbours",
    "OLSFit",
    "ols_fit",
    "MoranResult",
    "morans_i",
    "LMTest",
    "LMDiagnostics",
    "lm_diagnostics",
    "model_select",
    "SpatialErrorFit",
    "SpatialLagFit",
    "fit_spatial_error",
    "fit_spatial_lag",
]
