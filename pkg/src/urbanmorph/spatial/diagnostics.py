"""Lagrange multiplier tests for spatial dependence in OLS residuals, and model choice."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .moran import MoranResult
from .ols import OLSFit, design
from .weights import SpatialWeights

logger = logging.getLogger(__name__)

ALPHA = 0.05


@dataclass(frozen=True)
class LMTest:
    statistic: float
    pvalue: float


@dataclass(frozen=True)
class LMDiagnostics:
    lm_error: LMTest
    lm_lag: LMTest
    robust_lm_error: LMTest
    robust_lm_lag: LMTest

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {
            "LM error": (self.lm_error.statistic, self.lm_error.pvalue),
            "LM lag": (self.lm_lag.statistic, self.lm_lag.pvalue),
            "Robust LM error": (self.robust_lm_error.statistic, self.robust_lm_error.pvalue),
            "Robust LM lag": (self.robust_lm_lag.statistic, self.robust_lm_lag.pvalue),
        }


def _test(stat: float) -> LMTest:
    stat = max(float(stat), 0.0)
    return LMTest(stat, float(stats.chi2.sf(stat, 1)))


def trace_term(w: SpatialWeights) -> float:
    """tr(W'W + WW)."""
    W = w.sparse
    return float(W.multiply(W).sum() + W.multiply(W.T).sum())


def lm_diagnostics(fit: OLSFit, y: np.ndarray, X: np.ndarray, w: SpatialWeights) -> LMDiagnostics:
    """Simple and robust LM error / lag statistics, each chi-squared with 1 df.

    ``sigma^2 = e'e / n``. With ``T = tr(W'W + WW)`` and
    ``D = (WXb)' M (WXb) / sigma^2 + T``, where ``M`` annihilates the design:

    - LM error ``(e'We / s2)^2 / T``
    - LM lag ``(e'Wy / s2)^2 / D``
    - robust LM error ``(e'We/s2 - T/D * e'Wy/s2)^2 / (T - T^2/D)``
    - robust LM lag ``(e'Wy/s2 - e'We/s2)^2 / (D - T)``
    """
    y = np.asarray(y, dtype=float).ravel()
    Z = design(X)
    e = fit.resid
    n = len(e)
    W = w.sparse
    s2 = float(e @ e) / n
    T = trace_term(w)
    de = float(e @ (W @ e)) / s2
    dl = float(e @ (W @ y)) / s2
    wxb = W @ (Z @ fit.coef)
    proj = Z @ (fit.xtx_inv @ (Z.T @ wxb))
    D = float(wxb @ (wxb - proj)) / s2 + T
    return LMDiagnostics(
        lm_error=_test(de * de / T),
        lm_lag=_test(dl * dl / D),
        robust_lm_error=_test((de - T / D * dl) ** 2 / (T - T * T / D)),
        robust_lm_lag=_test((dl - de) ** 2 / (D - T)),
    )


def model_select(moran: MoranResult | float, diagnostics: LMDiagnostics, alpha: float = ALPHA) -> str:
    """Choose ``"ols"``, ``"error"`` or ``"lag"``.

    OLS is kept when residual autocorrelation is not significant. Otherwise the
    robust LM tests decide; if both are significant the larger statistic wins,
    and if neither is, OLS is kept with a warning.
    """
    p = moran.p_value if isinstance(moran, MoranResult) else float(moran)
    if p >= alpha:
        return "ols"
    re, rl = diagnostics.robust_lm_error, diagnostics.robust_lm_lag
    err_sig, lag_sig = re.pvalue < alpha, rl.pvalue < alpha
    if err_sig and not lag_sig:
        return "error"
    if lag_sig and not err_sig:
        return "lag"
    if err_sig and lag_sig:
        return "error" if re.statistic >= rl.statistic else "lag"
    logger.warning("residuals autocorrelated but neither robust LM test is significant; keeping OLS")
    return "ols"
