"""Ordinary least squares with classical inference."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, stats

from ..errors import NumericalError, ValidationError

RANK_TOL = 1e-10


@dataclass
class OLSFit:
    """OLS estimates. Index 0 of the coefficient arrays is the intercept."""

    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    tstat: np.ndarray
    pvalue: np.ndarray
    r2: float
    adj_r2: float
    f_stat: float
    f_pvalue: float
    resid: np.ndarray
    fitted: np.ndarray
    sigma2: float
    n: int
    df_resid: int
    xtx_inv: np.ndarray = field(repr=False)

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    @property
    def beta(self) -> dict[str, float]:
        return dict(zip(self.names[1:], self.coef[1:]))

    def summary_rows(self) -> list[tuple[str, float, float, float, float]]:
        return [
            (name, float(b), float(s), float(t), float(p))
            for name, b, s, t, p in zip(self.names, self.coef, self.se, self.tstat, self.pvalue)
        ]


def design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(len(X)), X])


def dependent_columns(Z: np.ndarray, names: Sequence[str]) -> list[str]:
    """Names of design columns that are linear combinations of earlier ones."""
    out = []
    kept: list[int] = []
    for j in range(Z.shape[1]):
        trial = Z[:, kept + [j]]
        s = np.linalg.svd(trial, compute_uv=False)
        if s[-1] <= RANK_TOL * max(s[0], 1.0) * max(Z.shape):
            out.append(names[j])
        else:
            kept.append(j)
    return out


def ols_fit(y: np.ndarray, X: np.ndarray, names: Sequence[str] | None = None) -> OLSFit:
    """Least squares of ``y`` on a constant and the columns of ``X``.

    Solved through a pivoted QR decomposition; standard errors are classical
    and p-values two-sided from Student's t with ``n - p - 1`` degrees of freedom.

    Raises
    ------
    ValidationError
        If there are not more observations than parameters.
    NumericalError
        If the design is rank deficient; the message names the dependent columns.
    """
    y = np.asarray(y, dtype=float).ravel()
    Z = design(X)
    n, m = Z.shape
    p = m - 1
    names = ["CONSTANT"] + (list(names) if names is not None else [f"x{j}" for j in range(1, m)])
    if len(names) != m:
        raise ValidationError("names must match the number of regressors")
    if len(y) != n:
        raise ValidationError("y and X have different lengths")
    if n <= m:
        raise ValidationError(f"need n > p + 1 observations; n={n}, p={p}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Z))):
        raise ValidationError("non-finite values in regression inputs")

    Q, R, piv = linalg.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[-1] <= RANK_TOL * diag[0] * max(n, m):
        dep = dependent_columns(Z, names)
        raise NumericalError(f"design matrix is rank deficient; dependent column(s): {dep}")
    coef_p = linalg.solve_triangular(R, Q.T @ y)
    coef = np.empty(m)
    coef[piv] = coef_p
    fitted = Z @ coef
    resid = y - fitted
    df = n - m
    sse = float(resid @ resid)
    sigma2 = sse / df
    r_inv = linalg.solve_triangular(R, np.eye(m))
    cov_p = r_inv @ r_inv.T
    xtx_inv = np.empty_like(cov_p)
    xtx_inv[np.ix_(piv, piv)] = cov_p
    se = np.sqrt(np.diag(xtx_inv) * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = coef / se
    pvalue = 2.0 * stats.t.sf(np.abs(tstat), df)
    dev = y - y.mean()
    sst = float(dev @ dev)
    r2 = 1.0 - sse / sst if sst > 0 else 0.0
    r2 = min(max(r2, 0.0), 1.0)
    adj = 1.0 - (1.0 - r2) * (n - 1) / df
    if p > 0 and r2 < 1.0:
        f_stat = (r2 / p) / ((1.0 - r2) / df)
        f_p = float(stats.f.sf(f_stat, p, df))
    else:
        f_stat, f_p = (np.inf, 0.0) if p > 0 else (np.nan, np.nan)
    return OLSFit(names, coef, se, tstat, pvalue, r2, adj, float(f_stat), f_p, resid, fitted, sigma2, n, df, xtx_inv)
