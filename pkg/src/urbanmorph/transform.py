"""Yeo-Johnson power transformation and z-score standardization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import optimize

from .errors import ValidationError

LAMBDA_BOUNDS = (-5.0, 5.0)
LAMBDA_TOL = 1e-6
_EPS = 1e-12


@dataclass(frozen=True)
class YeoJohnsonFit:
    lmbda: float
    loglik: float
    bounds: tuple[float, float] = LAMBDA_BOUNDS


@dataclass(frozen=True)
class Standardization:
    mean: float
    sd: float


def yeo_johnson(y, lmbda: float):
    """Yeo-Johnson transform of ``y`` at exponent ``lmbda``.

    For ``y >= 0``: ``((y + 1)**lmbda - 1) / lmbda``, or ``log(y + 1)`` at 0.
    For ``y < 0``: ``-((1 - y)**(2 - lmbda) - 1) / (2 - lmbda)``, or ``-log(1 - y)`` at 2.
    Evaluated through ``expm1``/``log1p`` so the branches are continuous in
    ``lmbda``; at ``lmbda == 1`` the input is returned unchanged.
    """
    y = np.asarray(y, dtype=float)
    if lmbda == 1.0:
        out = y.copy()
        return out if out.ndim else float(out)
    out = np.empty_like(y)
    pos = y >= 0
    lp = np.log1p(y[pos])
    ln = np.log1p(-y[~pos])
    if abs(lmbda) < _EPS:
        out[pos] = lp
    else:
        out[pos] = np.expm1(lmbda * lp) / lmbda
    if abs(lmbda - 2.0) < _EPS:
        out[~pos] = -ln
    else:
        out[~pos] = -np.expm1((2.0 - lmbda) * ln) / (2.0 - lmbda)
    return out if out.ndim else float(out)


def inverse_yeo_johnson(t, lmbda: float):
    """Inverse of :func:`yeo_johnson`; NaN where ``t`` lies outside the transform's range."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        if abs(lmbda) < _EPS:
            out[pos] = np.expm1(t[pos])
        else:
            out[pos] = np.expm1(np.log1p(lmbda * t[pos]) / lmbda)
        if abs(lmbda - 2.0) < _EPS:
            out[~pos] = -np.expm1(-t[~pos])
        else:
            out[~pos] = -np.expm1(np.log1p(-(2.0 - lmbda) * t[~pos]) / (2.0 - lmbda))
    return out if out.ndim else float(out)


def yeo_johnson_loglik(y: np.ndarray, lmbda: float) -> float:
    """Profile log-likelihood of a normal model for the transformed data."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    t = yeo_johnson(y, lmbda)
    var = float(np.mean((t - t.mean()) ** 2))
    if var <= 0:
        return -math.inf
    jac = float(np.sum(np.sign(y) * np.log1p(np.abs(y))))
    return -0.5 * n * math.log(var) + (lmbda - 1.0) * jac


def fit_yeo_johnson(column, bounds: tuple[float, float] = LAMBDA_BOUNDS, tol: float = LAMBDA_TOL) -> YeoJohnsonFit:
    """Maximum-likelihood exponent over ``bounds`` by bounded scalar search.

    Raises
    ------
    ValidationError
        With fewer than three distinct finite values.
    """
    y = np.asarray(column, dtype=float)
    y = y[np.isfinite(y)]
    if len(np.unique(y)) < 3:
        raise ValidationError("Yeo-Johnson fit needs at least 3 distinct finite values")
    res = optimize.minimize_scalar(
        lambda l: -yeo_johnson_loglik(y, l), bounds=bounds, method="bounded", options={"xatol": tol}
    )
    lam = float(res.x)
    return YeoJohnsonFit(lam, yeo_johnson_loglik(y, lam), tuple(bounds))


def zscore(column) -> tuple[np.ndarray, Standardization]:
    """``(y - mean) / sd`` with the population standard deviation."""
    y = np.asarray(column, dtype=float)
    mean = math.fsum(y) / len(y)
    sd = math.sqrt(math.fsum((y - mean) ** 2) / len(y))
    if sd <= 1e-12 * max(1.0, abs(mean)):
        raise ValidationError("cannot standardize a constant column")
    return (y - mean) / sd, Standardization(mean, sd)


def transform_frame(frame: pd.DataFrame, columns=None) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Fit Yeo-Johnson then z-score each column; missing values stay missing.

    Returns the transformed frame and a manifest with ``column, lambda, mean, sd``.
    """
    columns = list(frame.columns if columns is None else columns)
    out = pd.DataFrame(index=frame.index)
    rows = []
    for col in columns:
        values = frame[col].to_numpy(dtype=float)
        ok = np.isfinite(values)
        fit = fit_yeo_johnson(values[ok])
        t = np.full(len(values), np.nan)
        t[ok] = yeo_johnson(values[ok], fit.lmbda)
        z, st = zscore(t[ok])
        t[ok] = z
        out[col] = t
        rows.append({"column": col, "lambda": fit.lmbda, "mean": st.mean, "sd": st.sd})
    return out, pd.DataFrame(rows, columns=["column", "lambda", "mean", "sd"])


def write_manifest(manifest: pd.DataFrame, path: str | Path) -> None:
    manifest.to_csv(path, index=False, float_format="%.12g")
