"""Spatial error and spatial lag regression.

The error model is estimated by generalized moments for the autoregressive
parameter followed by feasible GLS on spatially filtered data, iterated to
convergence. The lag model is spatial two-stage least squares with spatially
lagged regressors as instruments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, sparse, stats
from scipy.sparse import linalg as splinalg

from ..errors import NumericalError, ValidationError
from .ols import design, ols_fit
from .weights import SpatialWeights

LAMBDA_BOUND = 0.99
LAMBDA_TOL = 1e-5
MAX_ITER = 100


def _corr2(a: np.ndarray, b: np.ndarray) -> float:
    if np.std(a) == 0 or np.std(b) == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1] ** 2)


def _names(X: np.ndarray, names: Sequence[str] | None) -> list[str]:
    k = 1 if np.ndim(X) == 1 else np.shape(X)[1]
    return ["CONSTANT"] + (list(names) if names is not None else [f"x{j}" for j in range(1, k + 1)])


@dataclass
class SpatialErrorFit:
    """``y = a + X b + u``, ``u = lambda W u + e``."""

    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    zstat: np.ndarray
    pvalue: np.ndarray
    lam: float
    lam_se: float
    lam_z: float
    lam_pvalue: float
    pseudo_r2: float
    u: np.ndarray
    resid: np.ndarray
    sigma2: float
    iterations: int
    clamped: bool = False
    trace: list[float] = field(default_factory=list, repr=False)

    @property
    def beta(self) -> dict[str, float]:
        return dict(zip(self.names[1:], self.coef[1:]))

    def summary_rows(self) -> list[tuple[str, float, float, float, float]]:
        rows = [(n, float(b), float(s), float(z), float(p))
                for n, b, s, z, p in zip(self.names, self.coef, self.se, self.zstat, self.pvalue)]
        rows.append(("lambda", self.lam, self.lam_se, self.lam_z, self.lam_pvalue))
        return rows


@dataclass
class SpatialLagFit:
    """``y = a + rho W y + X b + e``."""

    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    zstat: np.ndarray
    pvalue: np.ndarray
    rho: float
    rho_se: float
    rho_z: float
    rho_pvalue: float
    pseudo_r2: float
    spatial_pseudo_r2: float
    resid: np.ndarray
    spatial_term: np.ndarray
    flagged: bool = False

    @property
    def beta(self) -> dict[str, float]:
        return dict(zip(self.names[1:], self.coef[1:]))

    def summary_rows(self) -> list[tuple[str, float, float, float, float]]:
        rows = [(n, float(b), float(s), float(z), float(p))
                for n, b, s, z, p in zip(self.names, self.coef, self.se, self.zstat, self.pvalue)]
        rows.append(("W_dep_var (rho)", self.rho, self.rho_se, self.rho_z, self.rho_pvalue))
        return rows


# --------------------------------------------------------------------------
# spatial error


class _Moments:
    """Quadratic moments E[e' A_r e] / n = 0 for A1 = W'W - diag(W'W), A2 = W."""

    def __init__(self, W: sparse.csr_matrix):
        wtw = (W.T @ W).tocsr()
        self.A = [sparse.csr_matrix(wtw - sparse.diags(wtw.diagonal())), W]
        self.W = W

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """Per moment, the coefficients (c0, c1, c2) of m(lam) = c0 + c1 lam + c2 lam^2."""
        n = len(u)
        ub = self.W @ u
        out = []
        for A in self.A:
            Au, Aub = A @ u, A @ ub
            out.append([u @ Au / n, -(ub @ Au + u @ Aub) / n, ub @ Aub / n])
        return np.array(out)

    def estimate(self, u: np.ndarray) -> float:
        c = self.coefficients(u)

        def loss(lam: float) -> float:
            m = c[:, 0] + c[:, 1] * lam + c[:, 2] * lam * lam
            return float(m @ m)

        res = optimize.minimize_scalar(loss, bounds=(-LAMBDA_BOUND, LAMBDA_BOUND), method="bounded",
                                       options={"xatol": 1e-10})
        return float(res.x)

    def lambda_se(self, u: np.ndarray, lam: float) -> float:
        """Approximate standard error, ignoring the effect of estimating beta on the moments."""
        n = len(u)
        c = self.coefficients(u)
        J = c[:, 1] + 2.0 * c[:, 2] * lam
        eps = u - lam * (self.W @ u)
        s = eps * eps
        B = [A + A.T for A in self.A]
        psi = np.empty((2, 2))
        for r in range(2):
            for q in range(2):
                M = B[r].multiply(B[q].T).tocoo()
                psi[r, q] = float(np.sum(M.data * s[M.row] * s[M.col])) / (2.0 * n)
        jj = float(J @ J)
        if jj <= 0:
            return float("nan")
        return float(np.sqrt(J @ psi @ J / (jj * jj) / n))


def fit_spatial_error(
    y: np.ndarray,
    X: np.ndarray,
    w: SpatialWeights,
    names: Sequence[str] | None = None,
    fixed_lambda: float | None = None,
    tol: float = LAMBDA_TOL,
    max_iter: int = MAX_ITER,
) -> SpatialErrorFit:
    """Spatial error model by GM estimation of lambda and feasible GLS for beta.

    Parameters
    ----------
    fixed_lambda : float, optional
        Pin lambda instead of estimating it; ``0`` reproduces OLS coefficients.

    Raises
    ------
    NumericalError
        If lambda does not converge within ``max_iter`` iterations.
    """
    y = np.asarray(y, dtype=float).ravel()
    names = _names(X, names)
    Z = design(X)
    n = len(y)
    if w.n != n:
        raise ValidationError(f"weights of size {w.n} for {n} observations")
    W = w.sparse
    Wy = W @ y
    WZ = W @ Z
    moments = _Moments(W)

    def gls(lam: float):
        zs = Z - lam * WZ
        ys = y - lam * Wy
        q, r = linalg.qr(zs, mode="economic")
        if np.min(np.abs(np.diag(r))) <= 1e-10 * np.max(np.abs(np.diag(r))):
            raise NumericalError("filtered design is rank deficient")
        b = linalg.solve_triangular(r, q.T @ ys)
        return b, zs, ys, r

    trace: list[float] = []
    if fixed_lambda is not None:
        if abs(fixed_lambda) >= 1:
            raise ValidationError("|lambda| must be < 1")
        lam = float(fixed_lambda)
        b, zs, ys, r = gls(lam)
        iterations = 0
    else:
        b, *_ = gls(0.0)
        lam = moments.estimate(y - Z @ b)
        trace.append(lam)
        iterations = 1
        while True:
            b, zs, ys, r = gls(lam)
            new = moments.estimate(y - Z @ b)
            trace.append(new)
            iterations += 1
            if abs(new - lam) < tol:
                lam = new
                b, zs, ys, r = gls(lam)
                break
            lam = new
            if iterations >= max_iter:
                raise NumericalError(f"spatial error lambda did not converge; trace tail {trace[-5:]}")
    clamped = abs(lam) >= LAMBDA_BOUND - 1e-6

    u = y - Z @ b
    e = ys - zs @ b
    sigma2 = float(e @ e) / n
    r_inv = linalg.solve_triangular(r, np.eye(r.shape[0]))
    se = np.sqrt(np.diag(r_inv @ r_inv.T) * sigma2)
    z = b / se
    p = 2.0 * stats.norm.sf(np.abs(z))
    if fixed_lambda is None:
        lam_se = moments.lambda_se(u, lam)
        lam_z = lam / lam_se if lam_se > 0 else float("nan")
        lam_p = float(2.0 * stats.norm.sf(abs(lam_z))) if np.isfinite(lam_z) else float("nan")
    else:
        lam_se = lam_z = lam_p = float("nan")
    return SpatialErrorFit(names, b, se, z, p, lam, lam_se, lam_z, lam_p, _corr2(y, Z @ b), u, e, sigma2,
                           iterations, clamped, trace)


# --------------------------------------------------------------------------
# spatial lag


def _instruments(Z: np.ndarray, W) -> np.ndarray:
    X = Z[:, 1:]
    WX = W @ X
    WWX = W @ WX
    H = np.column_stack([Z, WX, WWX])
    # drop instruments that add nothing (for example lags of a constant column)
    q, r, piv = linalg.qr(H, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    keep = np.sort(piv[d > 1e-10 * d[0]])
    return H[:, keep]


def reduced_form(w: SpatialWeights, rho: float, xb: np.ndarray) -> np.ndarray:
    """Solve ``(I - rho W) yhat = xb`` iteratively."""
    n = w.n
    A = sparse.identity(n, format="csr") - rho * w.sparse
    sol, info = splinalg.gmres(A, xb, rtol=1e-12, atol=0.0, restart=min(n, 50), maxiter=1000)
    if info != 0:
        raise NumericalError(f"reduced-form solve did not converge (info={info})")
    return sol


def fit_spatial_lag(
    y: np.ndarray,
    X: np.ndarray,
    w: SpatialWeights,
    names: Sequence[str] | None = None,
    fixed_rho: float | None = None,
) -> SpatialLagFit:
    """Spatial lag model by spatial two-stage least squares.

    ``Wy`` is instrumented by ``[X, WX, W^2 X]``; standard errors are
    heteroskedasticity-robust (White). With ``fixed_rho`` the lag term is moved
    to the left-hand side and the rest estimated by least squares; ``0``
    reproduces OLS coefficients.
    """
    y = np.asarray(y, dtype=float).ravel()
    names = _names(X, names)
    Z = design(X)
    n = len(y)
    if w.n != n:
        raise ValidationError(f"weights of size {w.n} for {n} observations")
    W = w.sparse
    Wy = W @ y

    if fixed_rho is not None:
        rho = float(fixed_rho)
        fit = ols_fit(y - rho * Wy, Z[:, 1:], names[1:])
        b = fit.coef
        e = fit.resid
        V = fit.xtx_inv * fit.sigma2
        rho_se = rho_z = rho_p = float("nan")
        se = np.sqrt(np.diag(V))
    else:
        full = np.column_stack([Z, Wy])
        H = _instruments(Z, W)
        qh, _ = linalg.qr(H, mode="economic")
        zhat = qh @ (qh.T @ full)
        theta, *_ = linalg.lstsq(zhat, y)
        e = y - full @ theta
        zz_inv = linalg.inv(zhat.T @ zhat)
        meat = (zhat * (e * e)[:, None]).T @ zhat
        V = zz_inv @ meat @ zz_inv
        se_all = np.sqrt(np.diag(V))
        b, rho = theta[:-1], float(theta[-1])
        se, rho_se = se_all[:-1], float(se_all[-1])
        rho_z = rho / rho_se
        rho_p = float(2.0 * stats.norm.sf(abs(rho_z)))
    z = b / se
    p = 2.0 * stats.norm.sf(np.abs(z))
    xb = Z @ b
    flagged = abs(rho) >= 1
    pseudo = _corr2(y, xb + rho * Wy)
    spatial = _corr2(y, reduced_form(w, rho, xb)) if not flagged else float("nan")
    return SpatialLagFit(names, b, se, z, p, rho, rho_se, rho_z, rho_p, pseudo, spatial, e, rho * Wy, flagged)
