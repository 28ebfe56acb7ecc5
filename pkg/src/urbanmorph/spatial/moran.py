"""Global Moran's I with permutation and normal-approximation inference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import ValidationError
from .weights import SpatialWeights

PERMUTATIONS = 999


@dataclass(frozen=True)
class MoranResult:
    I: float
    expected: float
    p_sim: float
    p_norm: float
    z_norm: float
    permutations: int
    seed: int
    method: str = "permutation"

    @property
    def p_value(self) -> float:
        return self.p_sim if self.permutations > 0 else self.p_norm


def _statistic(z: np.ndarray, W, s0: float) -> float:
    n = len(z)
    return float(n / s0 * (z @ (W @ z)) / (z @ z))


def morans_i(
    values: np.ndarray, w: SpatialWeights, permutations: int = PERMUTATIONS, seed: int = 0
) -> MoranResult:
    """Moran's I of ``values`` under weights ``w``.

    The pseudo p-value is two-sided, counting permuted statistics at least as
    far from the expectation ``-1/(n-1)`` as the observed one. The normal
    approximation uses the randomization variance.

    Raises
    ------
    ValidationError
        If the values are constant or their length does not match ``w``.
    """
    y = np.asarray(values, dtype=float).ravel()
    n = len(y)
    if n != w.n:
        raise ValidationError(f"{n} values for weights of size {w.n}")
    z = y - y.mean()
    if not np.any(np.abs(z) > 1e-12 * max(1.0, float(np.max(np.abs(y))))):
        raise ValidationError("Moran's I is undefined for constant values")
    W = w.sparse
    s0 = w.s0
    I = _statistic(z, W, s0)
    ei = -1.0 / (n - 1)

    # randomization variance (Cliff and Ord)
    Wt = W + W.T
    s1 = 0.5 * float(Wt.multiply(Wt).sum())
    s2 = float(np.sum((np.asarray(W.sum(axis=1)).ravel() + np.asarray(W.sum(axis=0)).ravel()) ** 2))
    k = n * np.sum(z**4) / np.sum(z**2) ** 2
    num = n * ((n * n - 3 * n + 3) * s1 - n * s2 + 3 * s0 * s0) - k * ((n * n - n) * s1 - 2 * n * s2 + 6 * s0 * s0)
    var = num / ((n - 1) * (n - 2) * (n - 3) * s0 * s0) - ei * ei if n > 3 else np.nan
    z_norm = (I - ei) / np.sqrt(var) if var > 0 else np.nan
    p_norm = float(2.0 * stats.norm.sf(abs(z_norm))) if np.isfinite(z_norm) else np.nan

    p_sim = np.nan
    if permutations > 0:
        rng = np.random.default_rng(seed)
        perm = rng.permuted(np.tile(z, (permutations, 1)), axis=1).T
        sims = n / s0 * np.einsum("ij,ij->j", perm, W @ perm) / (z @ z)
        extreme = np.sum(np.abs(sims - ei) >= abs(I - ei) - 1e-15)
        p_sim = float((1 + extreme) / (permutations + 1))
    return MoranResult(I, ei, p_sim, p_norm, float(z_norm), permutations, seed,
                       "permutation" if permutations > 0 else "normal")

