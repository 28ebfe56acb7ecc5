"""Sparse spatial weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from ..errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass
class SpatialWeights:
    """Row-oriented sparse weights with zero diagonal.

    Attributes
    ----------
    sparse : scipy.sparse.csr_matrix
        ``n x n`` weights.
    ids : list of str
        Observation ids in row order.
    kind : str
        Construction tag, for example ``"knn3"``.
    transform : str
        ``"R"`` when rows are standardized, ``"O"`` for raw weights.
    """

    sparse: sparse.csr_matrix
    ids: list[str]
    kind: str
    transform: str = "O"

    @property
    def n(self) -> int:
        return self.sparse.shape[0]

    @property
    def s0(self) -> float:
        return float(self.sparse.sum())

    def neighbours(self, i: int) -> np.ndarray:
        row = self.sparse.getrow(i)
        return row.indices[np.argsort(row.indices)]

    def row_standardized(self) -> "SpatialWeights":
        w = self.sparse.tocsr().astype(float)
        sums = np.asarray(w.sum(axis=1)).ravel()
        inv = np.zeros_like(sums)
        inv[sums > 0] = 1.0 / sums[sums > 0]
        return SpatialWeights(sparse.csr_matrix(sparse.diags(inv) @ w), list(self.ids), self.kind, "R")

    def lag(self, values: np.ndarray) -> np.ndarray:
        return self.sparse @ np.asarray(values, dtype=float)


def knn_weights(
    points: np.ndarray, k: int = 3, ids: Sequence | None = None, row_standardize: bool = True
) -> SpatialWeights:
    """k-nearest-neighbour weights on point coordinates.

    Neighbours at equal distance are ranked by id, so the result does not
    depend on the order the points are given in.

    Raises
    ------
    ValidationError
        If ``k < 1`` or ``k >= n``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if k < 1 or k >= n:
        raise ValidationError(f"k must be in [1, n-1]; got k={k}, n={n}")
    ids = [str(i) for i in (ids if ids is not None else range(n))]
    if len(set(ids)) != n:
        raise ValidationError("weights ids must be unique")
    rank = np.empty(n, dtype=int)
    rank[sorted(range(n), key=lambda i: ids[i])] = np.arange(n)

    uniq = np.unique(pts, axis=0)
    if len(uniq) < n:
        logger.warning("%d duplicate point(s); ties broken by id", n - len(uniq))

    tree = cKDTree(pts)
    rows, cols = [], []
    # query enough candidates to see every point tied with the k-th distance
    m = min(n, k + 1)
    while True:
        dist, idx = tree.query(pts, k=m)
        dist = np.atleast_2d(dist)
        idx = np.atleast_2d(idx)
        if m == n or np.all(dist[:, -1] > _kth_other(dist, idx, k)):
            break
        m = min(n, 2 * m)
    for i in range(n):
        cand = [(d, rank[j], j) for d, j in zip(dist[i], idx[i]) if j != i]
        cand.sort()
        for _, _, j in cand[:k]:
            rows.append(i)
            cols.append(int(j))
    w = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    out = SpatialWeights(w, ids, f"knn{k}", "O")
    return out.row_standardized() if row_standardize else out


def _kth_other(dist: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    """Distance of the k-th nearest point other than the query point itself."""
    self_mask = idx == np.arange(len(idx))[:, None]
    # sentinel so self never counts
    d = np.where(self_mask, -np.inf, dist)
    d = np.sort(d, axis=1)
    return d[:, k]


def from_neighbours(neighbours: Sequence[Sequence[int]], ids: Sequence | None = None,
                    row_standardize: bool = True, kind: str = "custom") -> SpatialWeights:
    n = len(neighbours)
    rows = [i for i, nb in enumerate(neighbours) for _ in nb]
    cols = [int(j) for nb in neighbours for j in nb]
    if any(i == j for i, j in zip(rows, cols)):
        raise ValidationError("weights diagonal must be zero")
    w = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    out = SpatialWeights(w, [str(i) for i in (ids if ids is not None else range(n))], kind, "O")
    return out.row_standardized() if row_standardize else out
