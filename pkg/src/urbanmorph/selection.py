"""
Variable selection: recursive feature elimination with cross-validation, and
the fallback through a hierarchically clustered correlation matrix with one
representative per main branch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import NumericalError, ValidationError
from .spatial.ols import ols_fit

logger = logging.getLogger(__name__)

FOLDS = 5
P_THRESHOLD = 0.05
BETA_FLOOR = 0.05
TIE_TOL = 1e-12
N_BRANCHES = 3


# --------------------------------------------------------------------------
# correlation and clustering


@dataclass
class CorrelationMatrix:
    names: list[str]
    r: np.ndarray

    def abs_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.abs(self.r), index=self.names, columns=self.names)


def pearson_matrix(frame: pd.DataFrame) -> CorrelationMatrix:
    """Pearson correlations of the columns of ``frame``; the diagonal is exactly 1.

    Raises
    ------
    ValidationError
        With fewer than two columns or a constant column.
    """
    if frame.shape[1] < 2:
        raise ValidationError("correlation matrix needs at least 2 columns")
    X = frame.to_numpy(dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValidationError("correlation input has missing or non-finite values")
    Xc = X - X.mean(axis=0)
    sd = np.sqrt((Xc**2).sum(axis=0))
    const = [c for c, s in zip(frame.columns, sd) if s <= 1e-12 * max(1.0, float(np.abs(X).max()))]
    if const:
        raise ValidationError(f"constant column(s) in correlation input: {const}")
    Z = Xc / sd
    r = np.clip(Z.T @ Z, -1.0, 1.0)
    r = (r + r.T) / 2
    np.fill_diagonal(r, 1.0)
    return CorrelationMatrix([str(c) for c in frame.columns], r)


@dataclass
class Merge:
    left: tuple[str, ...]
    right: tuple[str, ...]
    height: float

    def as_dict(self) -> dict:
        return {"left": list(self.left), "right": list(self.right), "height": self.height}


@dataclass
class Dendrogram:
    names: list[str]
    merges: list[Merge]


def hcluster(corr: CorrelationMatrix) -> Dendrogram:
    """Average-linkage agglomeration on ``d = 1 - |r|``.

    Among equally close pairs the one with the lexicographically smallest
    pair of cluster labels merges first; a cluster's label is its sorted member names.
    """
    names = list(corr.names)
    d0 = 1.0 - np.abs(corr.r)
    clusters: dict[int, tuple[str, ...]] = {i: (names[i],) for i in range(len(names))}
    sizes = {i: 1 for i in clusters}
    dist: dict[tuple[int, int], float] = {}
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            dist[(i, j)] = float(d0[i, j])
    merges = []
    next_id = len(names)
    while len(clusters) > 1:
        best = min(dist.values())
        tied = [k for k, v in dist.items() if v <= best + TIE_TOL]
        a, b = min(tied, key=lambda k: tuple(sorted((clusters[k[0]], clusters[k[1]]))))
        la, lb = sorted((clusters[a], clusters[b]))
        merges.append(Merge(la, lb, max(dist[(a, b)], 0.0)))
        merged = tuple(sorted(clusters[a] + clusters[b]))
        na, nb = sizes[a], sizes[b]
        new_d = {}
        for c in clusters:
            if c in (a, b):
                continue
            da = dist[(min(a, c), max(a, c))]
            db = dist[(min(b, c), max(b, c))]
            new_d[c] = (na * da + nb * db) / (na + nb)
        for key in [k for k in dist if a in k or b in k]:
            del dist[key]
        del clusters[a], clusters[b]
        for c, v in new_d.items():
            dist[(c, next_id)] = v
        clusters[next_id] = merged
        sizes[next_id] = na + nb
        next_id += 1
    return Dendrogram(names, merges)


def cut_below_second_bifurcation(dendrogram: Dendrogram) -> list[list[str]]:
    """The three main branches: components left after removing the top two merges.

    Clusters are returned in the order of their first member in ``dendrogram.names``.
    """
    n = len(dendrogram.names)
    if n < N_BRANCHES:
        raise ValidationError(f"need at least {N_BRANCHES} variables to cut the dendrogram")
    parent = {name: name for name in dendrogram.names}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for m in dendrogram.merges[: n - N_BRANCHES]:
        parent[find(m.right[0])] = find(m.left[0])
    groups: dict[str, list[str]] = {}
    for name in dendrogram.names:
        groups.setdefault(find(name), []).append(name)
    return list(groups.values())


def representative(cluster: Sequence[str], corr: CorrelationMatrix, override: str | None = None) -> str:
    """Cluster member with the largest mean ``|r|`` to its peers, or the override.

    Ties go to the lexicographically smallest name, so the result does not
    depend on member order.

    Raises
    ------
    ValidationError
        If ``override`` is not a member of the cluster.
    """
    cluster = list(cluster)
    if not cluster:
        raise ValidationError("empty cluster")
    if override is not None:
        if override not in cluster:
            raise ValidationError(f"override {override!r} is not in cluster {sorted(cluster)}")
        return override
    if len(cluster) == 1:
        return cluster[0]
    absr = corr.abs_frame().loc[cluster, cluster].to_numpy()
    score = (absr.sum(axis=1) - 1.0) / (len(cluster) - 1)
    best = score.max()
    return min(c for c, s in zip(cluster, score) if s >= best - TIE_TOL)


def representatives(
    clusters: Sequence[Sequence[str]],
    corr: CorrelationMatrix,
    overrides: Mapping[int, str] | Sequence[str] | None = None,
) -> list[str]:
    """One representative per cluster.

    ``overrides`` is either a map from cluster index to variable name, or a
    list of preferred names, each applied to the cluster containing it.
    """
    pinned: dict[int, str] = {}
    if isinstance(overrides, Mapping):
        pinned = {int(k): v for k, v in overrides.items()}
    elif overrides:
        for name in overrides:
            where = [i for i, c in enumerate(clusters) if name in c]
            if not where:
                raise ValidationError(f"override {name!r} is not a candidate variable")
            if where[0] in pinned:
                logger.warning("cluster %d already pinned to %s; ignoring %s", where[0], pinned[where[0]], name)
                continue
            pinned[where[0]] = name
    return [representative(c, corr, pinned.get(i)) for i, c in enumerate(clusters)]


# --------------------------------------------------------------------------
# RFECV


@dataclass
class SelectionResult:
    chosen: list[str]
    method: str
    cv_scores: dict[int, float] = field(default_factory=dict)
    fold_scores: dict[int, list[float]] = field(default_factory=dict)
    eliminated: list[str] = field(default_factory=list)
    folds: list[int] = field(default_factory=list)
    dropped_collinear: list[str] = field(default_factory=list)
    quality_gate_failed: bool = False
    gate_report: dict[str, dict[str, float]] = field(default_factory=dict)
    dendrogram: list[dict] = field(default_factory=list)
    clusters: list[list[str]] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)

    @property
    def best_score(self) -> float:
        return self.cv_scores.get(len(self.chosen), math.nan)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "chosen": list(self.chosen),
            "quality_gate_failed": self.quality_gate_failed,
            "cv_scores": {str(k): v for k, v in sorted(self.cv_scores.items())},
            "eliminated": list(self.eliminated),
            "dropped_collinear": list(self.dropped_collinear),
            "gates": self.gate_report,
            "clusters": self.clusters,
            "dendrogram": self.dendrogram,
            "steps": self.steps,
            "folds": list(self.folds),
        }


def _lstsq(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    A = np.column_stack([np.ones(len(Z)), Z])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Fold label of every row from a seeded shuffle; fold sizes differ by at most one."""
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    for f, idx in enumerate(np.array_split(perm, k)):
        labels[idx] = f
    return labels


def cv_r2(Z: np.ndarray, y: np.ndarray, folds: np.ndarray) -> list[float]:
    """Out-of-sample R^2 per fold (relative to the held-out fold's own mean)."""
    out = []
    for f in np.unique(folds):
        test = folds == f
        coef = _lstsq(Z[~test], y[~test])
        pred = coef[0] + Z[test] @ coef[1:]
        resid = y[test] - pred
        dev = y[test] - y[test].mean()
        sst = float(dev @ dev)
        out.append(1.0 - float(resid @ resid) / sst if sst > 0 else 0.0)
    return out


def variance_inflation(Z: np.ndarray) -> np.ndarray:
    vif = np.empty(Z.shape[1])
    for j in range(Z.shape[1]):
        others = np.delete(Z, j, axis=1)
        if others.shape[1] == 0:
            vif[j] = 1.0
            continue
        coef = _lstsq(others, Z[:, j])
        resid = Z[:, j] - coef[0] - others @ coef[1:]
        dev = Z[:, j] - Z[:, j].mean()
        r2 = 1.0 - float(resid @ resid) / float(dev @ dev)
        vif[j] = math.inf if r2 >= 1.0 - 1e-10 else 1.0 / (1.0 - r2)
    return vif


def _drop_collinear(X: pd.DataFrame) -> tuple[pd.DataFrame, list[str]]:
    dropped = []
    while X.shape[1] > 1:
        Z = np.column_stack([np.ones(len(X)), X.to_numpy(dtype=float)])
        s = np.linalg.svd(Z, compute_uv=False)
        if s[-1] > 1e-10 * s[0] * max(Z.shape):
            break
        vif = variance_inflation(X.to_numpy(dtype=float))
        top = vif.max()
        near = vif == top if math.isinf(top) else vif >= top - 1e-9 * top
        worst = int(np.flatnonzero(near)[-1])
        name = X.columns[worst]
        logger.warning("dropping %s: collinear with other candidates (largest VIF)", name)
        dropped.append(name)
        X = X.drop(columns=[name])
    return X, dropped


def rfecv(X: pd.DataFrame, y, folds: int = FOLDS, seed: int = 0) -> SelectionResult:
    """Backward elimination scored by k-fold cross-validated R^2.

    At each step OLS is fitted on the current set and the variable with the
    smallest absolute coefficient is dropped; every set size is scored by the
    mean out-of-sample R^2 over the folds. The best size wins, ties going to
    the smaller set.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    if X.shape[1] == 0:
        raise ValidationError("no candidate variables")
    if not 2 <= folds < n:
        raise ValidationError(f"need 2 <= folds < n; got folds={folds}, n={n}")
    X, dropped = _drop_collinear(X.astype(float))
    labels = fold_assignment(n, folds, seed)
    current = list(X.columns)
    scores: dict[int, float] = {}
    fold_scores: dict[int, list[float]] = {}
    sets: dict[int, list[str]] = {}
    eliminated = []
    while current:
        Z = X[current].to_numpy()
        fs = cv_r2(Z, y, labels)
        fold_scores[len(current)] = fs
        scores[len(current)] = float(np.mean(fs))
        sets[len(current)] = list(current)
        if len(current) == 1:
            break
        coef = _lstsq(Z, y)[1:]
        weakest = int(np.argmin(np.abs(coef)))
        eliminated.append(current.pop(weakest))
    best = max(scores.values())
    size = min(k for k, v in scores.items() if v >= best - TIE_TOL)
    return SelectionResult(sets[size], "rfecv", scores, fold_scores, eliminated, labels.tolist(), dropped)


# --------------------------------------------------------------------------
# protocol


def quality_gates(
    X: pd.DataFrame, y, chosen: Sequence[str], p_threshold: float = P_THRESHOLD, beta_floor: float = BETA_FLOOR
) -> tuple[bool, dict[str, dict[str, float]]]:
    """Every retained coefficient must have ``p < p_threshold`` and ``|beta| >= beta_floor``."""
    try:
        fit = ols_fit(np.asarray(y, dtype=float), X[list(chosen)].to_numpy(dtype=float), list(chosen))
    except (NumericalError, ValidationError) as exc:
        logger.warning("quality gates: %s", exc)
        return False, {}
    report = {}
    ok = True
    for name, b, p in zip(fit.names[1:], fit.coef[1:], fit.pvalue[1:]):
        report[name] = {"beta": float(b), "p": float(p)}
        if not (p < p_threshold and abs(b) >= beta_floor):
            ok = False
    return ok, report


def select_protocol(
    X: pd.DataFrame,
    y,
    corr: CorrelationMatrix | None = None,
    groups: Mapping[str, str] | None = None,
    overrides: Mapping[int, str] | Sequence[str] | None = None,
    folds: int = FOLDS,
    seed: int = 0,
    p_threshold: float = P_THRESHOLD,
    beta_floor: float = BETA_FLOOR,
    second_rfecv: bool = True,
) -> SelectionResult:
    """RFECV first; if its model fails the quality gates, fall back to the dendrogram.

    The fallback cuts the clustered correlation matrix into its three main
    branches (per group when ``groups`` maps variables to groups) and keeps
    one representative each, optionally followed by a second RFECV on the
    representatives. A set passes the gates when every coefficient has
    ``p < p_threshold`` and ``|beta| >= beta_floor`` and its cross-validated
    R^2 is positive. When nothing passes, the set with the fewest gate
    violations is returned with ``quality_gate_failed`` set.
    """
    if X.shape[1] == 0:
        raise ValidationError("empty candidate set")
    y = np.asarray(y, dtype=float).ravel()
    steps = []

    def judge(result: SelectionResult, label: str) -> tuple[bool, dict]:
        ok, rep = quality_gates(X, y, result.chosen, p_threshold, beta_floor)
        score = result.best_score
        if not (score > 0):
            ok = False
        bad = sum(1 for v in rep.values() if not (v["p"] < p_threshold and abs(v["beta"]) >= beta_floor))
        steps.append({"path": label, "chosen": list(result.chosen), "passed": ok, "cv_r2": score,
                      "violations": bad if rep else len(result.chosen)})
        return ok, rep

    first = rfecv(X, y, folds, seed)
    ok, rep = judge(first, "rfecv")
    if ok:
        first.gate_report, first.steps = rep, steps
        return first

    # fallback through the dendrogram
    if groups:
        members: dict[str, list[str]] = {}
        for col in X.columns:
            members.setdefault(groups.get(col, "other"), []).append(col)
    else:
        members = {"all": list(X.columns)}
    clusters: list[list[str]] = []
    merges: list[dict] = []
    for g in sorted(members):
        cols = members[g]
        if len(cols) < N_BRANCHES:
            clusters.extend([[c] for c in cols])
            continue
        corr_g = pearson_matrix(X[cols])
        dend = hcluster(corr_g)
        merges.extend({"group": g, **m.as_dict()} for m in dend.merges)
        clusters.extend(cut_below_second_bifurcation(dend))
    corr_all = corr if corr is not None else pearson_matrix(X)
    reps = representatives(clusters, corr_all, overrides)
    scores = rfecv(X[reps], y, folds, seed)
    cut = SelectionResult(reps, "dendrogram-cut", scores.cv_scores, scores.fold_scores, [], scores.folds,
                          scores.dropped_collinear, dendrogram=merges, clusters=clusters)
    cut_ok, cut_rep = judge(cut, "dendrogram-cut")

    candidates = [(first, ok, rep), (cut, cut_ok, cut_rep)]
    if second_rfecv and len(reps) > 1:
        again = rfecv(X[reps], y, folds, seed)
        again.method = "rfecv-after-cut"
        again.dendrogram, again.clusters = merges, clusters
        again_ok, again_rep = judge(again, "rfecv-after-cut")
        if again_ok and set(again.chosen) < set(reps):
            again.gate_report, again.steps = again_rep, steps
            return again
        candidates.append((again, again_ok, again_rep))
    if cut_ok:
        cut.gate_report, cut.steps = cut_rep, steps
        return cut

    def badness(item):
        result, _, rep = item
        bad = sum(1 for v in rep.values() if not (v["p"] < p_threshold and abs(v["beta"]) >= beta_floor))
        bad = bad if rep else len(result.chosen)
        return (bad, -np.nan_to_num(result.best_score, nan=-np.inf))

    result, _, rep = min(candidates, key=badness)
    logger.warning("no selection passed the quality gates; returning best effort (%s)", result.method)
    result.quality_gate_failed = True
    result.gate_report, result.steps = rep, steps
    result.dendrogram, result.clusters = merges, clusters
    return result
