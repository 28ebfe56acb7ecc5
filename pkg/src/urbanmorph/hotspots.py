"""Fisher-Jenks natural breaks and selection of well-modelled hotspot zones."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError

DEFAULT_CLASSES = 5


def fisher_jenks(values, k: int = DEFAULT_CLASSES) -> np.ndarray:
    """Optimal partition of sorted values into ``k`` contiguous classes.

    Minimizes the total within-class sum of squared deviations by dynamic
    programming over prefix sums. Returns the upper bound of each class.

    Raises
    ------
    ValidationError
        If values are not finite or ``k`` exceeds the number of distinct values.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValidationError("natural breaks need finite values")
    distinct = len(np.unique(x))
    if k < 1 or k > distinct:
        raise ValidationError(f"cannot form {k} classes from {distinct} distinct value(s)")
    n = len(x)
    s1 = np.concatenate([[0.0], np.cumsum(x)])
    s2 = np.concatenate([[0.0], np.cumsum(x * x)])

    def ssd(i, j):
        """Sum of squared deviations of x[i:j] (vectorized over i)."""
        m = j - i
        t = s1[j] - s1[i]
        return s2[j] - s2[i] - t * t / m

    # cost[c][j]: best cost of splitting x[:j] into c + 1 classes
    cost = np.full((k, n + 1), np.inf)
    back = np.zeros((k, n + 1), dtype=int)
    j_all = np.arange(1, n + 1)
    cost[0, 1:] = ssd(np.zeros(n, dtype=int), j_all)
    for c in range(1, k):
        for j in range(c + 1, n + 1):
            i = np.arange(c, j)
            cand = cost[c - 1, i] + ssd(i, j)
            best = int(np.argmin(cand))
            cost[c, j] = cand[best]
            back[c, j] = i[best]
    bounds = []
    j = n
    for c in range(k - 1, -1, -1):
        bounds.append(x[j - 1])
        j = back[c, j] if c > 0 else 0
    return np.array(bounds[::-1])


def classify(values, breaks: np.ndarray) -> np.ndarray:
    """Class index of each value given upper class bounds."""
    return np.searchsorted(np.asarray(breaks), np.asarray(values, dtype=float), side="left")


def within_class_ssd(values, labels) -> float:
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels)
    total = 0.0
    for lab in np.unique(labels):
        v = values[labels == lab]
        total += float(((v - v.mean()) ** 2).sum())
    return total


def hotspots(values: pd.Series, errors: pd.Series, k: int = DEFAULT_CLASSES, top: int = 2) -> pd.DataFrame:
    """Zones in the highest natural-breaks class with the smallest absolute model error.

    Returns up to ``top`` rows with the zone's value, class and error, ordered
    by ``|error|`` then zone id.
    """
    values = values.astype(float)
    if values.isna().any():
        raise ValidationError("hotspot values must be finite")
    breaks = fisher_jenks(values.to_numpy(), k)
    cls = pd.Series(classify(values.to_numpy(), breaks), index=values.index)
    top_zones = cls.index[cls == k - 1]
    err = errors.reindex(top_zones).astype(float)
    if err.isna().any():
        raise ValidationError("missing model errors for zones in the top class")
    frame = pd.DataFrame({"value": values[top_zones], "class": cls[top_zones], "error": err})
    frame["abs_error"] = frame["error"].abs()
    frame = frame.rename_axis("zone_id").reset_index()
    frame = frame.sort_values(["abs_error", "zone_id"], kind="mergesort").head(top)
    return frame.set_index("zone_id")
