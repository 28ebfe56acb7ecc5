"""Regression tables as CSV and aligned text."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from .spatial.diagnostics import LMDiagnostics
from .spatial.models import SpatialErrorFit, SpatialLagFit
from .spatial.moran import MoranResult
from .spatial.ols import OLSFit

COLUMNS = ("Variable", "Coefficient", "Std.Error", "{stat}-Statistic", "Probability")


@dataclass
class ModelTable:
    title: str
    kind: str
    stat: str
    rows: list[tuple[str, float, float, float, float]]
    footer: list[tuple[str, float]] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        cols = [c.format(stat=self.stat) for c in COLUMNS]
        rows = [tuple(r) for r in self.rows] + [(k, v, math.nan, math.nan, math.nan) for k, v in self.footer]
        return pd.DataFrame(rows, columns=cols)

    def to_csv(self, path: str | Path) -> None:
        self.frame().to_csv(path, index=False, float_format="%.10g")

    def to_text(self) -> str:
        cols = [c.format(stat=self.stat) for c in COLUMNS]
        width = max([len(cols[0])] + [len(r[0]) for r in self.rows] + [len(k) for k, _ in self.footer]) + 2
        lines = [self.title, "-" * (width + 4 * 14)]
        lines.append(cols[0].ljust(width) + "".join(c.rjust(14) for c in cols[1:]))
        lines.append("-" * (width + 4 * 14))
        for name, *vals in self.rows:
            lines.append(name.ljust(width) + "".join(_num(v).rjust(14) for v in vals))
        lines.append("-" * (width + 4 * 14))
        for k, v in self.footer:
            lines.append(k.ljust(width) + _num(v).rjust(14))
        return "\n".join(lines) + "\n"

    def write(self, stem: str | Path) -> list[Path]:
        stem = Path(stem)
        csv_path = stem.with_suffix(".csv")
        txt_path = stem.with_suffix(".txt")
        self.to_csv(csv_path)
        txt_path.write_text(self.to_text(), encoding="utf-8")
        return [csv_path, txt_path]


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float) and abs(v) < 1e-4 and v != 0:
        return f"{v:.3e}"
    return f"{v:.4f}"


def ols_table(title: str, fit: OLSFit, moran: MoranResult | None = None,
              lm: LMDiagnostics | None = None) -> ModelTable:
    footer = [("R-squared", fit.r2), ("Adjusted R-squared", fit.adj_r2), ("Prob(F-statistic)", fit.f_pvalue),
              ("N", float(fit.n))]
    if moran is not None:
        footer += [("Moran's I (residuals)", moran.I), ("Moran p (permutation)", moran.p_sim),
                   ("Moran p (normal)", moran.p_norm)]
    if lm is not None:
        for k, (s, p) in lm.as_dict().items():
            footer += [(f"{k} statistic", s), (f"{k} p", p)]
    return ModelTable(title, "ols", "t", fit.summary_rows(), footer)


def error_table(title: str, fit: SpatialErrorFit, n: int) -> ModelTable:
    footer = [("Pseudo R-squared", fit.pseudo_r2), ("N", float(n)), ("Iterations", float(fit.iterations))]
    return ModelTable(title, "error", "z", fit.summary_rows(), footer)


def lag_table(title: str, fit: SpatialLagFit, n: int) -> ModelTable:
    footer = [("Pseudo R-squared", fit.pseudo_r2), ("Spatial Pseudo R-squared", fit.spatial_pseudo_r2),
              ("N", float(n))]
    return ModelTable(title, "lag", "z", fit.summary_rows(), footer)
