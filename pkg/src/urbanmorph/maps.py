"""GeoJSON and SVG choropleth export of zone columns."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import shapely
from shapely.geometry import mapping

from .errors import ValidationError
from .ingest import Zone

VIEW_W, VIEW_H = 800, 600
MAP_W = 600
PALETTE = ("#fef0d9", "#fdcc8a", "#fc8d59", "#e34a33", "#b30000", "#7f0000", "#4d0000")
NO_DATA = "url(#nodata)"


def _check(frame: pd.DataFrame, columns: Sequence[str]) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ValidationError(f"column(s) not found: {missing}")


def _clean(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return None
    return float(v)


def export_geojson(zones: Sequence[Zone], frame: pd.DataFrame, columns: Sequence[str], path: str | Path) -> None:
    _check(frame, columns)
    feats = []
    for z in sorted(zones, key=lambda z: z.id):
        props = {"zone_id": z.id}
        for c in columns:
            props[c] = _clean(frame[c].get(z.id)) if z.id in frame.index else None
        feats.append({"type": "Feature", "properties": props, "geometry": mapping(z.boundary)})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh, sort_keys=True)
        fh.write("\n")


def quantile_breaks(values: np.ndarray, k: int = 5) -> np.ndarray:
    """Upper bounds of quantile classes; at most as many classes as distinct values."""
    v = np.sort(values[np.isfinite(values)])
    distinct = np.unique(v)
    k = max(1, min(k, len(distinct)))
    if k == len(distinct):
        return distinct
    q = np.quantile(v, np.arange(1, k + 1) / k)
    return np.unique(q)


def _path(geom, tx) -> str:
    parts = []
    for poly in shapely.get_parts(geom):
        for ring in [poly.exterior, *poly.interiors]:
            xy = [tx(x, y) for x, y in np.asarray(ring.coords)]
            parts.append("M" + " L".join(f"{a:.2f},{b:.2f}" for a, b in xy) + " Z")
    return " ".join(parts)


def choropleth_svg(zones: Sequence[Zone], values: pd.Series, title: str, k: int = 5) -> str:
    """SVG choropleth with quantile classes, a legend and hatched no-data zones."""
    zones = sorted(zones, key=lambda z: z.id)
    geoms = [z.boundary for z in zones]
    x0, y0, x1, y1 = shapely.total_bounds(np.array(geoms, dtype=object))
    span = max(x1 - x0, y1 - y0) or 1.0
    scale = (MAP_W - 40) / span

    def tx(x, y):
        return 20 + (x - x0) * scale, VIEW_H - 20 - (y - y0) * scale

    vals = np.array([values.get(z.id, np.nan) for z in zones], dtype=float)
    breaks = quantile_breaks(vals, k) if np.isfinite(vals).any() else np.array([])
    colours = PALETTE if len(breaks) > 2 else (PALETTE[0], PALETTE[4])
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {VIEW_W} {VIEW_H}" width="{VIEW_W}" height="{VIEW_H}">',
        "<defs>",
        '<pattern id="nodata" patternUnits="userSpaceOnUse" width="6" height="6" patternTransform="rotate(45)">',
        '<rect width="6" height="6" fill="#ffffff"/><line x1="0" y1="0" x2="0" y2="6" stroke="#888888" stroke-width="2"/>',
        "</pattern>",
        "</defs>",
        f'<text x="20" y="16" font-family="sans-serif" font-size="13">{_escape(title)}</text>',
    ]
    for z, v in zip(zones, vals):
        if np.isfinite(v):
            cls = int(np.searchsorted(breaks, v, side="left"))
            fill = colours[min(cls, len(colours) - 1)]
        else:
            fill = NO_DATA
        lines.append(f'<path d="{_path(z.boundary, tx)}" fill="{fill}" stroke="#333333" stroke-width="0.5">'
                     f"<title>{_escape(z.id)}</title></path>")
    # legend
    lo = np.nanmin(vals) if np.isfinite(vals).any() else np.nan
    y = 40
    for c, hi in enumerate(breaks):
        lines.append(f'<rect x="{MAP_W + 10}" y="{y}" width="16" height="12" fill="{colours[min(c, len(colours) - 1)]}" '
                     'stroke="#333333" stroke-width="0.5"/>')
        lines.append(f'<text x="{MAP_W + 32}" y="{y + 10}" font-family="sans-serif" font-size="10">'
                     f"{lo:.4g} to {hi:.4g}</text>")
        lo = hi
        y += 18
    if not np.isfinite(vals).all():
        lines.append(f'<rect x="{MAP_W + 10}" y="{y}" width="16" height="12" fill="{NO_DATA}" stroke="#333333" '
                     'stroke-width="0.5"/>')
        lines.append(f'<text x="{MAP_W + 32}" y="{y + 10}" font-family="sans-serif" font-size="10">no data</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _escape(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def export_maps(
    zones: Sequence[Zone], frame: pd.DataFrame, columns: Sequence[str], directory: str | Path, k: int = 5
) -> list[Path]:
    """One GeoJSON holding every column plus one SVG per column."""
    _check(frame, columns)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = [directory / "zones_values.geojson"]
    export_geojson(zones, frame, columns, out[0])
    for c in columns:
        p = directory / f"map_{c}.svg"
        p.write_text(choropleth_svg(zones, frame[c], c, k), encoding="utf-8")
        out.append(p)
    return out
