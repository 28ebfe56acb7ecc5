"""Aggregation of element metrics to zones and assembly of the modelling matrix."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
import shapely

from .ingest import Zone
from .morphometrics.compute import ElementMetricTable, UrbanFabric
from .morphometrics.registry import CODES, ELEMENTS

logger = logging.getLogger(__name__)


@dataclass
class ZoneAssignment:
    """Zone id (or ``None``) for every element, per element class."""

    zones: dict[str, list[str | None]]
    unassigned: dict[str, int] = field(default_factory=dict)


def locate(points: np.ndarray, zones: Sequence[Zone]) -> list[str | None]:
    """Zone containing each point; points on a shared border go to the lowest zone id."""
    order = sorted(range(len(zones)), key=lambda k: zones[k].id)
    geoms = np.array([zones[k].boundary for k in order], dtype=object)
    tree = shapely.STRtree(geoms)
    pts, zs = tree.query(points, predicate="intersects")
    out: list[str | None] = [None] * len(points)
    best = np.full(len(points), len(zones))
    np.minimum.at(best, pts, zs)
    for i, z in enumerate(best):
        if z < len(zones):
            out[i] = zones[order[z]].id
    return out


def element_points(fabric: UrbanFabric) -> dict[str, np.ndarray]:
    """Representative point per element: building centroid for buildings and cells,
    midpoint for segments, location for nodes, centroid for blocks."""
    b_cent = shapely.centroid(np.array([b.footprint for b in fabric.buildings], dtype=object))
    lines = fabric.network.geometries()
    return {
        "building": b_cent,
        "cell": b_cent,
        "segment": shapely.line_interpolate_point(lines, 0.5, normalized=True),
        "node": shapely.points(fabric.network.nodes),
        "block": shapely.centroid(np.array([b.polygon for b in fabric.blocks], dtype=object)),
    }


def assign_to_zones(points: dict[str, np.ndarray], zones: Sequence[Zone]) -> ZoneAssignment:
    out = {}
    unassigned = {}
    for element, pts in points.items():
        ids = locate(pts, zones)
        out[element] = ids
        unassigned[element] = sum(z is None for z in ids)
        if unassigned[element]:
            logger.info("%d %s element(s) outside all zones", unassigned[element], element)
    return ZoneAssignment(out, unassigned)


def aggregate_mean(
    metrics: ElementMetricTable, assignment: ZoneAssignment, zone_ids: Sequence[str]
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Zone means over non-missing element values.

    Returns the means (zones x metric codes, registry order) and the matching
    contributing counts. A mean with no contributing elements is missing.
    """
    zone_ids = sorted(str(z) for z in zone_ids)
    means, counts = {}, {}
    for element in ELEMENTS:
        table = metrics[element]
        labels = pd.Series(assignment.zones[element], index=table.index)
        for code in table.columns:
            values = table[code]
            mask = values.notna() & labels.notna()
            grouped = values[mask].groupby(labels[mask])
            # compensated summation keeps the mean independent of element order
            total = grouped.agg(lambda s: math.fsum(s.to_numpy()))
            n = grouped.size()
            means[code] = (total / n).reindex(zone_ids)
            counts[code] = n.reindex(zone_ids).fillna(0).astype(int)
    mean_df = pd.DataFrame(means, index=pd.Index(zone_ids, name="zone_id"))
    count_df = pd.DataFrame(counts, index=pd.Index(zone_ids, name="zone_id"))
    codes = [c for c in CODES if c in mean_df.columns]
    mean_df, count_df = mean_df[codes], count_df[codes]
    for code in codes:
        empty = mean_df.index[mean_df[code].isna()].tolist()
        if empty:
            logger.warning("%s: no contributing elements in %d zone(s)", code, len(empty))
    return mean_df, count_df


def distance_to_centre(zone: Zone | shapely.Geometry, centre: tuple[float, float]) -> float:
    """Euclidean distance in km from the zone centroid to ``centre`` (meters)."""
    geom = zone.boundary if isinstance(zone, Zone) else zone
    c = geom.centroid
    return math.hypot(c.x - centre[0], c.y - centre[1]) / 1000.0


def element_counts(assignment: ZoneAssignment, zone_ids: Sequence[str]) -> pd.DataFrame:
    zone_ids = sorted(str(z) for z in zone_ids)
    data = {}
    for element in ELEMENTS:
        s = pd.Series([z for z in assignment.zones[element] if z is not None], dtype=object)
        data[f"n_{element}"] = s.value_counts().reindex(zone_ids).fillna(0).astype(int)
    return pd.DataFrame(data, index=pd.Index(zone_ids, name="zone_id"))


def zone_matrix(
    fabric: UrbanFabric,
    metrics: ElementMetricTable,
    zones: Sequence[Zone],
    attributes: pd.DataFrame | None = None,
    centre: tuple[float, float] | None = None,
) -> tuple[pd.DataFrame, ZoneAssignment]:
    """``zone_id``, metric means in registry order, attributes, distance to centre, element counts.

    When ``attributes`` is given, only zones present in it are kept.
    """
    assignment = assign_to_zones(element_points(fabric), zones)
    ids = [z.id for z in zones]
    means, _ = aggregate_mean(metrics, assignment, ids)
    parts = [means]
    if attributes is not None:
        parts.append(attributes)
    if centre is not None:
        dist = pd.Series({z.id: distance_to_centre(z, centre) for z in zones}, name="dist_centre_km")
        parts.append(dist)
    parts.append(element_counts(assignment, ids))
    out = pd.concat(parts, axis=1, join="outer")
    if attributes is not None:
        out = out.loc[out.index.isin(attributes.index)]
    out = out.sort_index()
    out.index.name = "zone_id"
    return out, assignment
