"""Small-scale characters of single buildings and their cells."""

from __future__ import annotations

import math

import shapely

from ..ingest import BuildingFootprint
from . import shape

STOREY_HEIGHT = 3.0


def floor_count(height: float, storey: float = STOREY_HEIGHT) -> int:
    """Number of floors, ``max(1, round(height / storey))`` with halves rounded up."""
    return max(1, int(math.floor(height / storey + 0.5)))


def building_metrics(
    building: BuildingFootprint,
    cell: shapely.Geometry | None = None,
    nearest_segment: shapely.LineString | None = None,
) -> dict[str, float]:
    """Building-level characters.

    Street and cell alignment are missing (NaN) when no segment or cell is given.
    """
    geom = building.footprint
    area = geom.area
    height = building.height
    perimeter = geom.length
    volume = area * height
    ori = shape.orientation(geom)
    ccm, ccd = shape.centroid_corner(geom)
    out = {
        "sdbAre": area,
        "sdbHei": height,
        "sdbVol": volume,
        "sdbPer": perimeter,
        "sdbCoA": shape.courtyard_area(geom),
        "ssbFoF": (perimeter * height + area) / volume ** (2.0 / 3.0),
        "ssbVFR": volume / (perimeter * height),
        "ssbCCo": shape.circular_compactness(geom),
        "ssbCor": float(shape.corners(geom)),
        "ssbSqu": shape.squareness(geom),
        "ssbERI": shape.equivalent_rectangular_index(geom),
        "ssbElo": shape.elongation(geom),
        "ssbCCD": ccd,
        "ssbCCM": ccm,
        "stbOri": ori,
        "stbSAl": math.nan,
        "stbCeA": math.nan,
    }
    if nearest_segment is not None:
        out["stbSAl"] = abs(ori - shape.line_orientation(nearest_segment))
    if cell is not None:
        out["stbCeA"] = abs(ori - shape.orientation(cell))
    return out


def cell_metrics(cell: shapely.Geometry, building: BuildingFootprint) -> dict[str, float]:
    """Cell-level characters; coverage and floor area ratios relate the cell to its building."""
    area = cell.area
    footprint = building.footprint.area
    return {
        "sdcLAL": shape.longest_axis(cell),
        "sdcAre": area,
        "sscCCo": shape.circular_compactness(cell),
        "sscERI": shape.equivalent_rectangular_index(cell),
        "stcOri": shape.orientation(cell),
        "sicCAR": footprint / area,
        "sicFAR": footprint * floor_count(building.height) / area,
    }
