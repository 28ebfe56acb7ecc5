"""Street profiles, element-to-street assignment and segment intensity characters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import shapely

from ..ingest import BuildingFootprint
from .network import NetworkGraph

TICK_SPACING = 3.0
REACH = 50.0


@dataclass(frozen=True)
class StreetProfile:
    width: float
    height: float
    openness: float
    ratio: float
    width_deviation: float
    height_deviation: float

    def as_metrics(self) -> dict[str, float]:
        return {
            "sdsSPW": self.width,
            "sdsSPH": self.height,
            "sdsSPR": self.ratio,
            "sdsSPO": self.openness,
            "sdsSWD": self.width_deviation,
            "sdsSHD": self.height_deviation,
        }


# --------------------------------------------------------------------------
# assignment


def assign_nearest(points: np.ndarray, lines: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Index of the nearest line for each point.

    Lines within ``tol`` (meters) of the minimum distance count as tied and the
    lower index wins, so the assignment survives float noise from rigid motions.
    """
    tree = shapely.STRtree(lines)
    pts_idx, line_idx = tree.query_nearest(points, all_matches=False)
    nearest = np.full(len(points), np.inf)
    nearest[pts_idx] = shapely.distance(points[pts_idx], lines[line_idx])
    pts_idx, line_idx = tree.query(points, predicate="dwithin", distance=nearest + tol)
    out = np.full(len(points), np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(out, pts_idx, line_idx)
    return out


def assign_to_nodes(points: np.ndarray, segment_of: np.ndarray, graph: NetworkGraph) -> np.ndarray:
    """Nearer endpoint of each point's assigned segment (ties to the lower node index)."""
    nodes = graph.network.nodes
    u = graph.u[segment_of]
    v = graph.v[segment_of]
    xy = shapely.get_coordinates(points)
    du = np.hypot(*(xy - nodes[u]).T)
    dv = np.hypot(*(xy - nodes[v]).T)
    pick_v = (dv < du) | ((dv == du) & (v < u))
    return np.where(pick_v, v, u)


# --------------------------------------------------------------------------
# street profile


def _ticks(line: shapely.LineString, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    length = line.length
    n = max(1, int(round(length / spacing)))
    s = (np.arange(n) + 0.5) * length / n
    pts = shapely.get_coordinates(shapely.line_interpolate_point(line, s))
    eps = min(0.25 * length / n, 0.01)
    ahead = shapely.get_coordinates(shapely.line_interpolate_point(line, np.minimum(s + eps, length)))
    behind = shapely.get_coordinates(shapely.line_interpolate_point(line, np.maximum(s - eps, 0.0)))
    tangent = ahead - behind
    tangent /= np.linalg.norm(tangent, axis=1)[:, None]
    normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    return pts, normal


def _profile_hits(
    lines: Sequence[shapely.LineString],
    footprints: np.ndarray,
    heights: np.ndarray,
    tick_spacing: float,
    reach: float,
    tree: shapely.STRtree | None = None,
):
    """Cast ticks for many segments at once.

    Returns per segment a pair of arrays ``(dist, hit_height)`` of shape
    (ticks, 2) for the left and right half-lines; NaN where nothing is hit.
    """
    seg_of, origins, ends = [], [], []
    counts = []
    for k, line in enumerate(lines):
        pts, normal = _ticks(line, tick_spacing)
        counts.append(len(pts))
        for side in (1.0, -1.0):
            origins.append(pts)
            ends.append(pts + side * reach * normal)
            seg_of.append(np.full(len(pts), k))
    # order: for segment k, left ticks then right ticks
    origins = np.vstack(origins)
    ends = np.vstack(ends)
    rays = shapely.linestrings(np.stack([origins, ends], axis=1))
    dist = np.full(len(rays), np.nan)
    hit_h = np.full(len(rays), np.nan)
    if len(footprints):
        tree = tree if tree is not None else shapely.STRtree(footprints)
        r_idx, b_idx = tree.query(rays, predicate="intersects")
        if len(r_idx):
            inter = shapely.intersection(rays[r_idx], footprints[b_idx])
            d = shapely.distance(shapely.points(origins[r_idx]), inter)
            # nearest building per ray; ties to the lower building index
            order = np.lexsort((b_idx, d, r_idx))
            r_sorted = r_idx[order]
            first = np.ones(len(order), dtype=bool)
            first[1:] = r_sorted[1:] != r_sorted[:-1]
            chosen = order[first]
            dist[r_idx[chosen]] = d[chosen]
            hit_h[r_idx[chosen]] = heights[b_idx[chosen]]
    out = []
    start = 0
    for n in counts:
        left = slice(start, start + n)
        right = slice(start + n, start + 2 * n)
        out.append((np.column_stack([dist[left], dist[right]]), np.column_stack([hit_h[left], hit_h[right]])))
        start += 2 * n
    return out


def _summarise(dist: np.ndarray, hit_h: np.ndarray, reach: float) -> StreetProfile:
    hit = ~np.isnan(dist)
    widths = np.where(hit, dist, reach).sum(axis=1)
    openness = 1.0 - hit.sum() / hit.size
    heights = hit_h[hit]
    width = float(widths.mean())
    if len(heights):
        height = float(heights.mean())
        hdev = float(heights.std())
        ratio = height / width if width > 0 else math.nan
    else:
        height = hdev = ratio = math.nan
    return StreetProfile(width, height, float(openness), ratio, float(widths.std()), hdev)


def street_profile(
    segment: shapely.LineString,
    buildings: Sequence[BuildingFootprint],
    tick_spacing: float = TICK_SPACING,
    reach: float = REACH,
) -> StreetProfile:
    """Profile of one street from perpendicular ticks cast to both sides.

    Ticks sit at the centres of ``round(length / tick_spacing)`` equal
    intervals. Each half-line runs ``reach`` meters; a tick's width is the sum
    of both hit distances, ``reach`` standing in for a miss.
    """
    footprints = np.array([b.footprint for b in buildings], dtype=object)
    heights = np.array([b.height for b in buildings], dtype=float)
    (dist, hit_h), = _profile_hits([segment], footprints, heights, tick_spacing, reach)
    return _summarise(dist, hit_h, reach)


def street_profiles(
    lines: Sequence[shapely.LineString],
    buildings: Sequence[BuildingFootprint],
    tick_spacing: float = TICK_SPACING,
    reach: float = REACH,
) -> list[StreetProfile]:
    footprints = np.array([b.footprint for b in buildings], dtype=object)
    heights = np.array([b.height for b in buildings], dtype=float)
    hits = _profile_hits(lines, footprints, heights, tick_spacing, reach)
    return [_summarise(d, h, reach) for d, h in hits]


# --------------------------------------------------------------------------
# segment intensity


def segment_intensity(
    graph: NetworkGraph,
    building_segment: np.ndarray,
    cell_areas: np.ndarray,
    steps: int = 1,
) -> dict[str, np.ndarray]:
    """Buildings per meter, covered area and cells reached over ``steps`` segment steps.

    ``building_segment[i]`` is the segment building ``i`` (and its cell) is assigned to.
    """
    n = graph.n_segments
    counts = np.bincount(building_segment, minlength=n).astype(float)
    area = np.bincount(building_segment, weights=cell_areas, minlength=n)
    reached_cells = np.empty(n)
    reached_area = np.empty(n)
    for s in range(n):
        near = graph.segments_within(s, steps)
        reached_cells[s] = counts[near].sum()
        reached_area[s] = math.fsum(area[near])
    return {
        "sisBpM": counts / graph.length,
        "sdsAre": area,
        "misCel": reached_cells,
        "mdsAre": reached_area,
    }
