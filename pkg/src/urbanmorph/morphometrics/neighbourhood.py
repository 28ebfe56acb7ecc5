"""Medium- and large-scale characters of buildings and cells.

Cells and buildings are paired by position: cell ``i`` belongs to building ``i``.
Neighbourhoods come from queen contiguity of cells.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import shapely

from ..ingest import BuildingFootprint
from ..tessellation import TOUCH_TOL, ContiguityGraph, MorphCell, queen_contiguity
from . import shape

LARGE_ORDER = 3


def shared_walls(footprints: np.ndarray, tol: float = TOUCH_TOL) -> tuple[np.ndarray, ContiguityGraph]:
    """Shared boundary length of each footprint and the touching-building graph."""
    tree = shapely.STRtree(footprints)
    left, right = tree.query(footprints, predicate="dwithin", distance=tol)
    mask = left < right
    left, right = left[mask], right[mask]
    shared = np.zeros(len(footprints))
    nbrs: list[list[int]] = [[] for _ in range(len(footprints))]
    if len(left):
        common = shapely.length(
            shapely.intersection(shapely.boundary(footprints[left]), shapely.boundary(footprints[right]))
        )
        np.add.at(shared, left, common)
        np.add.at(shared, right, common)
        for a, b, c in zip(left, right, common):
            if c > 0:
                nbrs[a].append(int(b))
                nbrs[b].append(int(a))
    return shared, ContiguityGraph(nbrs)


def perimeter_wall_length(footprints: np.ndarray, touching: ContiguityGraph) -> np.ndarray:
    """Exterior length of the joined structure each building belongs to."""
    out = np.empty(len(footprints))
    for comp in touching.components():
        merged = shapely.union_all(footprints[comp]) if len(comp) > 1 else footprints[comp[0]]
        parts = shapely.get_parts(merged)
        out[comp] = math.fsum(shapely.length(shapely.get_exterior_ring(parts)))
    return out


def medium_scale_metrics(
    buildings: Sequence[BuildingFootprint],
    cells: Sequence[MorphCell],
    contiguity: ContiguityGraph | None = None,
) -> dict[str, np.ndarray]:
    """Shared walls, neighbour alignment and distance, weighted neighbours, covered area.

    Returns arrays keyed by metric code, one value per building/cell.
    Neighbour-based values are NaN for a cell without queen neighbours.
    """
    footprints = np.array([b.footprint for b in buildings], dtype=object)
    cell_polys = np.array([c.polygon for c in cells], dtype=object)
    graph = contiguity if contiguity is not None else queen_contiguity(cell_polys)
    n = len(buildings)

    shared, _ = shared_walls(footprints)
    perim = shapely.length(footprints)
    ori = np.array([shape.orientation(g) for g in footprints])
    cell_area = shapely.area(cell_polys)
    cell_perim = shapely.length(cell_polys)

    ali = np.full(n, np.nan)
    ndi = np.full(n, np.nan)
    covered = np.empty(n)
    for i in range(n):
        nb = graph.neighbours[i]
        covered[i] = math.fsum(np.append(cell_area[nb], cell_area[i]))
        if len(nb):
            ali[i] = float(np.mean(np.abs(ori[i] - ori[nb])))
            ndi[i] = float(np.mean(shapely.distance(footprints[i], footprints[nb])))
    return {
        "mtbSWR": shared / perim,
        "mtbAli": ali,
        "mtbNDi": ndi,
        "mtcWNe": graph.cardinalities() / cell_perim,
        "mdcAre": covered,
    }


def large_scale_metrics(
    buildings: Sequence[BuildingFootprint],
    cells: Sequence[MorphCell],
    block_of: np.ndarray,
    contiguity: ContiguityGraph | None = None,
    order: int = LARGE_ORDER,
) -> tuple[dict[str, np.ndarray], list[list[int]]]:
    """Perimeter wall length, inter-building distance and weighted reached blocks.

    Returns the metric arrays and, per cell, the k-order neighbourhood used
    (excluding the cell itself) for provenance.
    """
    footprints = np.array([b.footprint for b in buildings], dtype=object)
    cell_polys = np.array([c.polygon for c in cells], dtype=object)
    graph = contiguity if contiguity is not None else queen_contiguity(cell_polys)
    n = len(buildings)
    cell_area = shapely.area(cell_polys)

    _, touching = shared_walls(footprints)
    pwl = perimeter_wall_length(footprints, touching)

    # footprint distance for every order-1 cell pair, computed once
    pairs = graph.pairs()
    pair_dist: dict[tuple[int, int], float] = {}
    if pairs:
        a, b = np.array(pairs).T
        for i, j, d in zip(a, b, shapely.distance(footprints[a], footprints[b])):
            pair_dist[(int(i), int(j))] = float(d)

    ibd = np.full(n, np.nan)
    wrb = np.empty(n)
    reach: list[list[int]] = []
    for i in range(n):
        near = graph.within(i, order)
        reach.append(near)
        members = sorted(near + [i])
        inside = set(members)
        dists = [pair_dist[(p, int(q))] for p in members for q in graph.neighbours[p] if p < q and int(q) in inside]
        if dists:
            ibd[i] = math.fsum(dists) / len(dists)
        wrb[i] = len(set(block_of[members].tolist())) / math.fsum(cell_area[members])
    return {"ldbPWL": pwl, "ltbIBD": ibd, "ltcWRB": wrb}, reach
