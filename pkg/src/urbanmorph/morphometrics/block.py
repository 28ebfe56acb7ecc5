"""Characters of street blocks."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..tessellation import Block, ContiguityGraph
from . import shape

SHAPE_CODES = ("lseCCo", "lseERI", "lseCWA", "lteOri")


def block_metrics(block: Block, n_adjacent: int) -> dict[str, float]:
    """Block characters given the number of adjacent blocks.

    Shape and orientation are missing for unbounded blocks, whose outline is
    an artefact of the clip region rather than of streets.
    """
    geom = block.polygon
    area = geom.area
    perimeter = geom.length
    out = {
        "ldeAre": area,
        "ldePer": perimeter,
        "lseCCo": math.nan,
        "lseERI": math.nan,
        "lseCWA": math.nan,
        "lteOri": math.nan,
        "lteWNB": n_adjacent / perimeter,
        "lieWCe": len(block.cells) / area,
    }
    if block.bounded:
        out["lseCCo"] = shape.circular_compactness(geom)
        out["lseERI"] = shape.equivalent_rectangular_index(geom)
        out["lseCWA"] = shape.compactness_weighted_axis(geom)
        out["lteOri"] = shape.orientation(geom)
    return out


def block_adjacency(blocks: Sequence[Block], membership: np.ndarray, cell_graph: ContiguityGraph) -> list[list[int]]:
    """Blocks are adjacent when any of their cells are queen neighbours."""
    adj: list[set[int]] = [set() for _ in blocks]
    for i, j in cell_graph.pairs():
        a, b = int(membership[i]), int(membership[j])
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    return [sorted(s) for s in adj]


def all_block_metrics(
    blocks: Sequence[Block], membership: np.ndarray, cell_graph: ContiguityGraph
) -> tuple[list[dict[str, float]], list[list[int]]]:
    adj = block_adjacency(blocks, membership, cell_graph)
    return [block_metrics(b, len(adj[k])) for k, b in enumerate(blocks)], adj
