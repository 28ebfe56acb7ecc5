"""
Morphological cells, street blocks and queen contiguity.

Cells are built from a point Voronoi diagram of the densified footprint
boundaries: regions are dissolved per building and clipped to the union of
footprint buffers. Blocks are the faces of the polygonized street network,
materialised as the union of the cells whose building centroid falls inside.
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import shapely
from scipy.spatial import Voronoi

from .errors import ValidationError
from .ingest import BuildingFootprint, StreetNetwork

logger = logging.getLogger(__name__)

__all__ = [
    "MorphCell",
    "Block",
    "ContiguityGraph",
    "densify_boundary",
    "clip_region",
    "generate_cells",
    "generate_blocks",
    "queen_contiguity",
]

DEFAULT_CLIP_BUFFER = 100.0
DEFAULT_DENSIFY = 1.0
TOUCH_TOL = 1e-6


@dataclass(frozen=True)
class MorphCell:
    building_id: str
    polygon: shapely.Geometry
    area: float


@dataclass(frozen=True)
class Block:
    id: int
    polygon: shapely.Geometry
    cells: tuple[int, ...]
    bounded: bool


def _check_overlaps(footprints: np.ndarray, ids: Sequence[str]) -> None:
    tree = shapely.STRtree(footprints)
    left, right = tree.query(footprints, predicate="intersects")
    mask = left < right
    left, right = left[mask], right[mask]
    if not len(left):
        return
    inter = shapely.area(shapely.intersection(footprints[left], footprints[right]))
    small = np.minimum(shapely.area(footprints[left]), shapely.area(footprints[right]))
    bad = inter > 1e-9 * small
    if bad.any():
        pairs = [(ids[a], ids[b]) for a, b in zip(left[bad], right[bad])]
        shown = ", ".join(f"{a}/{b}" for a, b in pairs[:10])
        raise ValidationError(
            f"{len(pairs)} overlapping footprint pair(s): {shown}; cells are undefined "
            "(fix the data or tessellate with a shrink distance)"
        )


def densify_boundary(polygon: shapely.Geometry, interval: float = DEFAULT_DENSIFY) -> np.ndarray:
    """Boundary vertices plus evenly spaced points no further than ``interval`` apart.

    Each ring's closing vertex is dropped so every point appears once.
    """
    dense = shapely.segmentize(polygon, interval)
    rings = [dense.exterior, *dense.interiors]
    return np.vstack([np.asarray(r.coords)[:-1, :2] for r in rings])


def clip_region(buildings: Sequence[BuildingFootprint], clip_buffer: float = DEFAULT_CLIP_BUFFER) -> shapely.Geometry:
    """Union of the footprints buffered by ``clip_buffer`` meters."""
    footprints = np.array([b.footprint for b in buildings], dtype=object)
    return shapely.union_all(shapely.buffer(footprints, clip_buffer))


def generate_cells(
    buildings: Sequence[BuildingFootprint],
    clip_buffer: float = DEFAULT_CLIP_BUFFER,
    densify: float = DEFAULT_DENSIFY,
    shrink: float = 0.0,
    threads: int = 1,
) -> list[MorphCell]:
    """Partition the clip region into one cell per building.

    Parameters
    ----------
    buildings : sequence of BuildingFootprint
        Non-overlapping footprints. Shared walls are allowed.
    clip_buffer : float
        Buffer distance in meters defining the region the cells cover.
    densify : float
        Maximum spacing of boundary sample points in meters.
    shrink : float
        Optional inward offset applied to footprints before sampling, which
        separates buildings that share walls.
    threads : int
        Worker threads for the per-building dissolve; output does not depend on it.

    Returns
    -------
    list of MorphCell, in building order.
    """
    if clip_buffer <= 0:
        raise ValidationError("clip buffer must be positive")
    if densify <= 0:
        raise ValidationError("densification interval must be positive")
    if len(buildings) < 2:
        raise ValidationError(f"tessellation needs at least 2 buildings, got {len(buildings)}")

    ids = [b.id for b in buildings]
    footprints = np.array([b.footprint for b in buildings], dtype=object)
    _check_overlaps(footprints, ids)

    sample = footprints
    if shrink > 0:
        shrunk = shapely.buffer(footprints, -shrink, join_style="mitre")
        ok = ~shapely.is_empty(shrunk) & (shapely.get_type_id(shrunk) == 3)
        sample = np.where(ok, shrunk, footprints)

    chunks = [densify_boundary(p, densify) for p in sample]
    labels = np.repeat(np.arange(len(chunks)), [len(c) for c in chunks])
    points = np.vstack(chunks)

    # a point on a shared wall belongs to two buildings and would be a
    # duplicate Voronoi site; such points are dropped
    _, inverse, counts = np.unique(points, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    keep = counts[inverse] == 1
    owners = {}
    for lab, key in zip(labels[~keep], inverse[~keep]):
        owners.setdefault(key, set()).add(lab)
    if any(len(v) == 1 for v in owners.values()):
        # duplicates within a single building (degenerate rings): keep one copy
        first = np.zeros(len(points), dtype=bool)
        seen = set()
        for i in np.flatnonzero(~keep):
            key = inverse[i]
            if len(owners[key]) == 1 and key not in seen:
                first[i] = True
                seen.add(key)
        keep |= first
    points, labels = points[keep], labels[keep]
    missing = set(range(len(buildings))) - set(labels.tolist())
    if missing:
        raise ValidationError(
            f"building(s) {[ids[i] for i in sorted(missing)][:5]} have no boundary points "
            "after removing shared-wall points; tessellate with a shrink distance"
        )

    region = shapely.union_all(shapely.buffer(footprints, clip_buffer))
    xmin, ymin, xmax, ymax = region.bounds
    span = max(xmax - xmin, ymax - ymin)
    cx, cy = (xmin + xmax) / 2, (ymin + ymax) / 2
    far = 10 * span + 1000.0
    frame = np.array([[cx - far, cy - far], [cx + far, cy - far], [cx + far, cy + far], [cx - far, cy + far]])
    vor = Voronoi(np.vstack([points, frame]))

    regions = [vor.regions[vor.point_region[i]] for i in range(len(points))]
    if any(-1 in r or len(r) < 3 for r in regions):
        raise ValidationError("unbounded Voronoi region for a footprint sample point")
    ring_index = np.repeat(np.arange(len(regions)), [len(r) + 1 for r in regions])
    coords = np.vstack([vor.vertices[r + [r[0]]] for r in regions])
    polys = shapely.polygons(shapely.linearrings(coords, indices=ring_index))

    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(len(buildings) + 1))

    def dissolve(b: int) -> shapely.Geometry:
        parts = polys[order[bounds[b]:bounds[b + 1]]]
        merged = shapely.coverage_union_all(parts)
        if not merged.is_valid:
            merged = shapely.union_all(parts)
        return shapely.intersection(merged, region)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            merged = list(pool.map(dissolve, range(len(buildings))))
    else:
        merged = [dissolve(b) for b in range(len(buildings))]
    return [MorphCell(ids[i], g, float(g.area)) for i, g in enumerate(merged)]


# --------------------------------------------------------------------------
# contiguity


class ContiguityGraph:
    """Symmetric, irreflexive adjacency over a set of polygons.

    ``neighbours[i]`` is a sorted integer array of order-1 neighbours.
    """

    def __init__(self, neighbours: Sequence[Sequence[int]]):
        self.neighbours = [np.asarray(sorted(set(int(j) for j in nb)), dtype=int) for nb in neighbours]

    def __len__(self) -> int:
        return len(self.neighbours)

    def cardinalities(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbours])

    def pairs(self) -> list[tuple[int, int]]:
        return [(i, int(j)) for i, nb in enumerate(self.neighbours) for j in nb if i < j]

    def within(self, i: int, k: int) -> list[int]:
        """Nodes reachable from ``i`` in at most ``k`` steps, excluding ``i``."""
        seen = {i: 0}
        queue = deque([i])
        while queue:
            cur = queue.popleft()
            if seen[cur] == k:
                continue
            for j in self.neighbours[cur]:
                j = int(j)
                if j not in seen:
                    seen[j] = seen[cur] + 1
                    queue.append(j)
        del seen[i]
        return sorted(seen)

    def higher_order(self, k: int) -> "ContiguityGraph":
        if k < 1:
            raise ValueError("order must be >= 1")
        if k == 1:
            return self
        return ContiguityGraph([self.within(i, k) for i in range(len(self))])

    def components(self, subset: Sequence[int] | None = None) -> list[list[int]]:
        """Connected components, optionally of the subgraph induced by ``subset``."""
        nodes = set(range(len(self))) if subset is None else set(subset)
        out = []
        for start in sorted(nodes):
            if start not in nodes:
                continue
            comp = []
            queue = deque([start])
            nodes.discard(start)
            while queue:
                cur = queue.popleft()
                comp.append(cur)
                for j in self.neighbours[cur]:
                    j = int(j)
                    if j in nodes:
                        nodes.discard(j)
                        queue.append(j)
            out.append(sorted(comp))
        return out


def queen_contiguity(polygons: Sequence[shapely.Geometry] | Sequence[MorphCell], order: int = 1,
                     tol: float = TOUCH_TOL) -> ContiguityGraph:
    """Queen adjacency (any shared boundary point, within ``tol``) and its k-step closure."""
    geoms = np.array([p.polygon if isinstance(p, MorphCell) else p for p in polygons], dtype=object)
    tree = shapely.STRtree(geoms)
    left, right = tree.query(geoms, predicate="dwithin", distance=tol)
    nbrs: list[list[int]] = [[] for _ in range(len(geoms))]
    for a, b in zip(left, right):
        if a != b:
            nbrs[a].append(int(b))
            nbrs[b].append(int(a))
    graph = ContiguityGraph(nbrs)
    return graph.higher_order(order)


# --------------------------------------------------------------------------
# blocks


def street_faces(network: StreetNetwork | None) -> list[shapely.Geometry]:
    """Bounded faces of the planarized street network, in a stable order."""
    if network is None or network.n_segments == 0:
        return []
    noded = shapely.union_all(network.geometries())
    faces = list(shapely.get_parts(shapely.polygonize(shapely.get_parts(noded))))
    faces = [f for f in faces if f.area > 0]
    keys = []
    for f in faces:
        p = f.representative_point()
        keys.append((round(p.x, 6), round(p.y, 6), round(f.area, 6)))
    return [f for _, f in sorted(zip(keys, faces), key=lambda t: t[0])]


def generate_blocks(
    cells: Sequence[MorphCell],
    network: StreetNetwork | None,
    buildings: Sequence[BuildingFootprint],
    contiguity: ContiguityGraph | None = None,
) -> tuple[list[Block], np.ndarray]:
    """Group cells into street blocks.

    Each cell goes to the bounded street face containing its building's
    centroid. Cells in no bounded face form one unbounded block per queen
    contiguity cluster.

    Returns
    -------
    blocks : list of Block
    membership : ndarray of int
        Block id for every cell.
    """
    faces = street_faces(network)
    centroids = shapely.centroid(np.array([b.footprint for b in buildings], dtype=object))
    face_of = np.full(len(cells), -1)
    if faces:
        tree = shapely.STRtree(np.array(faces, dtype=object))
        pts, fids = tree.query(centroids, predicate="within")
        for p, f in sorted(zip(pts, fids)):
            if face_of[p] == -1:
                face_of[p] = f

    groups: list[tuple[list[int], bool]] = []
    for f in range(len(faces)):
        members = np.flatnonzero(face_of == f).tolist()
        if members:
            groups.append((members, True))
    loose = np.flatnonzero(face_of == -1).tolist()
    if loose:
        graph = contiguity if contiguity is not None else queen_contiguity(cells)
        for comp in graph.components(loose):
            groups.append((comp, False))

    blocks = []
    membership = np.full(len(cells), -1)
    polys = np.array([c.polygon for c in cells], dtype=object)
    for bid, (members, bounded) in enumerate(groups):
        geom = shapely.coverage_union_all(polys[members])
        if not geom.is_valid:
            geom = shapely.union_all(polys[members])
        blocks.append(Block(bid, geom, tuple(members), bounded))
        membership[members] = bid
    return blocks, membership
