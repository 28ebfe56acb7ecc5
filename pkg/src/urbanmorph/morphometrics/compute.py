"""Assemble all registered characters into per-element tables."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import shapely

from ..errors import NumericalError, ValidationError
from ..ingest import BuildingFootprint, StreetNetwork
from ..tessellation import Block, ContiguityGraph, MorphCell, generate_blocks, generate_cells, queen_contiguity
from . import block as block_mod
from . import neighbourhood, street
from .building import building_metrics, cell_metrics
from .network import (
    NODE_SHORT_STEPS,
    SEGMENT_STEPS,
    NetworkGraph,
    culdesac_length,
    mean_neighbour_distance,
    node_network_metrics,
    square_clustering,
)
from .registry import ELEMENTS, REGISTRY, MetricDescriptor, codes_for

logger = logging.getLogger(__name__)


@dataclass
class UrbanFabric:
    """Buildings, their cells, the street network and the blocks, with contiguity."""

    buildings: list[BuildingFootprint]
    cells: list[MorphCell]
    network: StreetNetwork
    blocks: list[Block]
    membership: np.ndarray
    contiguity: ContiguityGraph

    @classmethod
    def build(
        cls,
        buildings: Sequence[BuildingFootprint],
        network: StreetNetwork,
        clip_buffer: float = 100.0,
        densify: float = 1.0,
        threads: int = 1,
        shrink: float = 0.0,
    ) -> "UrbanFabric":
        buildings = list(buildings)
        cells = generate_cells(buildings, clip_buffer=clip_buffer, densify=densify, shrink=shrink, threads=threads)
        graph = queen_contiguity(cells)
        blocks, membership = generate_blocks(cells, network, buildings, contiguity=graph)
        return cls(buildings, cells, network, blocks, membership, graph)


@dataclass
class ElementMetricTable:
    """One DataFrame per element class, indexed by element id, columns in registry order.

    ``provenance[element]`` maps each element id to the context ids used.
    """

    tables: dict[str, pd.DataFrame]
    provenance: dict[str, dict[str, dict[str, list]]] = field(default_factory=dict)

    def __getitem__(self, element: str) -> pd.DataFrame:
        return self.tables[element]

    @property
    def codes(self) -> list[str]:
        return [c for e in ELEMENTS for c in self.tables[e].columns]

    def column(self, code: str) -> pd.Series:
        for table in self.tables.values():
            if code in table.columns:
                return table[code]
        raise KeyError(code)

    def write_csv(self, directory: str | Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for element in ELEMENTS:
            path = directory / f"{element}.csv"
            self.tables[element].to_csv(path, float_format="%.10g")
            paths.append(path)
        return paths

    @classmethod
    def read_csv(cls, directory: str | Path) -> "ElementMetricTable":
        directory = Path(directory)
        tables = {}
        for element in ELEMENTS:
            df = pd.read_csv(directory / f"{element}.csv", index_col=0)
            df.index = df.index.astype(str)
            tables[element] = df
        return cls(tables)


def _frame(rows: list[dict[str, float]], ids: list, codes: list[str], name: str) -> pd.DataFrame:
    df = pd.DataFrame(rows, index=pd.Index([str(i) for i in ids], name=name))
    return df.reindex(columns=codes).astype(float)


def compute_all(
    fabric: UrbanFabric,
    registry: Sequence[MetricDescriptor] = REGISTRY,
    tick_spacing: float = street.TICK_SPACING,
    reach: float = street.REACH,
) -> ElementMetricTable:
    """Evaluate every registry metric for every element.

    Raises
    ------
    NumericalError
        If some registry metric is missing for every element of its class.
    """
    buildings, cells, network = fabric.buildings, fabric.cells, fabric.network
    if len(cells) != len(buildings) or any(c.building_id != b.id for c, b in zip(cells, buildings)):
        raise ValidationError("cells must be paired with buildings in order")
    graph = NetworkGraph(network)
    lines = network.geometries()
    seg_ids = [s.id for s in network.segments]
    b_ids = [b.id for b in buildings]

    centroids = shapely.centroid(np.array([b.footprint for b in buildings], dtype=object))
    seg_of = street.assign_nearest(centroids, lines)
    node_of = street.assign_to_nodes(centroids, seg_of, graph)
    cell_area = np.array([c.area for c in cells])

    # buildings and cells, small scale
    b_rows, c_rows = [], []
    for i, (b, c) in enumerate(zip(buildings, cells)):
        b_rows.append(building_metrics(b, c.polygon, lines[seg_of[i]]))
        c_rows.append(cell_metrics(c.polygon, b))
    medium = neighbourhood.medium_scale_metrics(buildings, cells, fabric.contiguity)
    large, reach_cells = neighbourhood.large_scale_metrics(buildings, cells, fabric.membership, fabric.contiguity)
    for code, values in {**medium, **large}.items():
        rows = c_rows if code in ("mtcWNe", "mdcAre", "ltcWRB") else b_rows
        for i, v in enumerate(values):
            rows[i][code] = float(v)

    # segments
    profiles = street.street_profiles(lines, buildings, tick_spacing, reach)
    intensity = street.segment_intensity(graph, seg_of, cell_area, steps=1)
    s_rows = []
    seg_prov = {}
    for k, line in enumerate(lines):
        xy = np.asarray(line.coords)
        row = {"sdsLen": line.length, "sssLin": float(np.hypot(*(xy[-1] - xy[0]))) / line.length}
        row.update(profiles[k].as_metrics())
        for code, arr in intensity.items():
            row[code] = float(arr[k])
        near3 = graph.segments_within(k, SEGMENT_STEPS)
        row["ldsMSL"] = float(np.mean(graph.length[near3]))
        row["ldsCel"] = float(np.sum(np.isin(seg_of, near3)))
        s_rows.append(row)
        seg_prov[seg_ids[k]] = {
            "segments_1": [seg_ids[s] for s in graph.segments_within(k, 1)],
            "segments_3": [seg_ids[s] for s in near3],
        }

    # nodes
    node_area = np.bincount(node_of, weights=cell_area, minlength=graph.n_nodes)
    seg_count = np.bincount(seg_of, minlength=graph.n_segments)
    seg_area = np.bincount(seg_of, weights=cell_area, minlength=graph.n_segments)
    sq = square_clustering(graph)
    n_rows = []
    node_prov = {}
    for v in range(graph.n_nodes):
        row = node_network_metrics(graph, v)
        near3 = graph.nodes_within(v, NODE_SHORT_STEPS)
        ego_segs = graph.induced_segments(near3)
        row.update(
            {
                "sddAre": float(node_area[v]),
                "mtdDeg": float(graph.degree[v]),
                "mtdMDi": mean_neighbour_distance(graph, v),
                "ldnCDL": culdesac_length(graph, v),
                "ldnAre": math.fsum(node_area[near3]),
                "ldnCel": float(seg_count[ego_segs].sum()),
                "ldnRea": math.fsum(seg_area[ego_segs]),
                "xcnSCl": float(sq[v]),
            }
        )
        n_rows.append(row)
        node_prov[str(v)] = {"nodes_3": near3, "nodes_5": graph.nodes_within(v, 5)}

    # blocks
    blk_rows, blk_adj = block_mod.all_block_metrics(fabric.blocks, fabric.membership, fabric.contiguity)
    blk_ids = [b.id for b in fabric.blocks]

    wanted = {m.code for m in registry}
    tables = {
        "building": _frame(b_rows, b_ids, codes_for("building"), "building_id"),
        "cell": _frame(c_rows, b_ids, codes_for("cell"), "building_id"),
        "segment": _frame(s_rows, seg_ids, codes_for("segment"), "segment_id"),
        "node": _frame(n_rows, list(range(graph.n_nodes)), codes_for("node"), "node_id"),
        "block": _frame(blk_rows, blk_ids, codes_for("block"), "block_id"),
    }
    for element, df in tables.items():
        tables[element] = df[[c for c in df.columns if c in wanted]]

    # an all-missing column is an error unless the empty-context rule explains
    # every gap: block shape is undefined for unbounded blocks, so a study
    # without street-enclosed blocks legitimately lacks it
    unbounded = np.array([not b.bounded for b in fabric.blocks])
    empty = []
    for element, df in tables.items():
        for c in df.columns:
            if not df[c].isna().all():
                continue
            if element == "block" and c in block_mod.SHAPE_CODES and unbounded.all():
                logger.warning("no street-enclosed blocks; %s is missing for every block", c)
                continue
            empty.append(c)
    if empty:
        raise NumericalError(f"metrics missing for every element: {', '.join(empty)}")

    provenance = {
        "building": {
            b_ids[i]: {"segment": [seg_ids[seg_of[i]]], "node": [int(node_of[i])]} for i in range(len(b_ids))
        },
        "cell": {
            b_ids[i]: {
                "neighbours": [b_ids[j] for j in fabric.contiguity.neighbours[i]],
                "neighbours_3": [b_ids[j] for j in reach_cells[i]],
                "block": [int(fabric.membership[i])],
            }
            for i in range(len(b_ids))
        },
        "segment": seg_prov,
        "node": node_prov,
        "block": {str(blk_ids[k]): {"adjacent": blk_adj[k]} for k in range(len(blk_ids))},
    }
    return ElementMetricTable(tables, provenance)
