"""Catalogue of the 69 morphometric characters.

The registry is the single source of truth for metric codes, the element table
each metric lives in, its spatial scale and context, its conceptual category
and the formula used to compute it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

ELEMENTS = ("building", "cell", "segment", "node", "block")
SCALES = ("S", "M", "L")
CATEGORIES = ("dimension", "distribution", "shape", "intensity", "connectivity", "diversity")


@dataclass(frozen=True)
class MetricDescriptor:
    code: str
    name: str
    element: str
    scale: str
    context: str
    category: str
    formula: str


def _m(code, name, element, scale, context, category, formula):
    return MetricDescriptor(code, name, element, scale, context, category, formula)


REGISTRY: tuple[MetricDescriptor, ...] = (
    # buildings, small scale
    _m("sdbAre", "building area", "building", "S", "building", "dimension", "A = footprint area"),
    _m("sdbHei", "building height", "building", "S", "building", "dimension", "h = building height"),
    _m("sdbVol", "building volume", "building", "S", "building", "dimension", "V = A * h"),
    _m("sdbPer", "building perimeter", "building", "S", "building", "dimension", "P = length of all footprint rings"),
    _m("sdbCoA", "courtyard area", "building", "S", "building", "dimension", "sum of interior ring areas"),
    _m("ssbFoF", "form factor", "building", "S", "building", "shape", "(P * h + A) / V**(2/3)"),
    _m("ssbVFR", "volume to facade ratio", "building", "S", "building", "shape", "V / (P * h)"),
    _m("ssbCCo", "circular compactness", "building", "S", "building", "shape", "A / area of minimum bounding circle"),
    _m("ssbCor", "corners", "building", "S", "building", "shape",
       "count of exterior vertices whose angle deviates from straight by more than 10 degrees"),
    _m("ssbSqu", "squareness", "building", "S", "building", "shape", "mean |90 - corner angle| over corners (degrees)"),
    _m("ssbERI", "equivalent rectangular index", "building", "S", "building", "shape",
       "sqrt(A / A_mrr) * P_mrr / P, mrr = minimum rotated rectangle"),
    _m("ssbElo", "elongation", "building", "S", "building", "shape", "short side / long side of minimum rotated rectangle"),
    _m("ssbCCD", "centroid-corner distance deviation", "building", "S", "building", "shape",
       "population std of centroid-to-corner distances"),
    _m("ssbCCM", "centroid-corner mean distance", "building", "S", "building", "shape", "mean centroid-to-corner distance"),
    _m("stbOri", "building cardinal orientation", "building", "S", "building", "distribution",
       "deviation of minimum rotated rectangle azimuth from nearest cardinal axis, in [0, 45] degrees"),
    _m("stbSAl", "street alignment", "building", "S", "building", "distribution",
       "|stbOri - orientation of the assigned street segment|"),
    _m("stbCeA", "cell alignment", "building", "S", "building", "distribution", "|stbOri - stcOri|"),
    # cells, small scale
    _m("sdcLAL", "longest axis length", "cell", "S", "tessellation cell", "dimension", "diameter of minimum bounding circle"),
    _m("sdcAre", "cell area", "cell", "S", "tessellation cell", "dimension", "cell area"),
    _m("sscCCo", "cell circular compactness", "cell", "S", "tessellation cell", "shape", "A / area of minimum bounding circle"),
    _m("sscERI", "cell equivalent rectangular index", "cell", "S", "tessellation cell", "shape", "sqrt(A / A_mrr) * P_mrr / P"),
    _m("stcOri", "cell cardinal orientation", "cell", "S", "tessellation cell", "distribution",
       "deviation of minimum rotated rectangle azimuth from nearest cardinal axis"),
    _m("sicCAR", "coverage area ratio", "cell", "S", "tessellation cell", "intensity", "footprint area / cell area"),
    _m("sicFAR", "floor area ratio", "cell", "S", "tessellation cell", "intensity",
       "footprint area * max(1, round(h / 3)) / cell area"),
    # street segments, small scale
    _m("sdsLen", "street length", "segment", "S", "street segment", "dimension", "centreline length"),
    _m("sdsSPW", "street profile width", "segment", "S", "street segment", "dimension",
       "mean over ticks of left + right distance to nearest building (reach when no hit)"),
    _m("sdsSPH", "street profile height", "segment", "S", "street segment", "dimension",
       "mean height of buildings hit by tick half-lines"),
    _m("sdsSPR", "street profile height to width ratio", "segment", "S", "street segment", "shape", "sdsSPH / sdsSPW"),
    _m("sdsSPO", "street profile openness", "segment", "S", "street segment", "distribution",
       "share of tick half-lines without a building hit"),
    _m("sdsSWD", "street profile width deviation", "segment", "S", "street segment", "diversity",
       "population std of tick widths"),
    _m("sdsSHD", "street profile height deviation", "segment", "S", "street segment", "diversity",
       "population std of hit building heights"),
    _m("sssLin", "linearity", "segment", "S", "street segment", "shape", "endpoint distance / length"),
    _m("sdsAre", "area covered by segment", "segment", "S", "street segment", "dimension",
       "sum of areas of cells assigned to the segment"),
    _m("sisBpM", "buildings per meter", "segment", "S", "street segment", "intensity",
       "buildings assigned to the segment / length"),
    # street nodes, small scale
    _m("sddAre", "area covered by node", "node", "S", "street node", "dimension",
       "sum of areas of cells assigned to the node"),
    # medium scale
    _m("mtbSWR", "shared walls ratio", "building", "M", "adjacent buildings", "distribution",
       "length of boundary shared with touching buildings / perimeter"),
    _m("mtbAli", "alignment of neighbouring buildings", "building", "M", "neighbouring cells (queen)", "distribution",
       "mean |stbOri_i - stbOri_j| over queen-neighbour cells' buildings"),
    _m("mtbNDi", "mean distance to neighbouring buildings", "building", "M", "neighbouring cells (queen)",
       "distribution", "mean footprint distance to queen-neighbour cells' buildings"),
    _m("mtcWNe", "cell weighted neighbours", "cell", "M", "neighbouring cells (queen)", "distribution",
       "queen neighbour count / cell perimeter"),
    _m("mdcAre", "area covered by neighbouring cells", "cell", "M", "neighbouring cells (queen)", "dimension",
       "sum of areas of the cell and its queen neighbours"),
    _m("misCel", "reached cells by neighbouring segments", "segment", "M", "neighbouring segments", "intensity",
       "cells assigned to segments within 1 topological step (inclusive)"),
    _m("mdsAre", "reached area by neighbouring segments", "segment", "M", "neighbouring segments", "dimension",
       "area of cells assigned to segments within 1 topological step (inclusive)"),
    _m("mtdDeg", "node degree", "node", "M", "neighbouring nodes", "distribution", "number of incident segment ends"),
    _m("mtdMDi", "mean distance to neighbouring nodes", "node", "M", "neighbouring nodes", "dimension",
       "mean length of incident segments"),
    # large scale, buildings and cells
    _m("ldbPWL", "perimeter wall length", "building", "L", "joined buildings", "dimension",
       "exterior length of the union of the touching-building group"),
    _m("ltbIBD", "mean inter-building distance", "building", "L", "cell queen neighbours 3", "distribution",
       "mean footprint distance over adjacent cell pairs within 3 queen steps"),
    _m("ltcWRB", "weighted reached blocks", "cell", "L", "cell queen neighbours 3", "intensity",
       "distinct blocks within 3 queen steps / their cells' area"),
    # blocks
    _m("ldeAre", "block area", "block", "L", "block", "dimension", "block area"),
    _m("ldePer", "block perimeter", "block", "L", "block", "dimension", "block boundary length"),
    _m("lseCCo", "block circular compactness", "block", "L", "block", "shape", "A / area of minimum bounding circle"),
    _m("lseERI", "block equivalent rectangular index", "block", "L", "block", "shape", "sqrt(A / A_mrr) * P_mrr / P"),
    _m("lseCWA", "block compactness-weighted axis", "block", "L", "block", "shape",
       "longest axis * (4 / pi - 16 A / P**2)"),
    _m("lteOri", "block cardinal orientation", "block", "L", "block", "distribution",
       "deviation of minimum rotated rectangle azimuth from nearest cardinal axis"),
    _m("lteWNB", "block weighted neighbours", "block", "L", "block", "distribution", "adjacent blocks / perimeter"),
    _m("lieWCe", "block weighted cells", "block", "L", "block", "intensity", "member cells / block area"),
    # large scale, street network
    _m("lcdMes", "local meshedness", "node", "L", "nodes 5 steps", "connectivity", "(e - v + 1) / (2v - 5), v >= 3"),
    _m("ldsMSL", "mean segment length", "segment", "L", "segment 3 steps", "dimension",
       "mean length of segments within 3 steps (inclusive)"),
    _m("ldnCDL", "cul-de-sac length", "node", "L", "nodes 3 steps", "dimension",
       "total length of ego-network segments with a degree-1 end"),
    _m("ldnAre", "area covered by nodes", "node", "L", "nodes 3 steps", "dimension",
       "area of cells assigned to nodes within 3 steps"),
    _m("ldsCel", "reached cells by segments", "segment", "L", "segment 3 steps", "dimension",
       "cells assigned to segments within 3 steps (inclusive)"),
    _m("ldnCel", "reached cells by nodes", "node", "L", "nodes 3 steps", "dimension",
       "cells assigned to segments of the 3-step ego network"),
    _m("ldnRea", "reached area by nodes", "node", "L", "nodes 3 steps", "dimension",
       "area of cells assigned to segments of the 3-step ego network"),
    _m("linNDe", "node density", "node", "L", "nodes 5 steps", "intensity", "ego nodes / ego segment length"),
    _m("linWND", "weighted node density", "node", "L", "nodes 5 steps", "intensity",
       "sum(degree - 1) over ego nodes / ego segment length"),
    _m("linPDE", "proportion of cul-de-sacs", "node", "L", "nodes 5 steps", "connectivity", "share of degree-1 ego nodes"),
    _m("linP3W", "proportion of 3-way intersections", "node", "L", "nodes 5 steps", "connectivity",
       "share of degree-3 ego nodes"),
    _m("linP4W", "proportion of 4-way intersections", "node", "L", "nodes 5 steps", "connectivity",
       "share of degree-4 ego nodes"),
    _m("lcnClo", "local closeness centrality", "node", "L", "nodes 5 steps", "connectivity",
       "r / sum of shortest-path lengths to the r other ego nodes"),
    _m("xcnSCl", "square clustering", "node", "L", "nodes within network", "connectivity",
       "square clustering coefficient on the full network"),
)

BY_CODE = {m.code: m for m in REGISTRY}
CODES = tuple(m.code for m in REGISTRY)


def codes_for(element: str) -> list[str]:
    return [m.code for m in REGISTRY if m.element == element]


def codes_in_category(category: str) -> list[str]:
    return [m.code for m in REGISTRY if m.category == category]


def write_manifest(path: str | Path) -> None:
    """Write the registry as JSON, one object per metric, in registry order."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([asdict(m) for m in REGISTRY], fh, indent=2)
        fh.write("\n")
