"""
Loading and validation of buildings, streets, zones and zone attribute tables.

Geometry comes in as GeoJSON FeatureCollections whose coordinates are projected
meters; attributes come in as CSV keyed by zone id.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
import shapely
from scipy.spatial import cKDTree
from shapely.geometry import LineString, MultiPolygon, Polygon, mapping, shape
from shapely.validation import explain_validity

from .errors import CRSError, ValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "BuildingFootprint",
    "StreetSegment",
    "StreetNetwork",
    "Zone",
    "LoadReport",
    "check_projected",
    "load_buildings",
    "buildings_from_features",
    "write_buildings",
    "load_streets",
    "network_from_lines",
    "write_streets",
    "load_zones",
    "zones_from_features",
    "write_zones",
    "load_attribute_table",
    "join_attributes",
    "CoverageReport",
    "load_case_series",
    "sum_case_windows",
    "case_rates",
]

HEIGHT_POLICIES = ("reject", "median", "fixed")


@dataclass(frozen=True)
class BuildingFootprint:
    id: str
    footprint: Polygon
    height: float

    @property
    def area(self) -> float:
        return self.footprint.area


@dataclass(frozen=True)
class StreetSegment:
    id: str
    centerline: LineString
    u: int
    v: int

    @property
    def length(self) -> float:
        return self.centerline.length


@dataclass(frozen=True)
class Zone:
    id: str
    boundary: Polygon | MultiPolygon
    population: float | None = None


@dataclass
class LoadReport:
    """Per-feature problems found while loading a layer."""

    rejected: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    imputed: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)


# --------------------------------------------------------------------------
# coordinate plausibility


def check_projected(coords: np.ndarray, what: str = "layer") -> None:
    """Reject coordinates that are not plausibly projected meters.

    Raises
    ------
    CRSError
        If every coordinate falls in the lon/lat box [-180, 180] x [-90, 90], or
        any coordinate magnitude reaches 1e7.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if coords.size == 0:
        return
    if not np.all(np.isfinite(coords)):
        raise ValidationError(f"{what}: non-finite coordinates")
    if np.any(np.abs(coords) >= 1e7):
        raise CRSError(
            f"{what}: coordinates of magnitude >= 1e7; a projected CRS in meters is required"
        )
    lonlat = (np.abs(coords[:, 0]) <= 180) & (np.abs(coords[:, 1]) <= 90)
    if np.all(lonlat):
        extent = np.ptp(coords, axis=0)
        # small metric fixtures near the origin also sit inside the degree box;
        # degrees are assumed only for a sub-5-unit extent with fractional values
        if np.any(coords != np.round(coords)) and np.all(extent < 5):
            raise CRSError(
                f"{what}: coordinates look like longitude/latitude degrees; "
                "reproject to a projected CRS in meters (e.g. a national grid) first"
            )


def _read_features(path: str | Path) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read GeoJSON {path}: {exc}") from exc
    if data.get("type") != "FeatureCollection":
        raise ValidationError(f"{path}: expected a GeoJSON FeatureCollection")
    return list(data.get("features", []))


def _feature_id(feature: dict, id_field: str, index: int) -> str:
    props = feature.get("properties") or {}
    if id_field in props and props[id_field] is not None:
        return str(props[id_field])
    if feature.get("id") is not None:
        return str(feature["id"])
    return str(index)


def _all_coords(features: Iterable[dict]) -> np.ndarray:
    chunks = []
    for f in features:
        geom = f.get("geometry")
        if geom is None:
            continue
        try:
            chunks.append(shapely.get_coordinates(shape(geom)))
        except Exception:  # malformed geometry is reported per feature later
            continue
    if not chunks:
        return np.empty((0, 2))
    return np.vstack(chunks)


# --------------------------------------------------------------------------
# buildings


def _read_heights(path: str | Path, id_column: str = "id", height_column: str = "height") -> dict[str, float]:
    try:
        table = pd.read_csv(path, dtype={id_column: str})
    except (OSError, pd.errors.ParserError) as exc:
        raise ValidationError(f"cannot read height table {path}: {exc}") from exc
    missing = {id_column, height_column} - set(table.columns)
    if missing:
        raise ValidationError(f"height table {path} lacks columns {sorted(missing)}")
    dup = table[id_column][table[id_column].duplicated()]
    if len(dup):
        raise ValidationError(f"height table {path}: duplicate id {dup.iloc[0]!r}")
    values = pd.to_numeric(table[height_column], errors="coerce")
    return dict(zip(table[id_column], values.astype(float)))


def _valid_height(value) -> bool:
    try:
        value = float(value)
    except (TypeError, ValueError):
        return False
    return math.isfinite(value) and value > 0


def buildings_from_features(
    features: Sequence[dict],
    heights: Mapping[str, float] | None = None,
    height_policy: str = "median",
    fixed_height: float | None = None,
    id_field: str = "id",
    height_field: str = "height",
) -> tuple[list[BuildingFootprint], LoadReport]:
    """Validate building features and resolve their heights.

    Heights come from ``heights`` when given, else from the ``height_field``
    property. Missing or non-positive heights are handled by ``height_policy``:
    ``"reject"`` raises, ``"median"`` imputes the median of the valid heights in
    the study, ``"fixed"`` uses ``fixed_height``.
    """
    if height_policy not in HEIGHT_POLICIES:
        raise ValidationError(f"unknown height policy {height_policy!r}; use one of {HEIGHT_POLICIES}")
    if height_policy == "fixed" and not _valid_height(fixed_height):
        raise ValidationError("height policy 'fixed' needs a positive fixed_height")

    check_projected(_all_coords(features), "buildings")
    report = LoadReport()
    parts: list[tuple[str, Polygon, float | None]] = []
    seen: set[str] = set()
    for i, feature in enumerate(features):
        fid = _feature_id(feature, id_field, i)
        if fid in seen:
            report.rejected[fid] = "duplicate id"
            continue
        seen.add(fid)
        raw = feature.get("geometry")
        if raw is None:
            report.rejected[fid] = "missing geometry"
            continue
        try:
            geom = shape(raw)
        except Exception as exc:
            report.rejected[fid] = f"unreadable geometry: {exc}"
            continue
        if geom.geom_type not in ("Polygon", "MultiPolygon"):
            report.rejected[fid] = f"geometry type {geom.geom_type} is not a polygon"
            continue
        if geom.has_z:
            geom = shapely.force_2d(geom)
        if not geom.is_valid:
            report.rejected[fid] = f"invalid polygon: {explain_validity(geom)}"
            continue
        if geom.area <= 0:
            report.rejected[fid] = "zero area"
            continue
        if heights is not None:
            h = heights.get(fid)
        else:
            h = (feature.get("properties") or {}).get(height_field)
        h = float(h) if _valid_height(h) else None
        if geom.geom_type == "MultiPolygon":
            for j, part in enumerate(geom.geoms):
                parts.append((f"{fid}.{j}", part, h))
        else:
            parts.append((fid, geom, h))

    missing = [pid for pid, _, h in parts if h is None]
    if missing:
        if height_policy == "reject":
            raise ValidationError(
                f"{len(missing)} building(s) without a valid height under policy 'reject', e.g. {missing[:5]}"
            )
        if height_policy == "median":
            known = [h for _, _, h in parts if h is not None]
            if not known:
                raise ValidationError("no valid building heights to impute a study median from")
            fill = float(np.median(known))
        else:
            fill = float(fixed_height)
        report.imputed.extend(missing)
        report.warn(f"imputed height {fill:g} m for {len(missing)} building(s)")
    else:
        fill = None

    buildings = [
        BuildingFootprint(pid, poly, h if h is not None else fill) for pid, poly, h in parts
    ]
    for fid, reason in report.rejected.items():
        report.warn(f"building {fid} rejected: {reason}")
    return buildings, report


def load_buildings(
    path: str | Path,
    height_path: str | Path | None = None,
    height_policy: str = "median",
    fixed_height: float | None = None,
    id_field: str = "id",
    height_field: str = "height",
) -> tuple[list[BuildingFootprint], LoadReport]:
    """Read building footprints from GeoJSON, heights from a property or a CSV table.

    Returns the valid footprints (multipolygons split into ``<id>.<k>`` parts)
    and a report of rejected features and imputed heights.
    """
    features = _read_features(path)
    heights = _read_heights(height_path) if height_path is not None else None
    return buildings_from_features(
        features, heights, height_policy, fixed_height, id_field=id_field, height_field=height_field
    )


def _write_collection(path: str | Path, features: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh)
        fh.write("\n")


def write_buildings(buildings: Sequence[BuildingFootprint], path: str | Path) -> None:
    features = [
        {
            "type": "Feature",
            "properties": {"id": b.id, "height": b.height},
            "geometry": mapping(b.footprint),
        }
        for b in buildings
    ]
    _write_collection(path, features)


# --------------------------------------------------------------------------
# streets


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller root wins so the representative is the earliest endpoint
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


@dataclass
class StreetNetwork:
    """Snapped street segments and the nodes their endpoints resolve to."""

    nodes: np.ndarray
    segments: list[StreetSegment]
    report: LoadReport = field(default_factory=LoadReport)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        deg = np.zeros(len(self.nodes), dtype=int)
        adj: list[list[int]] = [[] for _ in range(len(self.nodes))]
        for k, seg in enumerate(self.segments):
            deg[seg.u] += 1
            deg[seg.v] += 1
            adj[seg.u].append(k)
            if seg.v != seg.u:
                adj[seg.v].append(k)
        self.degree = deg
        self.incident = adj

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def lengths(self) -> np.ndarray:
        return np.array([s.length for s in self.segments])

    def geometries(self) -> np.ndarray:
        return np.array([s.centerline for s in self.segments], dtype=object)

    def neighbours(self, node: int) -> list[int]:
        out = []
        for k in self.incident[node]:
            s = self.segments[k]
            out.append(s.v if s.u == node else s.u)
        return out


def network_from_lines(
    lines: Sequence[tuple[str, LineString]], snap_tol: float = 0.1
) -> StreetNetwork:
    """Snap line endpoints into nodes, drop zero-length and duplicate segments.

    Endpoints closer than ``snap_tol`` (transitively) merge into one node placed
    at the earliest endpoint of the group.
    """
    report = LoadReport()
    kept: list[tuple[str, np.ndarray]] = []
    for sid, line in lines:
        coords = np.asarray(line.coords, dtype=float)[:, :2]
        if len(coords) < 2:
            report.rejected[sid] = "fewer than two vertices"
            continue
        kept.append((sid, coords))
    if not kept:
        raise ValidationError("street network is empty")

    ends = np.vstack([[c[0], c[-1]] for _, c in kept])
    uf = _UnionFind(len(ends))
    # identical endpoints always merge, even with a zero tolerance
    for a, b in sorted(cKDTree(ends).query_pairs(r=snap_tol)):
        uf.union(a, b)
    roots = [uf.find(i) for i in range(len(ends))]

    node_index: dict[int, int] = {}
    node_xy: list[np.ndarray] = []
    segments: list[StreetSegment] = []
    signatures: dict[tuple[int, int], list[LineString]] = {}
    for k, (sid, coords) in enumerate(kept):
        ids = []
        for r in (roots[2 * k], roots[2 * k + 1]):
            if r not in node_index:
                node_index[r] = len(node_xy)
                node_xy.append(ends[r])
            ids.append(node_index[r])
        u, v = ids
        coords = coords.copy()
        coords[0] = node_xy[u]
        coords[-1] = node_xy[v]
        geom = LineString(coords)
        if geom.length <= snap_tol or (u == v and len(coords) <= 2):
            report.rejected[sid] = "zero-length segment after snapping"
            report.warn(f"street {sid} removed: zero length")
            continue
        key = (min(u, v), max(u, v))
        dup = False
        for other in signatures.get(key, []):
            if other.hausdorff_distance(geom) <= snap_tol:
                dup = True
                break
        if dup:
            report.rejected[sid] = "duplicate of a coincident segment"
            report.warn(f"street {sid} removed: duplicate coincident segment")
            continue
        signatures.setdefault(key, []).append(geom)
        segments.append(StreetSegment(sid, geom, u, v))

    if not segments:
        raise ValidationError("street network is empty after cleaning")
    # drop nodes orphaned by removed segments and renumber densely
    used = sorted({s.u for s in segments} | {s.v for s in segments})
    remap = {old: new for new, old in enumerate(used)}
    segments = [StreetSegment(s.id, s.centerline, remap[s.u], remap[s.v]) for s in segments]
    nodes = np.asarray(node_xy)[used]
    return StreetNetwork(nodes, segments, report)


def load_streets(path: str | Path, snap_tol: float = 0.1, id_field: str = "id") -> StreetNetwork:
    """Read street centrelines (LineString features) and build a snapped network."""
    if snap_tol < 0:
        raise ValidationError("snap tolerance must be >= 0")
    features = _read_features(path)
    check_projected(_all_coords(features), "streets")
    lines = []
    rejected = {}
    for i, f in enumerate(features):
        sid = _feature_id(f, id_field, i)
        raw = f.get("geometry")
        try:
            geom = shape(raw) if raw is not None else None
        except Exception as exc:
            rejected[sid] = f"unreadable geometry: {exc}"
            continue
        if geom is None or geom.geom_type != "LineString":
            rejected[sid] = "not a single-part LineString"
            continue
        lines.append((sid, shapely.force_2d(geom)))
    net = network_from_lines(lines, snap_tol)
    for sid, reason in rejected.items():
        net.report.rejected[sid] = reason
        net.report.warn(f"street {sid} rejected: {reason}")
    return net


def write_streets(network: StreetNetwork, path: str | Path) -> None:
    features = [
        {
            "type": "Feature",
            "properties": {"id": s.id, "u": int(s.u), "v": int(s.v)},
            "geometry": mapping(s.centerline),
        }
        for s in network.segments
    ]
    _write_collection(path, features)


# --------------------------------------------------------------------------
# zones


def zones_from_features(
    features: Sequence[dict], id_field: str = "id", population_field: str = "population"
) -> list[Zone]:
    check_projected(_all_coords(features), "zones")
    zones = []
    seen = set()
    for i, f in enumerate(features):
        zid = _feature_id(f, id_field, i)
        if zid in seen:
            raise ValidationError(f"duplicate zone id {zid!r}")
        seen.add(zid)
        geom = shape(f["geometry"])
        if geom.geom_type not in ("Polygon", "MultiPolygon") or not geom.is_valid or geom.area <= 0:
            raise ValidationError(f"zone {zid}: invalid polygon")
        pop = (f.get("properties") or {}).get(population_field)
        zones.append(Zone(zid, geom, float(pop) if pop is not None else None))
    geoms = np.array([z.boundary for z in zones], dtype=object)
    tree = shapely.STRtree(geoms)
    left, right = tree.query(geoms, predicate="intersects")
    for a, b in zip(left, right):
        if a < b and shapely.intersection(geoms[a], geoms[b]).area > 1e-6 * min(geoms[a].area, geoms[b].area):
            raise ValidationError(f"zones {zones[a].id} and {zones[b].id} overlap")
    return zones


def load_zones(path: str | Path, id_field: str = "id", population_field: str = "population") -> list[Zone]:
    """Read zone polygons; zone ids are strings, zones must not overlap."""
    return zones_from_features(_read_features(path), id_field, population_field)


def write_zones(zones: Sequence[Zone], path: str | Path) -> None:
    features = []
    for z in zones:
        props = {"id": z.id}
        if z.population is not None:
            props["population"] = z.population
        features.append({"type": "Feature", "properties": props, "geometry": mapping(z.boundary)})
    _write_collection(path, features)


# --------------------------------------------------------------------------
# attribute tables


def load_attribute_table(path: str | Path, id_column: str = "zone_id") -> pd.DataFrame:
    """Read a zone attribute CSV into a frame indexed by zone id.

    Every column other than the id must be numeric.
    """
    try:
        table = pd.read_csv(path, dtype={id_column: str}, encoding="utf-8")
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read attribute table {path}: {exc}") from exc
    if id_column not in table.columns:
        raise ValidationError(f"attribute table {path} has no {id_column!r} column")
    return _validate_table(table.set_index(id_column), str(path))


def _validate_table(table: pd.DataFrame, name: str) -> pd.DataFrame:
    table = table.copy()
    table.index = table.index.astype(str)
    dup = table.index[table.index.duplicated()]
    if len(dup):
        raise ValidationError(f"{name}: duplicate zone id {dup[0]!r}")
    for col in table.columns:
        converted = pd.to_numeric(table[col], errors="coerce")
        bad = converted.isna() & table[col].notna()
        if bad.any():
            raise ValidationError(
                f"{name}: column {col!r} has non-numeric value {table[col][bad].iloc[0]!r}"
            )
        table[col] = converted.astype(float)
    return table


@dataclass
class CoverageReport:
    """Zones dropped by the inner join, with the reason for each."""

    excluded: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.excluded)


def join_attributes(
    zone_ids: Sequence[str],
    tables: Sequence[pd.DataFrame],
    required: Sequence[str] | None = None,
) -> tuple[pd.DataFrame, CoverageReport]:
    """Inner-join attribute tables onto the zone list.

    Rows are sorted by zone id so the result does not depend on input order.
    Columns keep table order, then within-table order. Zones absent from any
    table, or with a missing value in a ``required`` column, are excluded and
    listed in the coverage report.
    """
    report = CoverageReport()
    zone_ids = sorted({str(z) for z in zone_ids})
    if len(zone_ids) != len(list(zone_ids)):
        raise ValidationError("duplicate zone ids in zone layer")
    frames = []
    seen_cols: set[str] = set()
    for t_index, table in enumerate(tables):
        table = _validate_table(table, f"table {t_index}")
        clash = seen_cols & set(table.columns)
        if clash:
            raise ValidationError(f"column {sorted(clash)[0]!r} appears in more than one table")
        seen_cols |= set(table.columns)
        frames.append(table)
    keep = []
    for zid in zone_ids:
        reason = None
        for t_index, table in enumerate(frames):
            if zid not in table.index:
                reason = f"absent from table {t_index}"
                break
        if reason is None and required:
            for table in frames:
                for col in required:
                    if col in table.columns and pd.isna(table.at[zid, col]):
                        reason = f"missing value for {col!r}"
                        break
                if reason:
                    break
        if reason is None:
            keep.append(zid)
        else:
            report.excluded[zid] = reason
    if frames:
        out = pd.concat([t.reindex(keep) for t in frames], axis=1)
    else:
        out = pd.DataFrame(index=keep)
    out.index.name = "zone_id"
    if required:
        missing_cols = [c for c in required if c not in out.columns]
        if missing_cols:
            raise ValidationError(f"required column(s) {missing_cols} not found in any table")
    for zid, reason in report.excluded.items():
        logger.warning("zone %s excluded: %s", zid, reason)
    return out, report


# --------------------------------------------------------------------------
# case series


def load_case_series(
    path: str | Path,
    id_column: str = "zone_id",
    date_column: str = "window_start",
    count_column: str = "cases",
) -> dict[str, list[tuple[dt.date, float]]]:
    """Read rolling-window case counts as ``zone -> [(window start, count), ...]``."""
    series: dict[str, list[tuple[dt.date, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                day = dt.date.fromisoformat(row[date_column])
                count = float(row[count_column])
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"{path}: bad case row {row}: {exc}") from exc
            if count < 0 or not math.isfinite(count):
                raise ValidationError(f"{path}: negative or non-finite count in {row}")
            series.setdefault(row[id_column], []).append((day, count))
    for zid, windows in series.items():
        windows.sort(key=lambda w: w[0])
        days = [w[0] for w in windows]
        if len(set(days)) != len(days):
            raise ValidationError(f"zone {zid}: repeated window start")
    return series


def sum_case_windows(series: Sequence[tuple[dt.date, float]], cutoff: dt.date, population: float) -> float:
    """Cases per 100k residents over the windows starting on or before ``cutoff``."""
    if not population or population <= 0:
        raise ValidationError("population must be positive to normalise case counts")
    total = math.fsum(count for start, count in series if start <= cutoff)
    return total / population * 100_000


def case_rates(
    series: Mapping[str, Sequence[tuple[dt.date, float]]],
    population: Mapping[str, float],
    cutoff: dt.date,
) -> tuple[pd.Series, list[str]]:
    """Case rates for every zone with a population; zones with zero population are flagged."""
    rates = {}
    flagged = []
    for zid in sorted(population):
        try:
            rates[zid] = sum_case_windows(series.get(zid, []), cutoff, population[zid])
        except ValidationError:
            flagged.append(zid)
    out = pd.Series(rates, name="cases_per_100k", dtype=float)
    out.index.name = "zone_id"
    return out, flagged
