"""
Deterministic synthetic fixtures.

Geometric cities (an orthogonal grid of perimeter blocks, a cul-de-sac
suburb, and a composite of many tiles of both) and spatial data-generating
processes for the error and lag models. All randomness comes from a
counter-based generator keyed by the seed, so a fixture is a pure function of
its parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import shapely
from scipy.sparse import linalg as splinalg
from shapely.geometry import LineString, box

from .errors import NumericalError, ValidationError
from .ingest import (
    BuildingFootprint,
    StreetNetwork,
    Zone,
    network_from_lines,
    write_buildings,
    write_streets,
    write_zones,
)
from .spatial.weights import SpatialWeights, knn_weights

NEUMANN_TOL = 1e-10


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; distinct ``stream`` values give independent sequences."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


@dataclass
class Fixture:
    buildings: list[BuildingFootprint]
    network: StreetNetwork
    zones: list[Zone]
    attributes: pd.DataFrame | None = None
    meta: dict = field(default_factory=dict)

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Write the fixture in the formats ingest reads."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "buildings": directory / "buildings.geojson",
            "streets": directory / "streets.geojson",
            "zones": directory / "zones.geojson",
        }
        write_buildings(self.buildings, paths["buildings"])
        write_streets(self.network, paths["streets"])
        write_zones(self.zones, paths["zones"])
        if self.attributes is not None:
            paths["attributes"] = directory / "attributes.csv"
            self.attributes.to_csv(paths["attributes"], float_format="%.12g")
        return paths


# --------------------------------------------------------------------------
# geometric fixtures


def _quadrants(bounds: tuple[float, float, float, float], prefix: str, margin: float = 0.0) -> list[Zone]:
    x0, y0, x1, y1 = bounds
    x0, y0, x1, y1 = x0 - margin, y0 - margin, x1 + margin, y1 + margin
    xm, ym = (x0 + x1) / 2, (y0 + y1) / 2
    cells = [(x0, y0, xm, ym), (xm, y0, x1, ym), (x0, ym, xm, y1), (xm, ym, x1, y1)]
    return [Zone(f"{prefix}Z{q}", box(*c)) for q, c in enumerate(cells)]


def _perimeter_slots(per_side: int) -> list[tuple[int, int]]:
    return [(i, j) for j in range(per_side) for i in range(per_side)
            if i in (0, per_side - 1) or j in (0, per_side - 1)]


def grid_city(
    rows: int = 5,
    cols: int = 5,
    block: float = 80.0,
    street_width: float = 20.0,
    fill: float = 0.5,
    height: float = 12.0,
    per_side: int = 5,
    stubs: int = 0,
    origin: tuple[float, float] = (0.0, 0.0),
    seed: int = 0,
    prefix: str = "",
) -> Fixture:
    """Orthogonal street grid with detached perimeter-block buildings.

    Streets run along grid lines ``block + street_width`` apart, so there are
    ``(rows + 1) * (cols + 1)`` nodes. Each block carries a ring of
    ``4 * (per_side - 1)`` square buildings, each covering ``fill`` of its
    slot. ``stubs`` dead-end streets, placed on seeded perimeter nodes, point
    outwards. Zones are the four quadrants.
    """
    if rows < 3 or cols < 3:
        raise ValidationError("grid_city needs rows, cols >= 3")
    if not 0 <= fill < 1:
        raise ValidationError("fill must be in [0, 1)")
    if per_side < 2:
        raise ValidationError("per_side must be >= 2")
    ox, oy = origin
    pitch = block + street_width
    lines = []
    for r in range(rows + 1):
        for c in range(cols):
            lines.append(((ox + c * pitch, oy + r * pitch), (ox + (c + 1) * pitch, oy + r * pitch)))
    for c in range(cols + 1):
        for r in range(rows):
            lines.append(((ox + c * pitch, oy + r * pitch), (ox + c * pitch, oy + (r + 1) * pitch)))

    if stubs:
        perim = [(c, r) for r in range(rows + 1) for c in range(cols + 1)
                 if r in (0, rows) or c in (0, cols)]
        if stubs > len(perim):
            raise ValidationError(f"at most {len(perim)} stubs fit on a {rows}x{cols} grid")
        chosen = sorted(rng_for(seed, 1).choice(len(perim), size=stubs, replace=False))
        reach = 0.6 * pitch
        for k in chosen:
            c, r = perim[k]
            dx = -1 if c == 0 else (1 if c == cols else 0)
            dy = -1 if r == 0 else (1 if r == rows else 0)
            if dx and dy:  # corner: point along the diagonal-free axis
                dy = 0
            x, y = ox + c * pitch, oy + r * pitch
            lines.append(((x, y), (x + dx * reach, y + dy * reach)))
    network = network_from_lines([(f"{prefix}s{k}", LineString(l)) for k, l in enumerate(lines)], snap_tol=0.0)

    buildings = []
    if fill > 0:
        slot = block / per_side
        side = slot * math.sqrt(fill)
        pad = (slot - side) / 2
        k = 0
        for r in range(rows):
            for c in range(cols):
                bx = ox + c * pitch + street_width / 2
                by = oy + r * pitch + street_width / 2
                for i, j in _perimeter_slots(per_side):
                    x = bx + i * slot + pad
                    y = by + j * slot + pad
                    buildings.append(BuildingFootprint(f"{prefix}b{k}", box(x, y, x + side, y + side), float(height)))
                    k += 1
    extent = (ox, oy, ox + cols * pitch, oy + rows * pitch)
    zones = _quadrants(extent, prefix, margin=street_width)
    meta = {
        "kind": "grid_city",
        "nodes": (rows + 1) * (cols + 1) + stubs,
        "segments": rows * (cols + 1) + cols * (rows + 1) + stubs,
        "buildings": rows * cols * len(_perimeter_slots(per_side)) if fill > 0 else 0,
    }
    return Fixture(buildings, network, zones, meta=meta)


def culdesac_suburb(
    branches: int = 4,
    lots_per_branch: int = 3,
    lot: float = 40.0,
    height: float = 6.0,
    building: float | None = None,
    road: float = 10.0,
    origin: tuple[float, float] = (0.0, 0.0),
    prefix: str = "",
) -> Fixture:
    """A spine road with dead-end branches alternating north and south.

    There are ``branches`` junctions of degree 3 on the spine, two spine ends
    and ``branches`` branch tips, so ``2 * branches + 2`` nodes of which
    ``branches + 2`` have degree 1. Every branch carries ``lots_per_branch``
    lots on each side with one detached square building each.
    """
    if branches < 2:
        raise ValidationError("culdesac_suburb needs at least 2 branches")
    if lots_per_branch < 1:
        raise ValidationError("lots_per_branch must be >= 1")
    ox, oy = origin
    side = 0.45 * lot if building is None else float(building)
    if side >= lot:
        raise ValidationError("building must be smaller than its lot")
    half = road / 2
    spacing = lot + road
    length = half + lots_per_branch * lot
    xs = [ox + (i + 1) * spacing for i in range(branches)]
    spine = [(ox, oy)] + [(x, oy) for x in xs] + [(ox + (branches + 1) * spacing, oy)]
    lines = [(f"{prefix}s{k}", LineString([spine[k], spine[k + 1]])) for k in range(len(spine) - 1)]
    buildings = []
    k = 0
    for i, x in enumerate(xs):
        sgn = 1.0 if i % 2 == 0 else -1.0
        lines.append((f"{prefix}s{len(lines)}", LineString([(x, oy), (x, oy + sgn * length)])))
        for j in range(lots_per_branch):
            cy = oy + sgn * (half + (j + 0.5) * lot)
            for lateral in (-1.0, 1.0):
                cx = x + lateral * (half + lot / 2)
                fp = box(cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2)
                buildings.append(BuildingFootprint(f"{prefix}b{k}", fp, float(height)))
                k += 1
    network = network_from_lines(lines, snap_tol=0.0)
    extent = (ox, oy - length, spine[-1][0], oy + length)
    zones = _quadrants(extent, prefix, margin=road)
    meta = {
        "kind": "culdesac_suburb",
        "nodes": 2 * branches + 2,
        "segments": 2 * branches + 1,
        "deadends": branches + 2,
        "buildings": 2 * branches * lots_per_branch,
    }
    return Fixture(buildings, network, zones, meta=meta)


def merge_fixtures(parts: Sequence[Fixture]) -> Fixture:
    buildings = [b for f in parts for b in f.buildings]
    lines = [(s.id, s.centerline) for f in parts for s in f.network.segments]
    zones = [z for f in parts for z in f.zones]
    return Fixture(buildings, network_from_lines(lines, snap_tol=0.0), zones,
                   meta={"kind": "composite", "parts": [f.meta for f in parts]})


# --------------------------------------------------------------------------
# composite fixture with a planted outcome


CONTROL_NAMES = ("ctrl_age", "ctrl_deprivation", "ctrl_noise")


def composite_city(tiles: int = 81, seed: int = 0, spacing: float = 600.0, grid_share: float = 0.5) -> Fixture:
    """Grid and suburb tiles laid out on a square lattice, one zone per tile.

    Each tile's type is drawn with probability ``grid_share`` of being a grid,
    so neighbouring zones do not share a fabric type by construction. Tile
    parameters (heights, building fill, branch counts, dead-end stubs) are
    drawn per tile from the seeded generator, and each tile's four quadrant
    zones are merged into one. Zone populations follow gross floor area. No
    outcome is attached; see :func:`plant_outcome`.
    """
    rng = rng_for(seed, 0)
    side = int(math.ceil(math.sqrt(tiles)))
    parts = []
    for t in range(tiles):
        origin = ((t % side) * spacing, (t // side) * spacing)
        prefix = f"T{t:02d}"
        if rng.uniform() < grid_share:
            f = grid_city(
                rows=3,
                cols=3,
                block=float(rng.uniform(50, 80)),
                street_width=float(rng.uniform(12, 24)),
                fill=float(rng.uniform(0.25, 0.7)),
                height=3.0,
                per_side=2,
                stubs=int(rng.integers(0, 9)),
                origin=origin,
                seed=seed * 1000 + t,
                prefix=prefix,
            )
        else:
            lot = float(rng.uniform(30, 55))
            f = culdesac_suburb(
                branches=int(rng.integers(2, 7)),
                lots_per_branch=int(rng.integers(2, 5)),
                lot=lot,
                building=float(rng.uniform(0.3, 0.6)) * lot,
                origin=origin,
                prefix=prefix,
            )
        height = float(rng.uniform(3.0, 30.0))
        jitter = rng.uniform(0.8, 1.2, size=len(f.buildings))
        f.buildings = [BuildingFootprint(b.id, b.footprint, round(height * j, 2)) for b, j in zip(f.buildings, jitter)]
        f.zones = [Zone(f"{prefix}Z", shapely.union_all([z.boundary for z in f.zones]).envelope)]
        parts.append(f)
    out = merge_fixtures(parts)
    cent = shapely.centroid(np.array([b.footprint for b in out.buildings], dtype=object))
    pops = []
    for z in out.zones:
        inside = shapely.contains_properly(z.boundary, cent)
        floors = sum(b.area * max(1, math.floor(b.height / 3 + 0.5)) for b, i in zip(out.buildings, inside) if i)
        pops.append(float(max(1.0, round(floors / 35.0))))
    out.zones = [Zone(z.id, z.boundary, p) for z, p in zip(out.zones, pops)]
    out.meta["seed"] = seed
    return out


def plant_outcome(
    zone_ids: Sequence[str],
    signal: pd.DataFrame,
    effects: dict[str, float],
    seed: int = 0,
    control_effects: Sequence[float] = (0.5, 0.4, 0.0),
    noise: float = 0.3,
    name: str = "outcome",
) -> pd.DataFrame:
    """Attribute table with seeded controls and an outcome built from them and ``signal``.

    ``signal`` holds zone-level columns (already standardized) indexed by
    zone id; the outcome is ``sum(effects[c] * signal[c]) + controls + noise``,
    shifted to be positive.
    """
    zone_ids = sorted(str(z) for z in zone_ids)
    rng = rng_for(seed, 7)
    n = len(zone_ids)
    controls = rng.standard_normal((n, len(CONTROL_NAMES)))
    y = controls @ np.asarray(control_effects, dtype=float)
    sig = signal.reindex(zone_ids)
    for col, eff in effects.items():
        y = y + eff * sig[col].to_numpy(dtype=float)
    y = y + noise * rng.standard_normal(n)
    y = y - y.min() + 1.0
    table = pd.DataFrame(controls + 3.0, index=pd.Index(zone_ids, name="zone_id"), columns=list(CONTROL_NAMES))
    table[name] = y
    return table


# --------------------------------------------------------------------------
# spatial data-generating processes


def random_points(n: int, seed: int) -> np.ndarray:
    return rng_for(seed, 11).uniform(0, 1000, size=(n, 2))


def spectral_radius(w: SpatialWeights) -> float:
    if w.transform == "R":
        return 1.0
    W = w.sparse.astype(float)
    if W.shape[0] <= 2:
        return float(np.max(np.abs(np.linalg.eigvals(W.toarray()))))
    vals = splinalg.eigs(W, k=1, which="LM", return_eigenvectors=False)
    return float(np.abs(vals[0]))


def neumann_solve(w: SpatialWeights, coef: float, rhs: np.ndarray, tol: float = NEUMANN_TOL) -> np.ndarray:
    """``(I - coef W)^-1 rhs`` by the series ``rhs + coef W rhs + ...``, to ``tol`` in sup norm."""
    if coef == 0:
        return np.array(rhs, dtype=float)
    if abs(coef) * spectral_radius(w) >= 1:
        raise ValidationError("spatial parameter times spectral radius of W must be < 1")
    W = w.sparse
    out = np.array(rhs, dtype=float)
    term = out.copy()
    for _ in range(100_000):
        term = coef * (W @ term)
        out += term
        if np.max(np.abs(term)) < tol:
            return out
    raise NumericalError("series expansion did not converge")


def _dgp_inputs(n, beta, w, seed):
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if w is None:
        w = knn_weights(random_points(n, seed), k=3)
    if w.n != n:
        raise ValidationError(f"weights of size {w.n} for n={n}")
    rng = rng_for(seed, 3)
    X = rng.standard_normal((n, len(beta)))
    eps = rng.standard_normal(n)
    return beta, w, X, eps


def dgp_error(n: int, lam: float, beta, w: SpatialWeights | None = None, seed: int = 0,
              intercept: float = 0.0, sigma: float = 1.0) -> tuple[np.ndarray, np.ndarray, SpatialWeights]:
    """``y = a + X beta + (I - lam W)^-1 eps``; returns ``(y, X, w)``."""
    if abs(lam) >= 1:
        raise ValidationError("|lambda| must be < 1")
    beta, w, X, eps = _dgp_inputs(n, beta, w, seed)
    return intercept + X @ beta + neumann_solve(w, lam, sigma * eps), X, w


def dgp_lag(n: int, rho: float, beta, w: SpatialWeights | None = None, seed: int = 0,
            intercept: float = 0.0, sigma: float = 1.0) -> tuple[np.ndarray, np.ndarray, SpatialWeights]:
    """``y = (I - rho W)^-1 (a + X beta + eps)``; returns ``(y, X, w)``."""
    if abs(rho) >= 1:
        raise ValidationError("|rho| must be < 1")
    beta, w, X, eps = _dgp_inputs(n, beta, w, seed)
    return neumann_solve(w, rho, intercept + X @ beta + sigma * eps), X, w



PLANTED_EFFECTS = {"sicFAR": -0.6, "linPDE": 0.6}


def composite_with_outcome(
    tiles: int = 81,
    seed: int = 0,
    effects: dict[str, float] | None = None,
    noise: float = 0.3,
    centre: tuple[float, float] | None = None,
) -> Fixture:
    """:func:`composite_city` with an outcome planted on zone-mean morphometrics.

    The signal columns are zone means of the named metrics after the same
    Yeo-Johnson and z-score transform the pipeline applies. Zones without a
    value for every signal column get no attribute row.
    """
    from .morphometrics.compute import UrbanFabric, compute_all
    from .transform import transform_frame
    from .zonal import zone_matrix

    effects = dict(PLANTED_EFFECTS if effects is None else effects)
    city = composite_city(tiles, seed)
    fabric = UrbanFabric.build(city.buildings, city.network)
    metrics = compute_all(fabric)
    frame, _ = zone_matrix(fabric, metrics, city.zones)
    frame = frame[list(effects)].dropna()
    signal, _ = transform_frame(frame)
    city.attributes = plant_outcome(list(signal.index), signal, effects, seed=seed, noise=noise)
    bx = shapely.total_bounds(np.array([z.boundary for z in city.zones], dtype=object))
    city.meta.update({
        "effects": effects,
        "centre": list(centre) if centre is not None else [(bx[0] + bx[2]) / 2, (bx[1] + bx[3]) / 2],
    })
    return city
