"""
Two-stage analysis: a control model, then morphometrics against its residuals.

Every step is a method of :class:`Pipeline` and caches its result, so CLI
subcommands can run any prefix of the chain.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import shapely

from . import __version__
from .config import PipelineConfig
from .errors import UrbanMorphError, ValidationError
from .hotspots import hotspots
from .ingest import Zone, join_attributes, load_attribute_table, load_buildings, load_streets, load_zones
from .maps import export_maps
from .morphometrics.compute import ElementMetricTable, UrbanFabric, compute_all
from .morphometrics.registry import BY_CODE, CODES, write_manifest
from .reports import ModelTable, error_table, lag_table, ols_table
from .selection import SelectionResult, select_protocol
from .spatial.diagnostics import LMDiagnostics, lm_diagnostics, model_select
from .spatial.models import fit_spatial_error, fit_spatial_lag
from .spatial.moran import MoranResult, morans_i
from .spatial.ols import OLSFit, ols_fit
from .spatial.weights import SpatialWeights, knn_weights
from .transform import transform_frame
from .zonal import zone_matrix

logger = logging.getLogger(__name__)

DIST_COLUMN = "dist_centre_km"


@dataclass
class StageResult:
    name: str
    target: np.ndarray
    selection: SelectionResult
    ols: OLSFit
    moran: MoranResult
    lm: LMDiagnostics
    choice: str
    fit: object
    residuals: np.ndarray
    tables: list[ModelTable] = field(default_factory=list)

    @property
    def variables(self) -> list[str]:
        return list(self.selection.chosen)


@dataclass
class RunManifest:
    config_hash: str
    version: str
    seeds: dict[str, int]
    timings: dict[str, float]
    checksums: dict[str, str]

    def as_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "seeds": self.seeds,
            "timings": self.timings,
            "checksums": self.checksums,
        }


NOISE_RTOL = 1e-9


def distinct_values(values, rtol: float = NOISE_RTOL) -> int:
    """Number of distinct values once differences below floating-point noise are ignored.

    Values are snapped to a grid of ``rtol * max(1, max|x|)``; geometric
    metrics of axis-aligned shapes otherwise differ in their last bits.
    """
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if len(v) == 0:
        return 0
    step = rtol * max(1.0, float(np.abs(v).max()))
    return len(np.unique(np.round(v / step)))


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


class Pipeline:
    def __init__(self, config: PipelineConfig, out: str | Path | None = None):
        self.cfg = config
        self.out = Path(out if out is not None else config.output)
        self.timings: dict[str, float] = {}
        self.written: list[Path] = []
        self._cache: dict[str, object] = {}

    # -- bookkeeping ----------------------------------------------------

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        except UrbanMorphError as exc:
            if not str(exc).startswith("["):
                exc.args = (f"[{name}] {exc}",) + exc.args[1:]
            raise
        finally:
            self.timings[name] = round(self.timings.get(name, 0.0) + time.perf_counter() - t0, 3)

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def _path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _record(self, *paths: Path) -> None:
        for p in paths:
            if p not in self.written:
                self.written.append(p)

    # -- inputs and geometry -------------------------------------------

    def require(self, what: str):
        """Config section or input needed by the requested step, or a ValidationError."""
        value = {"zones": self.cfg.inputs.zones, "stage1": self.cfg.stage1, "centre": self.cfg.centre}[what]
        if value is None:
            raise ValidationError(f"this step needs '{what}' in the config")
        return value

    def inputs(self):
        """Buildings and the street network."""
        def load():
            with self.stage("ingest"):
                c = self.cfg.inputs
                buildings, report = load_buildings(c.buildings, c.heights, c.height_policy, c.fixed_height)
                self._cache["load_report"] = report
                return buildings, load_streets(c.streets, c.snap_tol)
        return self._cached("inputs", load)

    def zones(self) -> list[Zone]:
        def load():
            path = self.require("zones")
            with self.stage("ingest"):
                return load_zones(path)
        return self._cached("zones", load)

    def tables(self) -> list[pd.DataFrame]:
        def load():
            with self.stage("ingest"):
                return [load_attribute_table(p) for p in self.cfg.inputs.attributes]
        return self._cached("tables", load)

    def fabric(self) -> UrbanFabric:
        def build():
            buildings, network = self.inputs()
            with self.stage("tessellate"):
                t = self.cfg.tessellation
                return UrbanFabric.build(buildings, network, t.clip_buffer, t.densify, self.cfg.threads, t.shrink)
        return self._cached("fabric", build)

    def metrics(self) -> ElementMetricTable:
        def run():
            fabric = self.fabric()
            with self.stage("metrics"):
                p = self.cfg.profile
                return compute_all(fabric, tick_spacing=p.tick_spacing, reach=p.reach)
        return self._cached("metrics", run)

    def write_tessellation(self) -> list[Path]:
        fabric = self.fabric()
        cells = {"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"building_id": c.building_id, "block_id": int(b)},
             "geometry": shapely.geometry.mapping(c.polygon)}
            for c, b in zip(fabric.cells, fabric.membership)]}
        blocks = {"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"block_id": b.id, "bounded": b.bounded, "cells": len(b.cells)},
             "geometry": shapely.geometry.mapping(b.polygon)} for b in fabric.blocks]}
        paths = [self._path("cells.geojson"), self._path("blocks.geojson")]
        for obj, p in zip((cells, blocks), paths):
            with open(p, "w", encoding="utf-8") as fh:
                json.dump(obj, fh)
                fh.write("\n")
        self._record(*paths)
        return paths

    def write_metrics(self) -> list[Path]:
        paths = self.metrics().write_csv(self.out / "metrics")
        reg = self._path("metrics/registry.json")
        write_manifest(reg)
        self._record(*paths, reg)
        return paths + [reg]

    # -- zone matrix -----------------------------------------------------

    def matrix(self) -> pd.DataFrame:
        def run():
            zones, tables = self.zones(), self.tables()
            fabric, metrics = self.fabric(), self.metrics()
            with self.stage("aggregate"):
                attrs = None
                if tables:
                    s1 = self.cfg.stage1
                    required = [s1.outcome] + list(s1.candidates) if s1 is not None else None
                    attrs, coverage = join_attributes([z.id for z in zones], tables, required=required)
                    self._cache["coverage"] = coverage
                frame, _ = zone_matrix(fabric, metrics, zones, attrs, self.cfg.centre)
                return frame
        return self._cached("matrix", run)

    def write_matrix(self) -> Path:
        p = self._path("zone_matrix.csv")
        self.matrix().to_csv(p, float_format="%.12g")
        self._record(p)
        return p

    def model_frame(self) -> tuple[pd.DataFrame, pd.DataFrame, dict[str, str]]:
        """Transformed modelling columns, the transform manifest, and excluded metric columns."""
        def run():
            s1 = self.require("stage1")
            frame = self.matrix()
            with self.stage("transform"):
                excluded: dict[str, str] = {}
                metric_cols = [c for c in CODES if c in frame.columns]
                keep_metrics = []
                clean = frame.copy()
                for c in metric_cols:
                    col = clean[c]
                    share = float(col.isna().mean())
                    if share > self.cfg.missing_threshold:
                        excluded[c] = f"missing in {share:.1%} of zones"
                        continue
                    if col.isna().any():
                        clean[c] = col.fillna(col.median())
                    if distinct_values(clean[c]) < 3:
                        excluded[c] = "fewer than 3 distinct zone values"
                        continue
                    keep_metrics.append(c)
                missing = [c for c in [s1.outcome, *s1.candidates] if c not in clean.columns]
                if missing:
                    raise ValidationError(f"column(s) {missing} not found in the attribute tables")
                dist = [DIST_COLUMN] if DIST_COLUMN in clean.columns else []
                model_cols = [s1.outcome] + list(s1.candidates) + dist + keep_metrics
                transformed, manifest = transform_frame(clean, model_cols)
                return transformed, manifest, excluded
        return self._cached("model_frame", run)

    def weights(self) -> SpatialWeights:
        def build():
            zones = self.zones()
            frame = self.model_frame()[0]
            by_id = {z.id: z for z in zones}
            pts = np.array([[by_id[z].boundary.centroid.x, by_id[z].boundary.centroid.y] for z in frame.index])
            return knn_weights(pts, k=self.cfg.weights.k, ids=list(frame.index))
        return self._cached("weights", build)

    # -- stages -----------------------------------------------------------

    def _stage2_candidates(self, frame: pd.DataFrame, excluded: dict[str, str]) -> list[str]:
        available = [c for c in CODES if c in frame.columns and c not in excluded]
        cand = self.cfg.stage2.candidates
        if cand == "all":
            return available
        missing = [c for c in cand if c not in frame.columns]
        if missing:
            raise ValidationError(f"unknown stage-2 candidate(s): {missing}")
        return [c for c in cand if c in available]

    def fit_stage(self, name: str, X: pd.DataFrame, y: np.ndarray, fixed: bool, overrides: Sequence[str],
                  groups: dict[str, str] | None) -> StageResult:
        cfg = self.cfg
        w = self.weights()
        if fixed:
            selection = SelectionResult(list(X.columns), "fixed")
        else:
            selection = select_protocol(
                X, y, groups=groups, overrides=list(overrides) or None, folds=cfg.selection.folds,
                seed=cfg.seeds.selection, p_threshold=cfg.selection.p_threshold,
                beta_floor=cfg.selection.beta_floor, second_rfecv=cfg.selection.second_rfecv,
            )
        cols = selection.chosen
        Xs = X[cols].to_numpy(dtype=float)
        fit = ols_fit(y, Xs, cols)
        moran = morans_i(fit.resid, w, permutations=cfg.permutations, seed=cfg.seeds.moran)
        lm = lm_diagnostics(fit, y, Xs, w)
        choice = model_select(moran, lm, cfg.significance)
        tables = [ols_table(f"{name}: OLS", fit, moran, lm)]
        if choice == "error":
            model = fit_spatial_error(y, Xs, w, cols)
            residuals = model.resid  # innovations (I - lambda W)(y - X b)
            tables.append(error_table(f"{name}: spatial error model", model, len(y)))
        elif choice == "lag":
            model = fit_spatial_lag(y, Xs, w, cols)
            residuals = model.resid
            tables.append(lag_table(f"{name}: spatial lag model", model, len(y)))
        else:
            model = fit
            residuals = fit.resid
        return StageResult(name, y, selection, fit, moran, lm, choice, model, residuals, tables)

    def stage1(self) -> StageResult:
        def run():
            frame = self.model_frame()[0]
            with self.stage("stage1"):
                s = self.cfg.stage1
                y = frame[s.outcome].to_numpy(dtype=float)
                X = frame[list(s.candidates)]
                return self.fit_stage("stage 1", X, y, s.fixed, s.overrides, None)
        return self._cached("stage1", run)

    def stage2(self) -> StageResult:
        def run():
            frame, _, excluded = self.model_frame()
            first = self.stage1()
            with self.stage("stage2"):
                s = self.cfg.stage2
                cand = self._stage2_candidates(frame, excluded)
                groups = {c: BY_CODE[c].category for c in cand} if s.group_by_category else None
                y = np.array(first.residuals, dtype=float)
                return self.fit_stage("stage 2", frame[cand], y, s.fixed, s.overrides, groups)
        return self._cached("stage2", run)

    def combined(self) -> StageResult:
        """Controls, distance to centre and the stage-2 morphometrics in one model (carried over, not re-selected)."""
        def run():
            frame = self.model_frame()[0]
            first, second = self.stage1(), self.stage2()
            with self.stage("combined"):
                dist = [DIST_COLUMN] if DIST_COLUMN in frame.columns else []
                cols = list(dict.fromkeys(first.variables + dist + second.variables))
                y = frame[self.cfg.stage1.outcome].to_numpy(dtype=float)
                return self.fit_stage("combined", frame[cols], y, True, [], None)
        return self._cached("combined", run)

    # -- outputs ------------------------------------------------------------

    def write_selection(self) -> list[Path]:
        paths = []
        for st in (self.stage1(), self.stage2()):
            p = self._path(f"{st.name.replace(' ', '')}_selection.json")
            _dump_json(st.selection.as_dict(), p)
            paths.append(p)
        _, manifest, excluded = self.model_frame()
        p = self._path("transform_manifest.csv")
        manifest.to_csv(p, index=False, float_format="%.12g")
        q = self._path("excluded_columns.csv")
        pd.DataFrame(sorted(excluded.items()), columns=["column", "reason"]).to_csv(q, index=False)
        paths += [p, q]
        self._record(*paths)
        return paths

    def write_models(self) -> list[Path]:
        stages = [self.stage1(), self.stage2()] + ([self.combined()] if self.cfg.combined else [])
        paths = []
        (self.out / "models").mkdir(parents=True, exist_ok=True)
        for st in stages:
            stem = st.name.replace(" ", "")
            for t in st.tables:
                paths += t.write(self.out / "models" / f"{stem}_{t.kind}")
        frame = self.model_frame()[0]
        s1, s2 = self.stage1(), self.stage2()
        target = pd.DataFrame({"stage1_residual": s1.residuals, "stage2_target": s2.target,
                               "stage2_residual": s2.residuals}, index=frame.index)
        p = self._path("models/residuals.csv")
        target.to_csv(p, float_format="%.12g")
        paths.append(p)
        summary = {st.name: {"model": st.choice, "variables": st.variables,
                             "selection": st.selection.method,
                             "quality_gate_failed": st.selection.quality_gate_failed,
                             "moran_I": st.moran.I, "moran_p": st.moran.p_sim} for st in stages}
        q = self._path("models/summary.json")
        _dump_json(summary, q)
        paths.append(q)
        self._record(*paths)
        return paths

    def write_hotspots(self) -> Path:
        raw = self.matrix()
        outcome = self.cfg.stage1.outcome
        frame = self.model_frame()[0]
        errors = pd.Series(self.stage2().residuals, index=frame.index)
        table = hotspots(raw.loc[frame.index, outcome], errors, self.cfg.hotspot_classes)
        p = self._path("hotspots.csv")
        table.to_csv(p, float_format="%.12g")
        self._record(p)
        return p

    def write_maps(self) -> list[Path]:
        zones = self.zones()
        raw = self.matrix()
        cols = self.cfg.map_columns or [self.cfg.stage1.outcome] + self.stage2().variables
        paths = export_maps(zones, raw, cols, self.out / "maps")
        self._record(*paths)
        return paths

    def write_manifest(self) -> Path:
        files = sorted(set(self.written), key=lambda p: str(p.relative_to(self.out)))
        checksums = {str(p.relative_to(self.out)): sha256(p) for p in files}
        manifest = RunManifest(self.cfg.digest(), __version__,
                               {"selection": self.cfg.seeds.selection, "moran": self.cfg.seeds.moran},
                               dict(self.timings), checksums)
        p = self.out / "manifest.json"
        _dump_json(manifest.as_dict(), p)
        return p

    def run(self) -> RunManifest:
        self.out.mkdir(parents=True, exist_ok=True)
        self.write_metrics()
        self.write_matrix()
        self.write_selection()
        self.write_models()
        self.write_hotspots()
        self.write_maps()
        p = self.write_manifest()
        data = json.loads(p.read_text(encoding="utf-8"))
        return RunManifest(**data)


def run_two_stage(config: PipelineConfig, out: str | Path | None = None) -> tuple[Pipeline, RunManifest]:
    pipe = Pipeline(config, out)
    return pipe, pipe.run()
