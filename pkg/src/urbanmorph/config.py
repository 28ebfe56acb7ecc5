"""Schema-validated pipeline configuration, read from YAML."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, field_validator

from .errors import ValidationError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Inputs(_Strict):
    buildings: str
    streets: str
    zones: Optional[str] = None
    attributes: list[str] = Field(default_factory=list)
    heights: Optional[str] = None
    height_policy: Literal["reject", "median", "fixed"] = "median"
    fixed_height: Optional[float] = None
    snap_tol: float = Field(0.1, ge=0)


class Tessellation(_Strict):
    clip_buffer: float = Field(100.0, gt=0)
    densify: float = Field(1.0, gt=0)
    shrink: float = Field(0.0, ge=0)


class Profile(_Strict):
    tick_spacing: float = Field(3.0, gt=0)
    reach: float = Field(50.0, gt=0)


class Weights(_Strict):
    k: int = Field(3, ge=1)


class Selection(_Strict):
    folds: int = Field(5, ge=2)
    p_threshold: float = Field(0.05, gt=0, lt=1)
    beta_floor: float = Field(0.05, ge=0)
    second_rfecv: bool = True


class Stage(_Strict):
    candidates: Union[Literal["all"], list[str]] = "all"
    overrides: list[str] = Field(default_factory=list)
    group_by_category: bool = False
    fixed: bool = False


class Stage1(Stage):
    outcome: str
    candidates: list[str]


class Seeds(_Strict):
    selection: int = 0
    moran: int = 0


class PipelineConfig(_Strict):
    inputs: Inputs
    centre: Optional[tuple[float, float]] = None
    output: str = "out"
    tessellation: Tessellation = Field(default_factory=Tessellation)
    profile: Profile = Field(default_factory=Profile)
    weights: Weights = Field(default_factory=Weights)
    selection: Selection = Field(default_factory=Selection)
    stage1: Optional[Stage1] = None
    stage2: Stage = Field(default_factory=Stage)
    significance: float = Field(0.05, gt=0, lt=1)
    permutations: int = Field(999, ge=0)
    seeds: Seeds = Field(default_factory=Seeds)
    missing_threshold: float = Field(0.1, ge=0, le=1)
    combined: bool = True
    hotspot_classes: int = Field(5, ge=2)
    map_columns: list[str] = Field(default_factory=list)
    threads: int = Field(1, ge=1)

    @field_validator("stage1")
    @classmethod
    def _controls(cls, v: Optional[Stage1]) -> Optional[Stage1]:
        if v is not None and not v.candidates:
            raise ValueError("stage1.candidates must list at least one control")
        return v

    def digest(self) -> str:
        """sha256 of the canonical JSON form, excluding the output location."""
        data = self.model_dump(mode="json")
        data.pop("output", None)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path: str | Path, base: str | Path | None = None) -> PipelineConfig:
    """Read and validate a YAML config; relative input paths resolve against the file's folder."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(raw)
    root = Path(base) if base is not None else path.parent
    return resolve_paths(cfg, root)


def parse_config(raw: dict) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(raw)
    except PydanticError as exc:
        raise ValidationError(f"invalid config: {exc}") from exc


def resolve_paths(cfg: PipelineConfig, root: Path) -> PipelineConfig:
    def fix(p: str | None) -> str | None:
        if p is None:
            return None
        q = Path(p)
        return str(q if q.is_absolute() else (root / q))

    inputs = cfg.inputs.model_copy(
        update={
            "buildings": fix(cfg.inputs.buildings),
            "streets": fix(cfg.inputs.streets),
            "zones": fix(cfg.inputs.zones),
            "heights": fix(cfg.inputs.heights),
            "attributes": [fix(a) for a in cfg.inputs.attributes],
        }
    )
    return cfg.model_copy(update={"inputs": inputs, "output": fix(cfg.output)})


def dump_config(cfg: PipelineConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.model_dump(mode="json"), fh, sort_keys=True)
