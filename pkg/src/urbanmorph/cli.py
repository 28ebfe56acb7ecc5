"""
Command-line entry point.

Every subcommand reads the same YAML config (``--config``); ingest flags and
the global flags override the matching config fields. Exit codes: 0 on
success, 2 on invalid input or config, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, dump_config, load_config, parse_config
from .errors import NumericalError, ValidationError
from .pipeline import Pipeline
from .synthcity import CONTROL_NAMES, composite_with_outcome, culdesac_suburb, grid_city

logger = logging.getLogger("urbanmorph")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _global_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML pipeline config")
    p.add_argument("--seed", type=int, help="seed for selection folds, permutations and fixtures")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads for tessellation")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _ingest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--buildings", help="building footprints (GeoJSON)")
    p.add_argument("--heights", help="building heights (CSV with id,height)")
    p.add_argument("--streets", help="street centerlines (GeoJSON)")
    p.add_argument("--zones", help="zone polygons (GeoJSON)")
    p.add_argument("--attrs", action="append", help="zone attribute CSV (repeatable)")
    p.add_argument("--snap-tol", type=float, help="endpoint snapping tolerance in meters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="urbanmorph", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic fixture and a matching config")
    p.add_argument("kind", choices=("grid", "suburb", "composite"))
    p.add_argument("--rows", type=int, default=5)
    p.add_argument("--cols", type=int, default=5)
    p.add_argument("--branches", type=int, default=4)
    p.add_argument("--lots", type=int, default=3)
    p.add_argument("--tiles", type=int, default=81)
    _global_flags(p)

    helps = {
        "tessellate": "morphological cells and blocks as GeoJSON",
        "metrics": "per-element morphometric tables",
        "aggregate": "zone matrix of metric means, attributes and distance to centre",
        "select": "variable selection for both stages",
        "model": "stage 1, stage 2 and combined model reports",
        "pipeline": "full run with reports, hotspots, maps and manifest",
        "hotspots": "top natural-breaks zones with the smallest stage-2 errors",
        "export": "GeoJSON and SVG choropleths of zone columns",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _global_flags(p)
        _ingest_flags(p)
        if name == "tessellate":
            p.add_argument("--shrink", type=float, help="inward offset of footprints before tessellation (m)")
        if name == "aggregate":
            p.add_argument("--centre", type=float, nargs=2, metavar=("X", "Y"))
        if name == "export":
            p.add_argument("--columns", nargs="+", help="zone columns to map")
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    """Load ``--config`` (if any) and apply command-line overrides."""
    if args.config:
        raw = load_config(args.config).model_dump(mode="json")
    else:
        raw = {"inputs": {}}
    inputs = raw.setdefault("inputs", {})
    for flag, key in (("buildings", "buildings"), ("heights", "heights"), ("streets", "streets"),
                      ("zones", "zones"), ("attrs", "attributes"), ("snap_tol", "snap_tol")):
        value = getattr(args, flag, None)
        if value is not None:
            inputs[key] = value
    if getattr(args, "shrink", None) is not None:
        raw.setdefault("tessellation", {})["shrink"] = args.shrink
    if getattr(args, "centre", None) is not None:
        raw["centre"] = list(args.centre)
    if args.seed is not None:
        raw["seeds"] = {"selection": args.seed, "moran": args.seed}
    if args.out is not None:
        raw["output"] = args.out
    if args.threads is not None:
        raw["threads"] = args.threads
    if getattr(args, "columns", None):
        raw["map_columns"] = args.columns
    return parse_config(raw)


def run_synth(args: argparse.Namespace) -> dict:
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out or f"synth_{args.kind}")
    if args.kind == "grid":
        fixture = grid_city(rows=args.rows, cols=args.cols, seed=seed)
    elif args.kind == "suburb":
        fixture = culdesac_suburb(branches=args.branches, lots_per_branch=args.lots)
    else:
        fixture = composite_with_outcome(tiles=args.tiles, seed=seed)
    paths = fixture.write(out)
    if fixture.attributes is not None:
        cfg = parse_config({
            "inputs": {
                "buildings": paths["buildings"].name,
                "streets": paths["streets"].name,
                "zones": paths["zones"].name,
                "attributes": [paths["attributes"].name],
                "snap_tol": 0.0,
            },
            "centre": fixture.meta["centre"],
            "output": "out",
            "stage1": {"outcome": "outcome", "candidates": list(CONTROL_NAMES)},
            "seeds": {"selection": seed, "moran": seed},
        })
        dump_config(cfg, out / "config.yaml")
        paths["config"] = out / "config.yaml"
    return {k: str(v) for k, v in paths.items()}


def dispatch(args: argparse.Namespace) -> dict:
    if args.command == "synth":
        return run_synth(args)
    pipe = Pipeline(config_from_args(args))
    cmd = args.command
    if cmd == "tessellate":
        paths = pipe.write_tessellation()
    elif cmd == "metrics":
        paths = pipe.write_metrics()
    elif cmd == "aggregate":
        paths = [pipe.write_matrix()]
    elif cmd == "select":
        paths = pipe.write_selection()
    elif cmd == "model":
        paths = pipe.write_models()
    elif cmd == "hotspots":
        paths = [pipe.write_hotspots()]
    elif cmd == "export":
        paths = pipe.write_maps()
    else:
        pipe.run()
        paths = [pipe.out / "manifest.json"]
    return {"outputs": [str(p) for p in paths], "timings": pipe.timings}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        result = dispatch(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
