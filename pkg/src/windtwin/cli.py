"""``windtwin`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data validation error,
4 numeric or training error, 5 I/O error.  Failures print one JSON line to
stderr with the error class, module, operation and input location.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, pipeline, synth, terrain
from .errors import ConfigError, OutputError, WindTwinError


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, type=Path, help="run configuration JSON")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--output-dir", type=Path, help="override paths.output_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windtwin", description="Wind-farm power forecasting pipeline.")
    parser.add_argument("--version", action="version", version=f"windtwin {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a seeded synthetic farm dataset")
    p.add_argument("--config", type=Path, help="synthetic-generator configuration JSON")
    p.add_argument("--seed", type=int, help="override the generator seed")
    p.add_argument("--days", type=int, help="override the number of days")
    p.add_argument("--turbines", type=int, help="override the number of turbines")
    p.add_argument("--output-dir", type=Path, default=Path("synthetic"), help="dataset directory")

    helps = {
        "ingest": "validate SCADA and store hourly series",
        "train": "train the data-driven models",
        "predict": "write prediction matrices for all models",
        "evaluate": "score predictions per lead time",
        "hybrid": "select the best model per lead and score the hybrid",
        "run": "ingest, train, predict, evaluate and hybrid in one go",
    }
    for name, text in helps.items():
        _add_run_options(sub.add_parser(name, help=text))

    p = sub.add_parser("terrain", help="merge bathymetry, quantize to int16 and split into chunks")
    p.add_argument("--config", type=Path, help="terrain configuration JSON (keys mirror the flags)")
    p.add_argument("--grid", type=Path, help="ESRI ASCII height grid")
    p.add_argument("--contours", type=Path, help="depth contour CSV (depth,x,y,polyline_id)")
    p.add_argument("--output-dir", type=Path, help="chunk set directory")
    p.add_argument("--scale", type=float, help="metres per int16 count (default 0.1)")
    p.add_argument("--offset", type=float, help="height of count 0 (default: mid-range)")
    p.add_argument("--chunk-size", type=int, help="chunk edge in cells (default 64)")
    p.add_argument("--k", type=int, help="contour vertices used per filled cell (default 8)")
    p.add_argument("--search-radius", type=float, help="contour search radius in m (default 1000)")
    p.add_argument("--seed", type=int, help="recorded in the provenance stamp (default 0)")
    return parser


def _synth(args) -> int:
    if args.config:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read synth config: {exc}", module="cli", operation="synth",
                              location=str(args.config)) from None
        try:
            config = synth.SynthConfig.from_json(doc)
        except TypeError as exc:
            raise ConfigError(str(exc), module="cli", operation="synth", location=str(args.config)) from None
    else:
        config = synth.SynthConfig()
    changes = {k: v for k, v in (("seed", args.seed), ("days", args.days), ("n_turbines", args.turbines))
               if v is not None}
    config = replace(config, **changes)
    dataset = synth.generate(config)
    try:
        paths = synth.write_dataset(dataset, args.output_dir)
    except OSError as exc:
        raise OutputError(f"cannot write dataset: {exc}", module="synth-gen", operation="write_dataset",
                          location=str(args.output_dir)) from exc
    logging.getLogger(__name__).info("wrote %d files to %s", len(paths), args.output_dir)
    return 0


def _terrain_settings(args) -> dict:
    settings = {"scale": 0.1, "offset": None, "chunk_size": 64, "k": 8, "search_radius": 1000.0, "seed": 0}
    base = Path(".")
    if args.config:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read terrain config: {exc}", module="cli", operation="terrain",
                              location=str(args.config)) from None
        unknown = set(doc) - set(settings) - {"grid", "contours", "output_dir", "provenance"}
        if unknown:
            raise ConfigError(f"unknown terrain setting(s) {sorted(unknown)}", module="cli",
                              operation="terrain", location=str(args.config))
        base = args.config.parent
        settings.update({k: v for k, v in doc.items() if k != "provenance"})
        for key in ("grid", "contours", "output_dir"):
            if settings.get(key) is not None:
                settings[key] = base / settings[key]
    for key in ("grid", "contours", "output_dir", "scale", "offset", "chunk_size", "k", "search_radius", "seed"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    for key in ("grid", "output_dir"):
        if settings.get(key) is None:
            raise ConfigError(f"terrain needs --{key.replace('_', '-')}", module="cli", operation="terrain")
    if not int(settings["chunk_size"]) >= 1:
        raise ConfigError("chunk size must be >= 1", module="cli", operation="terrain")
    return settings


def _terrain(args) -> int:
    s = _terrain_settings(args)
    grid = terrain.read_ascii_grid(s["grid"])
    if s.get("contours") is not None:
        grid = terrain.merge_bathymetry(grid, terrain.read_contours(s["contours"]), k=int(s["k"]),
                                        search_radius=float(s["search_radius"]))
    qset = terrain.quantize_int16(grid, float(s["scale"]), s["offset"])
    qset = terrain.chunk_split(qset, int(s["chunk_size"]))
    doc = {k: (str(Path(v).name) if k in ("grid", "contours") and v is not None else v)
           for k, v in s.items() if k != "output_dir"}
    stamp = f"config_hash={synth.config_hash(doc)} seed={int(s['seed'])}"
    try:
        terrain.write_chunks(qset, s["output_dir"], extra={"provenance": stamp})
    except OSError as exc:
        raise OutputError(f"cannot write chunk set: {exc}", module="terrain-prep", operation="write_chunks",
                          location=str(s["output_dir"])) from exc
    return 0


def _run_step(args) -> int:
    cfg = pipeline.load_run_config(args.config, seed=args.seed, output_dir=args.output_dir)
    if args.command == "run":
        pipeline.run_all(cfg)
    elif args.command == "hybrid" and not cfg.hybrid:
        raise ConfigError("hybrid selection is disabled in this configuration", module="cli", operation="hybrid")
    else:
        getattr(pipeline, args.command)(cfg)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return _synth(args)
        if args.command == "terrain":
            return _terrain(args)
        return _run_step(args)
    except WindTwinError as exc:
        print(exc.as_json(), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        err = OutputError(str(exc), module="cli", operation=args.command,
                          location=str(getattr(exc, "filename", "") or ""))
        print(err.as_json(), file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
