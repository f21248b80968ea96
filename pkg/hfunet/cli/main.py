"""``hfunet``: train, sweep, infer, report and inspect segmentation networks."""

import argparse
import sys
from pathlib import Path
from typing import Any

import structlog

from hfunet.cli.command import cli_main
from hfunet.config import settings
from hfunet.errors import ConfigError, ConfigIssue, DivergenceError, HFUNetError
from hfunet.models.contours import DEFAULT_SIGMA
from hfunet.models.experiment import CellResult, RunStatus
from hfunet.models.presets import list_available_presets
from hfunet.models.training import TrainConfig
from hfunet.services.checkpoint import load_checkpoint
from hfunet.services.config_loader import parse_config
from hfunet.services.experiment_runner import collect_results, run_experiment, write_tables
from hfunet.services.feature_dump import dump_features
from hfunet.services.inference import infer
from hfunet.services.localization import (
    LOCALIZER_DOWNSAMPLE,
    crop_region,
    localize,
    paste_region,
)
from hfunet.services.trainer import LAST_CHECKPOINT_FILE
from hfunet.services.volume_io import read_image, write_volume

DEFAULT_CROP_SIZE = 64


def _cell_summary(cell: CellResult) -> dict[str, Any]:
    agg = cell.report.aggregates if cell.report is not None else {}
    return {
        "cell_id": cell.cell_id,
        "status": cell.status.value,
        "dsc": agg["dsc"].mean if "dsc" in agg else None,
        "asd_mm": agg["asd_mm"].mean if "asd_mm" in agg else None,
    }


def _raise_cell_failure(cell: CellResult) -> None:
    if cell.error_code == DivergenceError.code:
        checkpoint = cell.run_dir / LAST_CHECKPOINT_FILE if cell.run_dir is not None else None
        path = str(checkpoint) if checkpoint is not None and checkpoint.exists() else None
        raise DivergenceError(cell.error or "Training diverged", checkpoint_path=path)
    raise HFUNetError(cell.error or f"Cell {cell.cell_id} failed")


def train(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """Train and evaluate the single cell of an experiment file."""
    config = parse_config(args.config)
    cells = config.cells()
    if len(cells) != 1:
        msg = f"train runs exactly one (topology, seed) cell, the file defines {len(cells)}; use 'hfunet sweep'"
        raise ConfigError([ConfigIssue(line=None, location="topology", message=msg)])

    result = run_experiment(config, cache_root=args.cache_dir, max_workers=0)
    [cell] = result.cells
    if cell.status == RunStatus.FAILED:
        _raise_cell_failure(cell)
    log.info("Training run finished", run_dir=str(result.run_dir))
    return {"run_id": result.run_id, "run_dir": str(result.run_dir), **_cell_summary(cell)}


def sweep(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """Run every cell of a grid; failed cells are recorded and the sweep continues."""
    config = parse_config(args.config)
    result = run_experiment(config, cache_root=args.cache_dir, max_workers=args.workers)
    failed = [c for c in result.cells if c.status == RunStatus.FAILED]
    if result.cells and len(failed) == len(result.cells):
        msg = f"Every cell of '{config.name}' failed; first error: {failed[0].error}"
        raise HFUNetError(msg)
    log.info("Sweep finished", run_dir=str(result.run_dir), failed=len(failed))
    return {
        "run_id": result.run_id,
        "run_dir": str(result.run_dir),
        "cells": len(result.cells),
        "failed": [c.cell_id for c in failed],
    }


def infer_command(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """Segment a preprocessed volume: localize, segment the region, paste it back."""
    state, metadata = load_checkpoint(args.ckpt)
    state.to(settings.device)
    image = read_image(args.input)
    crop_size = args.crop_size or int(metadata.get("crop_size", DEFAULT_CROP_SIZE))
    sigma = args.sigma or float(metadata.get("sigma", DEFAULT_SIGMA))

    fallback = False
    if args.localizer is not None:
        localizer, loc_metadata = load_checkpoint(args.localizer)
        factor = int(loc_metadata.get("downsample", LOCALIZER_DOWNSAMPLE))
        located = localize(image, localizer.to(settings.device), crop_size, factor)
        region, origin, center, fallback = located.region, located.origin, located.center, located.fallback
    else:
        center = tuple(args.center) if args.center else tuple(n // 2 for n in image.dims)
        region, origin = crop_region(image, center, crop_size)  # type: ignore[arg-type]

    cfg = TrainConfig(crop_size=crop_size, patch_size=crop_size, sigma=sigma, slices=state.cfg.in_slices)
    labels, heatmaps = infer(state, region, cfg)
    segmentation = paste_region(labels, origin, image.dims)
    write_volume(args.out, segmentation)
    if args.heatmap is not None:
        write_volume(args.heatmap, heatmaps.to_volume())
    log.info("Wrote segmentation", out=str(args.out), center=center, fallback=fallback)
    return {
        "out": str(args.out),
        "center": list(center),
        "origin": list(origin),
        "fallback": fallback,
        "organ_voxels": segmentation.voxel_count,
    }


def report(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """Collect cell results below a directory into the comparison table."""
    results = collect_results(args.runs)
    if not results:
        msg = f"No cell results found below {args.runs}"
        raise HFUNetError(msg)
    out = Path(args.out)
    written = write_tables(results, out.parent, plots=not args.no_plots, comparison_name=out.name)
    log.info("Wrote comparison", out=str(out), cells=len(results))
    return {"out": str(out), "cells": len(results), "written": [str(p) for p in written]}


def dump_features_command(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """Write the channel mosaic of a slice at a TCL level."""
    state, _ = load_checkpoint(args.ckpt)
    mosaic = dump_features(state, read_image(args.input), args.out, args.slice, args.level)
    log.debug("Dumped features", level=mosaic.level)
    return {"out": str(mosaic.path), "level": mosaic.level, "rows": mosaic.rows, "tiles": mosaic.tiles}


def presets(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """List the named topology presets usable in an experiment file."""
    available = list_available_presets()
    log.debug("Listed presets", count=len(available))
    return {"presets": available}


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the ``hfunet`` tool."""
    parser = argparse.ArgumentParser(prog="hfunet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="Train and evaluate one topology")
    p_train.add_argument("--config", required=True, type=Path, help="Experiment TOML")
    p_train.add_argument("--cache-dir", type=Path, default=None, help="Phantom cache root")
    p_train.set_defaults(handler=train)

    p_sweep = sub.add_parser("sweep", help="Run a topology/alpha/seed grid")
    p_sweep.add_argument("--config", required=True, type=Path, help="Experiment TOML")
    p_sweep.add_argument("--cache-dir", type=Path, default=None, help="Phantom cache root")
    p_sweep.add_argument(
        "--workers", type=int, default=None, help="Worker processes, HFUNET_MAX_SWEEP_WORKERS when unset"
    )
    p_sweep.set_defaults(handler=sweep)

    p_infer = sub.add_parser("infer", help="Segment a preprocessed image volume")
    p_infer.add_argument("--ckpt", required=True, type=Path, help="Segmentation checkpoint")
    p_infer.add_argument("--in", dest="input", required=True, type=Path, help="Image volume")
    p_infer.add_argument("--out", required=True, type=Path, help="Label volume to write")
    p_infer.add_argument("--localizer", type=Path, default=None, help="Localizer checkpoint")
    p_infer.add_argument(
        "--center", nargs=3, type=int, default=None, metavar=("X", "Y", "Z"),
        help="Region centre without a localizer, the volume centre when unset",
    )
    p_infer.add_argument("--crop-size", type=int, default=None)
    p_infer.add_argument("--sigma", type=float, default=None)
    p_infer.add_argument("--heatmap", type=Path, default=None, help="Also write the region heatmap")
    p_infer.set_defaults(handler=infer_command)

    p_report = sub.add_parser("report", help="Comparison table of finished runs")
    p_report.add_argument("--runs", required=True, type=Path, help="Directory holding runs")
    p_report.add_argument("--out", required=True, type=Path, help="Comparison CSV")
    p_report.add_argument("--no-plots", action="store_true", help="Skip alpha box plots")
    p_report.set_defaults(handler=report)

    p_dump = sub.add_parser("dump-features", help="Feature mosaic at a TCL level")
    p_dump.add_argument("--ckpt", required=True, type=Path)
    p_dump.add_argument("--in", dest="input", required=True, type=Path, help="Image volume or region")
    p_dump.add_argument("--slice", required=True, type=int, help="Axial slice index")
    p_dump.add_argument("--level", type=int, default=None, help="TCL level, the highest when unset")
    p_dump.add_argument("--out", required=True, type=Path, help="PNG to write")
    p_dump.set_defaults(handler=dump_features_command)

    p_presets = sub.add_parser("presets", help="List topology presets")
    p_presets.set_defaults(handler=presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point of the ``hfunet`` tool."""
    return cli_main("hfunet", build_parser(), argv)


if __name__ == "__main__":
    sys.exit(main())
