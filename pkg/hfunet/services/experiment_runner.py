"""Experiment orchestration: cached phantom cohorts, sweep cells, comparison tables."""

import asyncio
import hashlib
import json
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
import uuid_utils
from opentelemetry import trace

import hfunet
from hfunet.config import settings
from hfunet.errors import HFUNetError
from hfunet.logging_config import get_logger
from hfunet.models.contours import HeatmapStack
from hfunet.models.experiment import (
    CellResult,
    DataSection,
    ExperimentCell,
    ExperimentConfig,
    RunStatus,
)
from hfunet.models.reports import (
    RunMetadata,
    format_report_as_markdown,
    write_report_csv,
)
from hfunet.models.topology import count_blocks
from hfunet.models.training import TrainConfig
from hfunet.models.volume import LabelVolume, Volume
from hfunet.services.checkpoint import load_checkpoint, save_checkpoint
from hfunet.services.config_loader import write_config
from hfunet.services.contour_labels import heatmap_stack
from hfunet.services.inference import infer
from hfunet.services.localization import (
    crop_region,
    localize,
    localize_from_label,
    paste_region,
    train_localizer,
)
from hfunet.services.metrics import evaluate_cases
from hfunet.services.model_zoo import ModelState, build_topology
from hfunet.services.phantom_data import cohort_specs, generate_phantom, preprocess_case
from hfunet.services.plots import write_alpha_boxplots
from hfunet.services.sweep_manager import SweepManager
from hfunet.services.trainer import TrainingCase, train
from hfunet.services.volume_io import read_image, read_label, write_volume

logger = get_logger(__name__)
tracer = trace.get_tracer(__name__)

MANIFEST_FILE = "manifest.json"
RESULT_FILE = "result.json"
COMPARISON_FILE = "comparison.csv"
ALPHA_SWEEP_FILE = "alpha_sweep.csv"


class PhantomCase(NamedTuple):
    """A preprocessed phantom with its label."""

    case_id: str
    image: Volume
    label: LabelVolume


class CohortSplit(NamedTuple):
    """Disjoint train, validation and test cases."""

    train: list[PhantomCase]
    validation: list[PhantomCase]
    test: list[PhantomCase]


class ExperimentResult(NamedTuple):
    """Artifacts of an experiment run."""

    run_id: str
    run_dir: Path
    cells: list[CellResult]


def cohort_hash(data: DataSection) -> str:
    """Content hash of everything that determines the preprocessed cohort."""
    payload = json.dumps(data.model_dump(mode="json"), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]


def load_or_generate_cohort(data: DataSection, cache_root: Path | None = None) -> list[PhantomCase]:
    """Preprocessed cohort, generated once and then read from the content-addressed cache.

    Args:
        data: Cohort description
        cache_root: Cache directory, ``HFUNET_CACHE_DIR``/phantoms when None

    Returns:
        ``data.total_cases`` cases in generation order
    """
    root = cache_root if cache_root is not None else settings.phantom_cache_dir()
    cache_dir = root / cohort_hash(data)
    manifest = cache_dir / MANIFEST_FILE
    cohort_logger = logger.bind(cache_dir=str(cache_dir))

    if manifest.exists():
        case_ids = json.loads(manifest.read_text(encoding="utf-8"))["cases"]
        cohort_logger.info("Reusing cached cohort", cases=len(case_ids))
        return [
            PhantomCase(
                case_id=case_id,
                image=read_image(cache_dir / f"{case_id}_image.hfv"),
                label=read_label(cache_dir / f"{case_id}_label.hfv"),
            )
            for case_id in case_ids
        ]

    cases = []
    for index, spec in enumerate(cohort_specs(data.cohort, data.total_cases, data.seed)):
        image, label = generate_phantom(spec)
        pre = preprocess_case(image, label, data.target_spacing, data.body_threshold)
        case = PhantomCase(case_id=f"{index:03d}", image=pre.image, label=pre.label)
        write_volume(cache_dir / f"{case.case_id}_image.hfv", case.image)
        write_volume(cache_dir / f"{case.case_id}_label.hfv", case.label)
        cases.append(case)
    # Manifest last so an interrupted generation is redone
    manifest.write_text(
        json.dumps({"cases": [c.case_id for c in cases], "data": data.model_dump(mode="json")}, indent=2),
        encoding="utf-8",
    )
    cohort_logger.info("Generated cohort", cases=len(cases))
    return cases


def split_cohort(cases: list[PhantomCase], data: DataSection) -> CohortSplit:
    """Split cases in generation order into train, validation and test."""
    a = data.train_cases
    b = a + data.validation_cases
    return CohortSplit(train=cases[:a], validation=cases[a:b], test=cases[b : b + data.test_cases])


def region_case(case: PhantomCase, cfg: TrainConfig) -> TrainingCase:
    """Crop a training region around the labelled organ and build its contour targets."""
    result = localize_from_label(case.image, case.label, cfg.crop_size)
    label_region, _ = crop_region(case.label, result.center, cfg.crop_size)
    return TrainingCase(
        case_id=case.case_id,
        image=result.region,
        label=label_region,  # type: ignore[arg-type]
        heatmaps=heatmap_stack(label_region, cfg.sigma),  # type: ignore[arg-type]
    )


def segment_case(
    state: ModelState, case: PhantomCase, cfg: TrainConfig, localizer: ModelState | None, factor: int = 4
) -> LabelVolume:
    """Localize, segment the region and paste the result into the full volume."""
    if localizer is not None:
        result = localize(case.image, localizer, cfg.crop_size, factor)
    else:
        result = localize_from_label(case.image, case.label, cfg.crop_size)
    region_label, _ = infer(state, result.region, cfg)
    return paste_region(region_label, result.origin, case.image.dims)


def source_hash() -> str:
    """SHA-256 over the package sources, standing in for a commit id."""
    digest = hashlib.sha256()
    package_root = Path(hfunet.__file__).parent
    for path in sorted(package_root.rglob("*.py")):
        digest.update(path.relative_to(package_root).as_posix().encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()


def file_sha256(path: Path) -> str:
    """SHA-256 of a file."""
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_cell(
    cell: ExperimentCell,
    config: ExperimentConfig,
    run_dir: Path,
    cache_root: Path,
    localizer_path: Path | None,
) -> CellResult:
    """Train and evaluate one cell; failures are recorded in the result.

    Runs in a worker process: everything it needs is read from the cache and run directory.
    """
    cell_dir = run_dir / "cells" / cell.cell_id
    cell_logger = logger.bind(cell_id=cell.cell_id, topology=cell.topology.label(), seed=cell.seed)
    try:
        split = split_cohort(load_or_generate_cohort(config.data, cache_root), config.data)
        localizer = None
        if localizer_path is not None:
            localizer = load_checkpoint(localizer_path)[0].to(settings.device)
        cfg = cell.train

        state = build_topology(cell.topology, seed=cfg.seed).to(settings.device)
        state, history = train(
            state,
            [region_case(c, cfg) for c in split.train],
            cfg,
            run_dir=cell_dir,
            validation_cases=[region_case(c, cfg) for c in split.validation],
        )
        checkpoint = save_checkpoint(
            cell_dir / "model.pt",
            state,
            {"cell_id": cell.cell_id, "seed": cfg.seed, "crop_size": cfg.crop_size, "sigma": cfg.sigma},
        )
        (cell_dir / "history.json").write_text(history.model_dump_json(indent=2), encoding="utf-8")

        pairs = [
            (
                case.case_id,
                case.label,
                segment_case(state, case, cfg, localizer, config.eval.localizer_downsample),
            )
            for case in split.test
        ]
        report = evaluate_cases(
            pairs,
            metadata=RunMetadata(
                topology=cell.topology.label(), seed=cfg.seed, checkpoint_hash=file_sha256(checkpoint)
            ),
        )
        write_report_csv(report, cell_dir / "report.csv")
        if config.eval.markdown:
            (cell_dir / "report.md").write_text(
                format_report_as_markdown(report, title=f"{cell.topology.label()} seed {cfg.seed}"),
                encoding="utf-8",
            )
        result = CellResult(
            cell_id=cell.cell_id,
            topology=cell.topology,
            seed=cfg.seed,
            status=RunStatus.COMPLETED,
            run_dir=cell_dir,
            report=report,
        )
    except (HFUNetError, ValueError, RuntimeError) as e:
        cell_logger.error("Cell failed", error=str(e))
        result = CellResult(
            cell_id=cell.cell_id,
            topology=cell.topology,
            seed=cell.seed,
            status=RunStatus.FAILED,
            run_dir=cell_dir,
            error=str(e),
            error_code=getattr(e, "code", "runtime_error"),
        )
    cell_dir.mkdir(parents=True, exist_ok=True)
    (cell_dir / RESULT_FILE).write_text(result.model_dump_json(indent=2), encoding="utf-8")
    return result


def comparison_table(results: list[CellResult]) -> pd.DataFrame:
    """One row per (topology, seed) with the comparison columns."""
    rows = []
    for r in results:
        counts = count_blocks(r.topology)
        agg = r.report.aggregates if r.report is not None else {}

        def stat(metric: str, field: str) -> float | None:
            summary = agg.get(metric)  # noqa: B023
            return getattr(summary, field) if summary is not None else None

        rows.append(
            {
                "method": r.topology.label(),
                "fb": f"{{{counts.shared} + {counts.tcl}}}",
                "alpha": r.topology.alpha,
                "attention": r.topology.attention.value,
                "seed": r.seed,
                "status": r.status.value,
                "dsc_mean": stat("dsc", "mean"),
                "dsc_std": stat("dsc", "std"),
                "asd_mean": stat("asd_mm", "mean"),
                "asd_std": stat("asd_mm", "std"),
                "sen_mean": stat("sen", "mean"),
                "ppv_mean": stat("ppv", "mean"),
                "error": r.error,
            }
        )
    return pd.DataFrame(rows)


def alpha_sweep_frame(results: list[CellResult]) -> pd.DataFrame:
    """Per-case metrics of every completed cell, keyed by alpha for box plots."""
    rows = [
        {"alpha": r.topology.alpha, "seed": r.seed, "case_id": row.case_id, "dsc": row.dsc, "asd_mm": row.asd_mm}
        for r in results
        if r.report is not None
        for row in r.report.rows
    ]
    return pd.DataFrame(rows, columns=["alpha", "seed", "case_id", "dsc", "asd_mm"])


def collect_results(runs_dir: str | Path) -> list[CellResult]:
    """Read every cell result below a runs directory, sorted by path."""
    return [
        CellResult.model_validate_json(path.read_text(encoding="utf-8"))
        for path in sorted(Path(runs_dir).rglob(RESULT_FILE))
    ]


def write_tables(
    results: list[CellResult],
    out_dir: Path,
    plots: bool = True,
    comparison_name: str = COMPARISON_FILE,
) -> list[Path]:
    """Write the comparison table and, for alpha grids, the box-plot data and plots."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / comparison_name]
    comparison_table(results).to_csv(written[0], index=False)
    if len({r.topology.alpha for r in results}) > 1:
        frame = alpha_sweep_frame(results)
        frame.to_csv(out_dir / ALPHA_SWEEP_FILE, index=False)
        written.append(out_dir / ALPHA_SWEEP_FILE)
        if plots and not frame.empty:
            written.extend(write_alpha_boxplots(frame, out_dir))
    return written


def run_experiment(
    config: ExperimentConfig,
    cache_root: Path | None = None,
    max_workers: int | None = None,
) -> ExperimentResult:
    """Run every cell of an experiment and write its artifacts.

    The run directory holds the config snapshot, the source hash, the localizer, one
    directory per cell and the comparison tables.

    Args:
        config: Validated experiment
        cache_root: Phantom cache, ``HFUNET_CACHE_DIR``/phantoms when None
        max_workers: Worker processes, ``HFUNET_MAX_SWEEP_WORKERS`` when None

    Returns:
        Run id, run directory and per-cell results
    """
    run_id = str(uuid_utils.uuid7())
    run_dir = config.output_dir / f"{config.name}-{run_id}"
    run_dir.mkdir(parents=True, exist_ok=True)
    root = cache_root if cache_root is not None else settings.phantom_cache_dir()
    workers = settings.max_sweep_workers if max_workers is None else max_workers
    run_logger = logger.bind(run_id=run_id, experiment=config.name)

    with tracer.start_as_current_span("experiment", attributes={"run_id": run_id}):
        write_config(config, run_dir / "config.toml")
        (run_dir / "source.sha256").write_text(source_hash() + "\n", encoding="utf-8")
        cases = load_or_generate_cohort(config.data, root)
        split = split_cohort(cases, config.data)

        localizer_path = None
        if config.eval.localization == "network":
            cfg = config.train.for_seed(config.train.seed)
            localizer = train_localizer(
                [full_volume_case(c) for c in split.train], cfg, config.eval.localizer_downsample
            )
            localizer_path = save_checkpoint(
                run_dir / "localizer.pt",
                localizer,
                {"seed": cfg.seed, "downsample": config.eval.localizer_downsample},
            )

        cells = config.cells()
        run_logger.info("Running experiment", cells=len(cells), workers=workers)
        results = asyncio.run(
            SweepManager(workers).run_cells(cells, run_cell, config, run_dir, root, localizer_path)
        )
        write_tables(results, run_dir, plots=config.eval.plots)

    failed = [r.cell_id for r in results if r.status == RunStatus.FAILED]
    run_logger.info("Experiment finished", run_dir=str(run_dir), failed=failed)
    return ExperimentResult(run_id=run_id, run_dir=run_dir, cells=results)


def full_volume_case(case: PhantomCase) -> TrainingCase:
    """Full preprocessed volume as a localizer training case; contour targets are unused."""
    return TrainingCase(
        case_id=case.case_id,
        image=case.image,
        label=case.label,
        heatmaps=HeatmapStack(data=np.zeros(case.image.dims), spacing=case.image.spacing),
    )
