"""Phantom benchmark checks: overfit capacity and the U-Net vs HF-UNet-6 direction."""

from pathlib import Path
from typing import Literal, NamedTuple

from opentelemetry import trace

from hfunet.config import settings
from hfunet.logging_config import get_logger
from hfunet.models.experiment import (
    DataSection,
    EvalSection,
    ExperimentConfig,
    RunStatus,
    TopologySection,
    TrainSection,
)
from hfunet.models.presets import TopologyPreset
from hfunet.models.reports import MetricsReport
from hfunet.services.experiment_runner import (
    full_volume_case,
    load_or_generate_cohort,
    region_case,
    run_experiment,
    segment_case,
    split_cohort,
)
from hfunet.services.localization import train_localizer
from hfunet.services.metrics import evaluate_cases
from hfunet.services.model_zoo import build_topology
from hfunet.services.trainer import train

logger = get_logger(__name__)
tracer = trace.get_tracer(__name__)

TRAIN_DSC_TARGET = 0.95
TEST_DSC_TARGET = 0.85
TEST_ASD_TARGET_MM = 2.0
JOINT_STEPS = 2000
DIRECTIONAL_SEEDS = (0, 1, 2)

Localization = Literal["network", "ground_truth"]


class OverfitResult(NamedTuple):
    """Train and held-out metrics of the overfit check."""

    train: MetricsReport
    test: MetricsReport

    @property
    def passed(self) -> bool:
        """Whether every target is met."""
        return (
            self.train.aggregates["dsc"].mean >= TRAIN_DSC_TARGET
            and self.test.aggregates["dsc"].mean >= TEST_DSC_TARGET
            and self.test.aggregates["asd_mm"].mean <= TEST_ASD_TARGET_MM
        )


class DirectionalResult(NamedTuple):
    """Mean test ASD per method over seeds."""

    unet_asd_mm: float
    hf_asd_mm: float
    failed_cells: list[str]

    @property
    def passed(self) -> bool:
        """Whether HF-UNet-6 is at least as close to the surface as U-Net."""
        return not self.failed_cells and self.hf_asd_mm <= self.unet_asd_mm


def benchmark_config(
    name: str,
    output_dir: Path,
    presets: list[TopologyPreset],
    seeds: list[int],
    localization: Localization = "network",
) -> ExperimentConfig:
    """Desk-scale benchmark: 8 train and 4 test phantoms, crop 64, base width 8, 2000 joint steps."""
    steps_per_epoch = 100
    return ExperimentConfig(
        name=name,
        output_dir=output_dir,
        data=DataSection(train_cases=8, validation_cases=0, test_cases=4),
        topology=TopologySection(presets=presets, base_width=8),
        train=TrainSection(
            epochs=1 + JOINT_STEPS // steps_per_epoch,
            steps_per_epoch=steps_per_epoch,
            batch_size=16,
            crop_size=64,
            patch_size=64,
            validation_interval=0,
            seeds=seeds,
        ),
        eval=EvalSection(localization=localization, plots=False),
    )


def check_overfit(
    output_dir: Path, cache_root: Path | None = None, localization: Localization = "network"
) -> OverfitResult:
    """Train HF-UNet-6 on the benchmark phantoms and evaluate train and held-out cases.

    Args:
        output_dir: Directory for the run artifacts
        cache_root: Phantom cache
        localization: How test regions are located

    Returns:
        Train and test reports
    """
    config = benchmark_config("overfit", output_dir, [TopologyPreset.HF_6], [0], localization)
    [cell] = config.cells()
    cfg = cell.train
    with tracer.start_as_current_span("check_overfit"):
        split = split_cohort(load_or_generate_cohort(config.data, cache_root), config.data)
        localizer = None
        if localization == "network":
            localizer = train_localizer(
                [full_volume_case(c) for c in split.train], cfg, config.eval.localizer_downsample
            ).to(settings.device)

        state = build_topology(cell.topology, seed=cfg.seed).to(settings.device)
        state, _ = train(state, [region_case(c, cfg) for c in split.train], cfg, run_dir=output_dir / "overfit")

        def report(cases) -> MetricsReport:
            return evaluate_cases(
                (c.case_id, c.label, segment_case(state, c, cfg, localizer, config.eval.localizer_downsample))
                for c in cases
            )

        result = OverfitResult(train=report(split.train), test=report(split.test))
    logger.info(
        "Overfit check finished",
        train_dsc=result.train.aggregates["dsc"].mean,
        test_dsc=result.test.aggregates["dsc"].mean,
        test_asd_mm=result.test.aggregates["asd_mm"].mean,
        passed=result.passed,
    )
    return result


def check_directional(
    output_dir: Path,
    cache_root: Path | None = None,
    seeds: tuple[int, ...] = DIRECTIONAL_SEEDS,
    max_workers: int | None = None,
) -> DirectionalResult:
    """Compare mean test ASD of U-Net and HF-UNet-6 over several seeds."""
    config = benchmark_config(
        "directional", output_dir, [TopologyPreset.UNET, TopologyPreset.HF_6], list(seeds)
    )
    result = run_experiment(config, cache_root=cache_root, max_workers=max_workers)
    failed = [c.cell_id for c in result.cells if c.status == RunStatus.FAILED]

    def mean_asd(label: str) -> float:
        values = [
            c.report.aggregates["asd_mm"].mean
            for c in result.cells
            if c.topology.label() == label and c.report is not None and "asd_mm" in c.report.aggregates
        ]
        return sum(values) / len(values) if values else float("inf")

    directional = DirectionalResult(
        unet_asd_mm=mean_asd("U-Net"), hf_asd_mm=mean_asd("HF-UNet-6"), failed_cells=failed
    )
    logger.info(
        "Directional check finished",
        unet_asd_mm=directional.unet_asd_mm,
        hf_asd_mm=directional.hf_asd_mm,
        passed=directional.passed,
    )
    return directional
