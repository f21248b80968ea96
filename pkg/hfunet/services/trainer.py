"""Patch training loop: cold start, SGD step decay, checkpoints and loss history."""

from collections import Counter
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np
import pandas as pd
import torch
from opentelemetry import trace

from hfunet.errors import DivergenceError, GeometryError, LossValueError, TopologyError
from hfunet.logging_config import get_logger
from hfunet.models.contours import HeatmapStack
from hfunet.models.reports import MetricsReport, RunMetadata
from hfunet.models.topology import ParameterGroup
from hfunet.models.training import (
    EpochValidation,
    StepRecord,
    TrainConfig,
    TrainHistory,
    TrainPhase,
)
from hfunet.models.volume import LabelVolume, SliceStack, TrainingPatch, Volume
from hfunet.services.checkpoint import save_checkpoint
from hfunet.services.inference import infer, pad_to_multiple
from hfunet.services.losses import compute_losses
from hfunet.services.metrics import evaluate_cases
from hfunet.services.model_zoo import ModelState
from hfunet.services.phantom_data import sample_training_patches, slice_indices
from hfunet.services.seeding import derive_seed, numpy_rng

logger = get_logger(__name__)
tracer = trace.get_tracer(__name__)

LOSS_HISTORY_FILE = "losses.csv"
LAST_CHECKPOINT_FILE = "checkpoints/last.pt"
LOSS_COLUMNS = ["step", "l_cls", "l_reg", "l_tcl", "l_regularizer", "total", "lr", "phase"]


class TrainingCase(NamedTuple):
    """A preprocessed image with its label and contour heatmaps."""

    case_id: str
    image: Volume
    label: LabelVolume
    heatmaps: HeatmapStack


class PatchBatch(NamedTuple):
    """Network inputs and targets of one step."""

    inputs: torch.Tensor
    masks: torch.Tensor
    heatmaps: torch.Tensor


class PatchSampler(Protocol):
    """Draws training patches from one case."""

    def sample(self, case: TrainingCase, n: int, seed: int) -> list[TrainingPatch]:
        """Draw ``n`` patches deterministically from ``seed``."""
        ...


class RegionPatchSampler:
    """Random p x p patches around the organ of a cropped region."""

    def __init__(self, patch_size: int, slices: int) -> None:
        self.patch_size = patch_size
        self.slices = slices

    def sample(self, case: TrainingCase, n: int, seed: int) -> list[TrainingPatch]:
        return sample_training_patches(
            case.image, case.label, case.heatmaps, n, seed, self.patch_size, self.slices
        )


class WholeSliceSampler:
    """Whole axial slices, edge-padded so their extent divides the network's pooling factor."""

    def __init__(self, slices: int, multiple: int) -> None:
        self.slices = slices
        self.multiple = multiple

    def sample(self, case: TrainingCase, n: int, seed: int) -> list[TrainingPatch]:
        nz = case.image.dims[2]
        rng = np.random.default_rng(seed)
        patches = []
        for z in rng.integers(0, nz, size=n):
            z = int(z)
            stack = np.moveaxis(case.image.data[:, :, slice_indices(z, self.slices, nz)], 2, 0)
            patches.append(
                TrainingPatch(
                    stack=SliceStack(data=pad_to_multiple(stack, self.multiple), offset=(0, 0, z)),
                    mask=pad_to_multiple(case.label.data[:, :, z], self.multiple, mode="constant"),
                    heatmap=pad_to_multiple(case.heatmaps.data[:, :, z], self.multiple, mode="constant"),
                )
            )
        return patches


def learning_rate_at(step: int, cfg: TrainConfig) -> float:
    """Step-decayed learning rate at a 0-based iteration.

    The rate is multiplied by a constant factor every ``lr_step_iterations`` iterations,
    with the factor chosen so the last iteration of the schedule runs at ``lr_end``.
    Schedules shorter than one decay interval keep ``lr_start``.
    """
    decays = (cfg.total_steps - 1) // cfg.lr_step_iterations
    if decays == 0 or cfg.lr_end == cfg.lr_start:
        return cfg.lr_start
    k = step // cfg.lr_step_iterations
    if k >= decays:
        return cfg.lr_end
    gamma = (cfg.lr_end / cfg.lr_start) ** (1.0 / decays)
    return max(cfg.lr_end, cfg.lr_start * gamma**k)


def trainable_groups(phase: TrainPhase) -> set[ParameterGroup]:
    """Parameter groups updated in a phase."""
    if phase == TrainPhase.COLD_START:
        return {ParameterGroup.SHARED, ParameterGroup.SEG_BRANCH}
    return set(ParameterGroup)


def draw_batch(
    cases: list[TrainingCase], sampler: PatchSampler, cfg: TrainConfig, step: int
) -> PatchBatch:
    """Draw the batch of one step; the batch depends only on the seed and step."""
    rng = numpy_rng(cfg.seed, "batch", step)
    counts = Counter(int(i) for i in rng.integers(0, len(cases), size=cfg.batch_size))
    patches: list[TrainingPatch] = []
    for index in sorted(counts):
        patches.extend(
            sampler.sample(cases[index], counts[index], derive_seed(cfg.seed, "patches", step, index))
        )
    return PatchBatch(
        inputs=torch.from_numpy(np.stack([p.stack.data for p in patches]).astype(np.float32)),
        masks=torch.from_numpy(np.stack([p.mask for p in patches]).astype(np.float32)),
        heatmaps=torch.from_numpy(np.stack([p.heatmap for p in patches]).astype(np.float32)),
    )


def validate(state: ModelState, cases: list[TrainingCase], cfg: TrainConfig) -> MetricsReport:
    """Infer every validation region and evaluate it against its label."""
    pairs = [(case.case_id, case.label, infer(state, case.image, cfg)[0]) for case in cases]
    return evaluate_cases(pairs, metadata=RunMetadata(topology=state.cfg.label(), seed=cfg.seed))


def _append_loss_rows(path: Path, records: list[StepRecord]) -> None:
    rows = [
        {
            "step": r.step,
            **r.losses.model_dump(),
            "lr": r.lr,
            "phase": r.phase.value,
        }
        for r in records
    ]
    pd.DataFrame(rows, columns=LOSS_COLUMNS).to_csv(
        path, mode="a", header=not path.exists(), index=False
    )


def train(
    state: ModelState,
    cases: list[TrainingCase],
    cfg: TrainConfig,
    run_dir: str | Path | None = None,
    validation_cases: list[TrainingCase] | None = None,
    sampler: PatchSampler | None = None,
) -> tuple[ModelState, TrainHistory]:
    """Train a model with SGD, cold-starting on the segmentation objective.

    During the first ``cfg.cold_start_epochs`` epochs only the shared trunk and the
    segmentation branch receive gradients; contour-branch and TCL parameters stay
    bit-identical.

    Args:
        state: Model to train in place
        cases: Training cases
        cfg: Training configuration
        run_dir: Directory for the loss CSV and rolling checkpoint; nothing is written when None
        validation_cases: Cases evaluated every ``cfg.validation_interval`` epochs
        sampler: Patch source, random organ patches by default

    Returns:
        The trained model and its history

    Raises:
        GeometryError: If there are no training cases
        TopologyError: If the model's stack depth disagrees with ``cfg.slices``
        DivergenceError: If a loss component becomes NaN or infinite
    """
    if not cases:
        msg = "Training needs at least one case"
        raise GeometryError(msg)
    if state.cfg.in_slices != cfg.slices:
        msg = f"Model expects {state.cfg.in_slices}-slice stacks, training config uses {cfg.slices}"
        raise TopologyError(msg)

    torch.use_deterministic_algorithms(True, warn_only=True)
    sampler = sampler or RegionPatchSampler(cfg.patch_size, cfg.slices)
    network = state.network
    device = next(network.parameters()).device
    optimizer = torch.optim.SGD(
        network.parameters(), lr=cfg.lr_start, momentum=cfg.momentum, weight_decay=0.0
    )
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: learning_rate_at(step, cfg) / cfg.lr_start
    )

    out_dir = Path(run_dir) if run_dir is not None else None
    loss_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        loss_path = out_dir / LOSS_HISTORY_FILE
        loss_path.unlink(missing_ok=True)
    last_checkpoint: Path | None = None

    history = TrainHistory()
    train_logger = logger.bind(topology=state.cfg.label(), seed=cfg.seed)
    step = 0
    with tracer.start_as_current_span(
        "train", attributes={"topology": state.cfg.label(), "seed": cfg.seed}
    ):
        for epoch in range(cfg.epochs):
            phase = cfg.phase_for_epoch(epoch)
            state.set_trainable(trainable_groups(phase))
            state.train()
            epoch_records: list[StepRecord] = []

            for _ in range(cfg.steps_per_epoch):
                batch = draw_batch(cases, sampler, cfg, step)
                lr = optimizer.param_groups[0]["lr"]
                optimizer.zero_grad(set_to_none=True)
                output = state.forward(batch.inputs.to(device))
                try:
                    terms = compute_losses(
                        output,
                        batch.masks.to(device),
                        batch.heatmaps.to(device),
                        cfg.weights,
                        state,
                        phase,
                    )
                except LossValueError as e:
                    if loss_path is not None:
                        _append_loss_rows(loss_path, epoch_records)
                    msg = f"Training diverged at step {step}: {e}"
                    raise DivergenceError(
                        msg, str(last_checkpoint) if last_checkpoint is not None else None
                    ) from e
                terms.total.backward()
                optimizer.step()
                scheduler.step()

                epoch_records.append(
                    StepRecord(step=step, epoch=epoch, phase=phase, lr=lr, losses=terms.to_breakdown())
                )
                step += 1

            history.steps.extend(epoch_records)
            if loss_path is not None:
                _append_loss_rows(loss_path, epoch_records)
            train_logger.info(
                "Epoch finished",
                epoch=epoch,
                phase=phase.value,
                mean_loss=float(np.mean([r.losses.total for r in epoch_records])),
                lr=epoch_records[-1].lr,
            )

            if out_dir is not None and (epoch + 1) % cfg.checkpoint_interval == 0:
                last_checkpoint = save_checkpoint(
                    out_dir / LAST_CHECKPOINT_FILE,
                    state,
                    {"epoch": epoch, "step": step, "seed": cfg.seed},
                )
            if (
                validation_cases
                and cfg.validation_interval
                and (epoch + 1) % cfg.validation_interval == 0
            ):
                report = validate(state, validation_cases, cfg)
                history.validation.append(EpochValidation(epoch=epoch, report=report))
                train_logger.info(
                    "Validation",
                    epoch=epoch,
                    dsc=report.aggregates["dsc"].mean if "dsc" in report.aggregates else None,
                )

    state.set_trainable(set(ParameterGroup))
    return state, history
