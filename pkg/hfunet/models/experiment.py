"""Experiment configuration sections, sweep grid cells and cell results."""

import itertools
import re
from enum import Enum
from pathlib import Path
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from hfunet.models.phantom import PhantomCohortSpec
from hfunet.models.presets import TopologyPreset, get_preset_config
from hfunet.models.reports import MetricsReport
from hfunet.models.topology import AttentionMode, Family, TopologyConfig
from hfunet.models.training import TrainConfig
from hfunet.models.volume import Spacing

Alpha = Annotated[float, Field(ge=0.0, le=1.0)]


class DataSection(BaseModel):
    """Phantom cohort and its train/validation/test split."""

    model_config = ConfigDict(extra="forbid")

    cohort: PhantomCohortSpec = Field(default_factory=PhantomCohortSpec)
    train_cases: int = Field(default=8, ge=1)
    validation_cases: int = Field(default=2, ge=0)
    test_cases: int = Field(default=4, ge=1)
    seed: int = Field(default=0, ge=0, description="Cohort seed")
    target_spacing: Spacing = (1.0, 1.0, 1.0)
    body_threshold: float = -0.95

    @property
    def total_cases(self) -> int:
        """Cases generated for all splits."""
        return self.train_cases + self.validation_cases + self.test_cases


class TopologySection(BaseModel):
    """Topology grid: either named presets or the product of family/tcl/alpha/attention axes."""

    model_config = ConfigDict(extra="forbid")

    presets: list[TopologyPreset] | None = None
    families: list[Family] = Field(default_factory=lambda: [Family.HF], min_length=1)
    tcl_counts: list[int] = Field(default_factory=lambda: [6], min_length=1)
    alpha: Alpha | None = Field(default=None, description="Single alpha, overrides alphas")
    alphas: list[Alpha] = Field(default_factory=lambda: [0.2], min_length=1)
    attentions: list[AttentionMode] = Field(default_factory=lambda: [AttentionMode.NONE], min_length=1)
    attention_averaged: bool = False
    base_width: int = Field(default=8, ge=1)
    depth: int = Field(default=3, ge=1, le=6)
    bottleneck_channels: int | None = Field(default=None, ge=1)
    normalization: bool = False

    def alpha_values(self) -> list[float]:
        """The alpha axis."""
        return [self.alpha] if self.alpha is not None else list(self.alphas)

    def grid(self, in_slices: int = 3) -> list[TopologyConfig]:
        """Topologies of the grid in axis order.

        Raises:
            ValueError: If an axis combination is not a valid topology
        """
        common = {
            "base_width": self.base_width,
            "depth": self.depth,
            "in_slices": in_slices,
            "bottleneck_channels": self.bottleneck_channels,
            "normalization": self.normalization,
            "attention_averaged": self.attention_averaged,
        }
        if self.presets:
            return [
                TopologyConfig.model_validate(
                    {**get_preset_config(preset).config.model_dump(), **common}
                )
                for preset in self.presets
            ]
        configs = []
        for family, tcl_count, alpha, attention in itertools.product(
            self.families, self.tcl_counts, self.alpha_values(), self.attentions
        ):
            configs.append(
                TopologyConfig(
                    family=family, tcl_count=tcl_count, alpha=alpha, attention=attention, **common
                )
            )
        return configs

    @property
    def cardinality(self) -> int:
        """Number of topologies, the product of the axis lengths."""
        if self.presets:
            return len(self.presets)
        return len(self.families) * len(self.tcl_counts) * len(self.alpha_values()) * len(self.attentions)


class TrainSection(TrainConfig):
    """Training options plus the seed axis of the grid."""

    seeds: list[Annotated[int, Field(ge=0)]] | None = Field(
        default=None, description="Seeds to repeat every topology with, [seed] when unset"
    )

    def seed_values(self) -> list[int]:
        """The seed axis."""
        return list(self.seeds) if self.seeds else [self.seed]

    def for_seed(self, seed: int) -> TrainConfig:
        """Plain training config of one cell."""
        return TrainConfig.model_validate({**self.model_dump(exclude={"seeds"}), "seed": seed})


class EvalSection(BaseModel):
    """Evaluation options."""

    model_config = ConfigDict(extra="forbid")

    localization: Literal["network", "ground_truth"] = Field(
        default="network", description="Crop test regions around the localizer or the label centroid"
    )
    localizer_downsample: int = Field(default=4, ge=1)
    plots: bool = True
    markdown: bool = True


class ExperimentCell(BaseModel):
    """One (topology, seed) run of a sweep."""

    index: int
    topology: TopologyConfig
    train: TrainConfig

    @property
    def seed(self) -> int:
        """Training seed."""
        return self.train.seed

    @property
    def cell_id(self) -> str:
        """Directory-safe identifier, unique within the sweep."""
        name = re.sub(r"[^A-Za-z0-9.-]+", "-", self.topology.label())
        return f"{self.index:03d}-{name}-a{self.topology.alpha:g}-s{self.seed}"


class ExperimentConfig(BaseModel):
    """A validated experiment file."""

    model_config = ConfigDict(extra="forbid")

    name: str = Field(default="experiment", pattern=r"^[A-Za-z0-9_.-]+$")
    output_dir: Path = Path("runs")
    data: DataSection = Field(default_factory=DataSection)
    topology: TopologySection = Field(default_factory=TopologySection)
    train: TrainSection = Field(default_factory=TrainSection)
    eval: EvalSection = Field(default_factory=EvalSection)

    @model_validator(mode="after")
    def validate_consistency(self) -> "ExperimentConfig":
        """Validate the output directory, patch geometry and every grid topology."""
        ancestor = self.output_dir.absolute()
        while not ancestor.exists():
            ancestor = ancestor.parent
        if not ancestor.is_dir():
            msg = f"output_dir {self.output_dir} cannot be created below the file {ancestor}"
            raise ValueError(msg)
        divisor = 2**self.topology.depth
        if self.train.patch_size % divisor:
            msg = f"train.patch_size ({self.train.patch_size}) must be divisible by 2**depth = {divisor}"
            raise ValueError(msg)
        try:
            self.topology.grid(self.train.slices)
        except ValidationError as e:
            msg = f"topology grid has an invalid combination: {e.errors()[0]['msg']}"
            raise ValueError(msg)
        return self

    def cells(self) -> list[ExperimentCell]:
        """Every (topology, seed) cell in grid order."""
        cells = []
        for topology, seed in itertools.product(
            self.topology.grid(self.train.slices), self.train.seed_values()
        ):
            cells.append(
                ExperimentCell(index=len(cells), topology=topology, train=self.train.for_seed(seed))
            )
        return cells


class RunStatus(str, Enum):
    """Outcome of a sweep cell."""

    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class CellResult(BaseModel):
    """Outcome and artifacts of one cell."""

    cell_id: str
    topology: TopologyConfig
    seed: int
    status: RunStatus
    run_dir: Path | None = None
    report: MetricsReport | None = None
    error: str | None = None
    error_code: str | None = Field(default=None, description="Error code of the failure, e.g. divergence")
