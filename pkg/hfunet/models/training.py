"""Loss weights, training configuration and training history models."""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from hfunet.models.reports import MetricsReport


class LossWeights(BaseModel):
    """Multi-task loss weights and the L2 regularizer coefficient."""

    model_config = ConfigDict(extra="forbid")

    lambda1: float = Field(default=1.0, ge=0.0, description="Classification weight")
    lambda2: float = Field(default=0.01, ge=0.0, description="Contour regression weight")
    lambda3: float = Field(default=1.0, ge=0.0, description="TCL consistency weight")
    weight_decay: float = Field(default=1e-4, ge=0.0, description="Coefficient of sum(theta^2) / 2")


class LossBreakdown(BaseModel):
    """Loss components of one step; total = l1 l_cls + l2 l_reg + l3 l_tcl + l_regularizer."""

    l_cls: float
    l_reg: float
    l_tcl: float
    l_regularizer: float
    total: float


class TrainPhase(str, Enum):
    """Optimization phase."""

    COLD_START = "cold_start"  # segmentation branch only
    JOINT = "joint"


class TrainConfig(BaseModel):
    """Patch training configuration."""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=20, ge=1)
    steps_per_epoch: int = Field(default=100, ge=1, description="Optimizer steps per epoch")
    batch_size: int = Field(default=64, ge=1)
    lr_start: float = Field(default=0.01, gt=0.0)
    lr_end: float = Field(default=0.0001, gt=0.0)
    lr_step_iterations: int = Field(
        default=200, ge=1, description="Iterations between learning-rate decays"
    )
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    cold_start_epochs: int = Field(default=1, ge=0)
    weights: LossWeights = Field(default_factory=LossWeights)
    seed: int = Field(default=0, ge=0)
    crop_size: int = Field(default=64, ge=8, description="Edge of the cubic region cropped around the organ")
    patch_size: int = Field(default=64, ge=8, description="In-plane patch edge")
    slices: int = Field(default=3, ge=1, description="Slices per 2.5D stack")
    sigma: float = Field(default=5.0, gt=0.0, description="Contour Gaussian width in pixels")
    validation_interval: int = Field(
        default=1, ge=0, description="Epochs between validation reports, 0 disables"
    )
    checkpoint_interval: int = Field(
        default=1, ge=1, description="Epochs between rolling checkpoints"
    )

    @model_validator(mode="after")
    def validate_schedule(self) -> "TrainConfig":
        """Validate learning-rate, phase and geometry constraints."""
        if self.lr_end > self.lr_start:
            msg = f"lr_end ({self.lr_end}) must not exceed lr_start ({self.lr_start})"
            raise ValueError(msg)
        if self.cold_start_epochs >= self.epochs:
            msg = f"cold_start_epochs ({self.cold_start_epochs}) must be below epochs ({self.epochs})"
            raise ValueError(msg)
        if self.patch_size > self.crop_size:
            msg = f"patch_size ({self.patch_size}) must fit in crop_size ({self.crop_size})"
            raise ValueError(msg)
        if self.slices % 2 == 0:
            msg = f"slices must be odd, got {self.slices}"
            raise ValueError(msg)
        return self

    @property
    def total_steps(self) -> int:
        """Optimizer steps over all epochs."""
        return self.epochs * self.steps_per_epoch

    def phase_for_epoch(self, epoch: int) -> TrainPhase:
        """Phase of a 0-based epoch."""
        return TrainPhase.COLD_START if epoch < self.cold_start_epochs else TrainPhase.JOINT


class StepRecord(BaseModel):
    """Losses and learning rate of one optimizer step."""

    step: int
    epoch: int
    phase: TrainPhase
    lr: float
    losses: LossBreakdown


class EpochValidation(BaseModel):
    """Validation report at the end of an epoch."""

    epoch: int
    report: MetricsReport


class TrainHistory(BaseModel):
    """Per-step losses and per-epoch validation."""

    steps: list[StepRecord] = Field(default_factory=list)
    validation: list[EpochValidation] = Field(default_factory=list)
