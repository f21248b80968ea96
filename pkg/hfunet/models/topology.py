"""Declarative network topology descriptions."""

from enum import Enum
from typing import NamedTuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

MAX_TCL_COUNT = 6


class Family(str, Enum):
    """Architecture families of the topology comparison."""

    UNET = "unet"
    EB = "eb"  # early-branched
    LB = "lb"  # late-branched
    HF = "hf"  # hierarchically fused


class AttentionMode(str, Enum):
    """How TCL output is fed back into the branches."""

    NONE = "none"  # weighted residual with alpha
    CHANNEL = "channel"
    POSITION = "position"
    DUAL = "dual"


class ParameterGroup(str, Enum):
    """Owners of learnable parameters."""

    SHARED = "shared"
    SEG_BRANCH = "seg_branch"
    CONTOUR_BRANCH = "contour_branch"
    TCL_BLOCKS = "tcl_blocks"


class BlockKind(str, Enum):
    """Kinds of nodes in the forward graph."""

    ENCODER = "encoder"
    BOTTOM = "bottom"
    DECODER = "decoder"
    TCL = "tcl"
    HEAD = "head"


class BlockCounts(NamedTuple):
    """Fusion-block decomposition {shared + TCL}."""

    shared: int
    tcl: int


class TopologyConfig(BaseModel):
    """Sole input to the model builder."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    family: Family = Field(default=Family.HF, description="Architecture family")
    tcl_count: int = Field(
        default=0, ge=0, le=MAX_TCL_COUNT, description="Number of TCL blocks (hf only)"
    )
    alpha: float = Field(
        default=0.2, ge=0.0, le=1.0, description="Private-feature weight of the weighted residual"
    )
    attention: AttentionMode = Field(default=AttentionMode.NONE)
    attention_averaged: bool = Field(
        default=False, description="Use one copy of each residual in attention feedback"
    )
    base_width: int = Field(default=8, ge=1, description="Channels of the first level")
    depth: int = Field(default=3, ge=1, le=6, description="Down-sampling blocks")
    in_slices: int = Field(default=3, ge=1, description="Slices stacked as input channels")
    classes: int = Field(default=2, ge=2, description="Segmentation classes")
    bottleneck_channels: int | None = Field(
        default=None, ge=1, description="TCL bottleneck width, half the level width when unset"
    )
    normalization: bool = Field(default=False, description="Batch normalization after each conv")

    @model_validator(mode="after")
    def validate_family(self) -> "TopologyConfig":
        """Validate TCL usage against the family."""
        if self.in_slices % 2 == 0:
            msg = f"in_slices must be odd, got {self.in_slices}"
            raise ValueError(msg)
        if self.family == Family.HF:
            if not 1 <= self.tcl_count <= min(MAX_TCL_COUNT, self.total_levels - 1):
                msg = (
                    f"hf requires 1 <= tcl_count <= {min(MAX_TCL_COUNT, self.total_levels - 1)}, "
                    f"got {self.tcl_count}"
                )
                raise ValueError(msg)
        elif self.tcl_count != 0:
            msg = f"tcl_count must be 0 for family '{self.family.value}', got {self.tcl_count}"
            raise ValueError(msg)
        return self

    @property
    def total_levels(self) -> int:
        """Encoder, bottom and decoder block levels."""
        return 2 * self.depth + 1

    @property
    def has_contour_branch(self) -> bool:
        """Whether a contour regression output exists."""
        return self.family != Family.UNET

    def level_kind(self, level: int) -> BlockKind:
        """Kind of block at a 1-based level."""
        if level <= self.depth:
            return BlockKind.ENCODER
        if level == self.depth + 1:
            return BlockKind.BOTTOM
        return BlockKind.DECODER

    def level_channels(self, level: int) -> int:
        """Output channels of the block at a level."""
        return self.base_width * 2 ** self.level_scale(level)

    def level_scale(self, level: int) -> int:
        """Power of two the input resolution is divided by at a level."""
        if level <= self.depth + 1:
            return level - 1
        return self.total_levels - level

    def skip_level(self, level: int) -> int | None:
        """Encoder level whose output feeds a decoder level's skip connection."""
        if self.level_kind(level) != BlockKind.DECODER:
            return None
        return self.total_levels + 1 - level

    def split_levels(self) -> list[int]:
        """Levels with a separate block per branch."""
        if self.family == Family.EB:
            return list(range(2, self.total_levels + 1))
        if self.family == Family.HF:
            return list(range(self.total_levels - self.tcl_count + 1, self.total_levels + 1))
        return []

    def shared_levels(self) -> list[int]:
        """Levels with one block feeding both branches."""
        split = set(self.split_levels())
        return [level for level in range(1, self.total_levels + 1) if level not in split]

    def tcl_levels(self) -> list[int]:
        """Levels carrying a TCL block."""
        return self.split_levels() if self.family == Family.HF else []

    def label(self) -> str:
        """Short human readable method name."""
        if self.family != Family.HF:
            return {Family.UNET: "U-Net", Family.EB: "EB", Family.LB: "LB"}[self.family]
        name = f"HF-UNet-{self.tcl_count}"
        if self.attention != AttentionMode.NONE:
            suffix = {"channel": "cAtt", "position": "pAtt", "dual": "dAtt"}[self.attention.value]
            name = f"{name}-{suffix}"
        return name


class GraphNode(BaseModel):
    """One block of the forward graph."""

    level: int | None = Field(description="Block level, None for output heads")
    kind: BlockKind
    group: ParameterGroup
    in_channels: int
    out_channels: int
    scale: int = Field(description="Resolution is the input size divided by 2**scale")
    skip_from: int | None = Field(default=None, description="Encoder level of the skip input")


def count_blocks(cfg: TopologyConfig) -> BlockCounts:
    """Fusion-block decomposition {shared + TCL}.

    A plain U-Net counts no fusion blocks; otherwise every level before the first
    branched level is shared, and hf levels after the split carry TCL blocks.

    Args:
        cfg: Topology description

    Returns:
        (shared blocks, TCL blocks)
    """
    if cfg.family == Family.UNET:
        return BlockCounts(shared=0, tcl=0)
    return BlockCounts(shared=len(cfg.shared_levels()), tcl=len(cfg.tcl_levels()))
