"""Volume, label volume and 2.5D slice-stack models."""

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Spacing = tuple[float, float, float]


def as_spacing(values: Any) -> Spacing:
    """Round a spacing triple to the float32 values the volume file stores."""
    sx, sy, sz = (float(np.float32(s)) for s in values)
    return (sx, sy, sz)


class Volume(BaseModel):
    """3D scalar grid indexed ``[x, y, z]`` with per-axis spacing in mm.

    Image intensities are stored as float32, which is also the on-disk payload type.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    spacing: Spacing = Field(description="Millimetres per voxel along x, y, z")
    data: np.ndarray = Field(description="Voxel values, shape (nx, ny, nz)")

    @field_validator("spacing")
    @classmethod
    def validate_spacing(cls, v: Spacing) -> Spacing:
        """Validate spacing values are positive and hold them at float32 precision."""
        spacing = as_spacing(v)
        if any(not np.isfinite(s) or s <= 0 for s in spacing):
            msg = f"Spacing must be positive and finite on every axis, got {v}"
            raise ValueError(msg)
        return spacing

    @field_validator("data", mode="before")
    @classmethod
    def validate_data(cls, v: Any) -> np.ndarray:
        """Validate voxel data is a non-empty 3D array."""
        array = np.asarray(v, dtype=np.float32)
        if array.ndim != 3 or min(array.shape) < 1:
            msg = f"Volume data must be 3D with every dimension >= 1, got shape {array.shape}"
            raise ValueError(msg)
        return array

    @property
    def dims(self) -> tuple[int, int, int]:
        """Voxel counts (nx, ny, nz)."""
        nx, ny, nz = self.data.shape
        return (int(nx), int(ny), int(nz))

    def same_geometry(self, other: "Volume | LabelVolume") -> bool:
        """Check dims and spacing agree with another volume."""
        return self.dims == other.dims and self.spacing == other.spacing

    def __eq__(self, other: object) -> bool:
        """Compare spacing and payload exactly."""
        if not isinstance(other, Volume) or isinstance(other, LabelVolume) != isinstance(
            self, LabelVolume
        ):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
        )


class LabelVolume(Volume):
    """Binary ground-truth or prediction grid; values strictly 0 or 1 (uint8)."""

    @field_validator("data", mode="before")
    @classmethod
    def validate_data(cls, v: Any) -> np.ndarray:
        """Validate label data is a binary 3D array."""
        array = np.asarray(v)
        if array.ndim != 3 or min(array.shape) < 1:
            msg = f"Label data must be 3D with every dimension >= 1, got shape {array.shape}"
            raise ValueError(msg)
        if array.dtype == np.bool_:
            return array.astype(np.uint8)
        if not np.isin(array, (0, 1)).all():
            msg = "Label data must be strictly binary (0/1)"
            raise ValueError(msg)
        return array.astype(np.uint8)

    @property
    def voxel_count(self) -> int:
        """Number of foreground voxels."""
        return int(self.data.sum(dtype=np.int64))

    def bounding_box(self) -> tuple[tuple[int, int], ...] | None:
        """Inclusive (lo, hi) foreground bounds per axis, or None when empty."""
        coords = np.nonzero(self.data)
        if coords[0].size == 0:
            return None
        return tuple((int(axis.min()), int(axis.max())) for axis in coords)


class SliceStack(BaseModel):
    """k consecutive axial slices used as channels to predict the middle slice."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: np.ndarray = Field(description="Slices as channels, shape (k, p, p)")
    offset: tuple[int, int, int] = Field(
        description="Crop origin (x0, y0) and middle slice index z in the source volume"
    )

    @field_validator("data", mode="before")
    @classmethod
    def validate_data(cls, v: Any) -> np.ndarray:
        """Validate the stack has an odd number of equally sized slices."""
        array = np.asarray(v, dtype=np.float32)
        if array.ndim != 3:
            msg = f"Slice stack must have shape (k, p, p), got {array.shape}"
            raise ValueError(msg)
        if array.shape[0] % 2 == 0:
            msg = f"Slice stack depth must be odd, got {array.shape[0]}"
            raise ValueError(msg)
        return array

    @property
    def depth(self) -> int:
        """Number of slices k."""
        return int(self.data.shape[0])

    @property
    def patch_size(self) -> tuple[int, int]:
        """In-plane extent of every slice."""
        return (int(self.data.shape[1]), int(self.data.shape[2]))


class TrainingPatch(BaseModel):
    """A 2.5D input stack with its middle-slice mask and heatmap targets."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    stack: SliceStack
    mask: np.ndarray = Field(description="Binary middle-slice target, shape (p, p)")
    heatmap: np.ndarray = Field(description="Contour heatmap middle-slice target, shape (p, p)")

    @model_validator(mode="after")
    def validate_targets(self) -> "TrainingPatch":
        """Validate both targets match the stack's in-plane size."""
        if self.mask.shape != self.stack.patch_size or self.heatmap.shape != self.stack.patch_size:
            msg = "Patch targets must match the stack's in-plane size"
            raise ValueError(msg)
        return self
