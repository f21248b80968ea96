"""Contour point sets and contour-sensitive heatmap targets."""

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from hfunet.models.volume import Spacing, Volume

DEFAULT_SIGMA = 5.0


class ContourSet(BaseModel):
    """Boundary pixels of one axial slice, in row-major order without duplicates."""

    slice_index: int = Field(default=0, ge=0)
    points: list[tuple[int, int]] = Field(default_factory=list)

    def __len__(self) -> int:
        """Number of contour pixels."""
        return len(self.points)

    def as_array(self) -> np.ndarray:
        """Points as an (n, 2) integer array."""
        return np.asarray(self.points, dtype=np.int64).reshape(-1, 2)


class ContourHeatmap(BaseModel):
    """Non-negative per-slice regression target built from truncated contour Gaussians."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray = Field(description="Heatmap over the slice grid")
    sigma: float = Field(gt=0)
    truncation: float = Field(gt=0)

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v: Any) -> np.ndarray:
        """Validate a non-negative 2D grid."""
        array = np.asarray(v, dtype=np.float64)
        if array.ndim != 2:
            msg = f"Heatmap must be 2D, got shape {array.shape}"
            raise ValueError(msg)
        if (array < 0).any():
            msg = "Heatmap values must be non-negative"
            raise ValueError(msg)
        return array


class HeatmapStack(BaseModel):
    """Per-axial-slice heatmaps stacked along z, same geometry as the label volume."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: np.ndarray = Field(description="Heatmap values, shape (nx, ny, nz), float64")
    spacing: Spacing
    sigma: float = Field(default=DEFAULT_SIGMA, gt=0)
    truncation: float = Field(default=DEFAULT_SIGMA, gt=0)

    @property
    def dims(self) -> tuple[int, int, int]:
        """Voxel counts (nx, ny, nz)."""
        nx, ny, nz = self.data.shape
        return (int(nx), int(ny), int(nz))

    def slice(self, index: int) -> ContourHeatmap:
        """Get the heatmap of one axial slice."""
        return ContourHeatmap(
            values=self.data[:, :, index], sigma=self.sigma, truncation=self.truncation
        )

    def to_volume(self) -> Volume:
        """Convert to a float32 image volume for storage."""
        return Volume(spacing=self.spacing, data=self.data)
