"""Synthetic phantom specifications."""

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

ORGAN_MARGIN_VOXELS = 4


class PhantomSpec(BaseModel):
    """Perturbed-ellipsoid organ inside a body slab, with low tissue contrast."""

    model_config = ConfigDict(extra="forbid")

    dims: tuple[int, int, int] = Field(default=(96, 96, 80), description="Voxel counts")
    spacing: tuple[float, float, float] = Field(
        default=(1.0, 1.0, 1.0), description="Millimetres per voxel"
    )
    organ_center: tuple[float, float, float] | None = Field(
        default=None, description="Organ centre in voxel coordinates (volume centre when unset)"
    )
    radii: tuple[float, float, float] = Field(
        default=(20.0, 14.0, 16.0), description="Ellipsoid semi-axes in mm"
    )
    radial_perturbation_amplitude: float = Field(
        default=0.15, ge=0.0, lt=1.0, description="Relative radial deformation amplitude"
    )
    perturbation_modes: int = Field(
        default=6, ge=1, le=64, description="Number of band-limited angular noise components"
    )
    perturbation_max_frequency: float = Field(
        default=2.5, gt=0.0, description="Largest angular frequency of the radial noise"
    )
    background_intensity: float = Field(default=0.0, description="Soft tissue intensity")
    air_intensity: float = Field(default=-1.0, description="Intensity outside the body")
    contrast_delta: float = Field(default=0.12, description="Organ minus tissue intensity")
    noise_sigma: float = Field(default=0.08, ge=0.0, description="Gaussian noise std in the body")
    boundary_blur_sigma: float = Field(default=1.0, ge=0.0, description="Label blur in voxels")
    body_margin: int = Field(
        default=2, ge=0, description="In-plane air frame around the body slab, voxels"
    )
    seed: int = Field(default=0, ge=0, description="Random seed")

    @field_validator("dims")
    @classmethod
    def validate_dims(cls, v: tuple[int, int, int]) -> tuple[int, int, int]:
        """Validate every dimension is at least one voxel."""
        if any(n < 1 for n in v):
            msg = f"Phantom dims must be >= 1, got {v}"
            raise ValueError(msg)
        return v

    @field_validator("spacing", "radii")
    @classmethod
    def validate_positive(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        """Validate spacing and radii are positive."""
        if any(x <= 0 for x in v):
            msg = f"Values must be positive, got {v}"
            raise ValueError(msg)
        return v

    @model_validator(mode="after")
    def validate_body_margin(self) -> "PhantomSpec":
        """Validate the body slab is non-empty."""
        if 2 * self.body_margin >= min(self.dims[0], self.dims[1]):
            msg = "Body margin leaves no tissue in-plane"
            raise ValueError(msg)
        return self

    def center(self) -> tuple[float, float, float]:
        """Organ centre in voxel coordinates."""
        if self.organ_center is not None:
            return self.organ_center
        return (
            (self.dims[0] - 1) / 2.0,
            (self.dims[1] - 1) / 2.0,
            (self.dims[2] - 1) / 2.0,
        )

    def radii_voxels(self) -> tuple[float, float, float]:
        """Largest organ extent per axis in voxels, perturbation included."""
        scale = 1.0 + self.radial_perturbation_amplitude
        return (
            self.radii[0] * scale / self.spacing[0],
            self.radii[1] * scale / self.spacing[1],
            self.radii[2] * scale / self.spacing[2],
        )

    def fit_problems(self) -> list[str]:
        """List the axes where the organ violates the volume margin.

        Returns:
            Explanations, empty when the organ fits
        """
        problems = []
        for axis, (c, r, n) in enumerate(zip(self.center(), self.radii_voxels(), self.dims, strict=True)):
            name = "xyz"[axis]
            lo, hi = c - r, c + r
            if lo < ORGAN_MARGIN_VOXELS or hi > n - 1 - ORGAN_MARGIN_VOXELS:
                problems.append(
                    f"axis {name}: organ spans [{lo:.1f}, {hi:.1f}] voxels but must stay within "
                    f"[{ORGAN_MARGIN_VOXELS}, {n - 1 - ORGAN_MARGIN_VOXELS}] of a {n}-voxel extent"
                )
        return problems


class PhantomCohortSpec(BaseModel):
    """A population of phantoms sharing a base spec, with per-case shape variance."""

    model_config = ConfigDict(extra="forbid")

    base: PhantomSpec = Field(default_factory=PhantomSpec)
    radius_jitter: float = Field(
        default=0.15, ge=0.0, lt=0.5, description="Relative per-axis radius variation"
    )
    center_jitter: float = Field(
        default=6.0, ge=0.0, description="Maximum centre offset per axis in voxels"
    )
