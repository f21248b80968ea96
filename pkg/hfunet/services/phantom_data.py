"""Synthetic phantom generation, preprocessing and 2.5D patch sampling."""

from typing import NamedTuple

import numpy as np
from scipy.ndimage import affine_transform, gaussian_filter

from hfunet.errors import GeometryError, PhantomSpecError
from hfunet.logging_config import get_logger
from hfunet.models.contours import HeatmapStack
from hfunet.models.phantom import PhantomCohortSpec, PhantomSpec
from hfunet.models.volume import (
    LabelVolume,
    SliceStack,
    Spacing,
    TrainingPatch,
    Volume,
    as_spacing,
)
from hfunet.services.seeding import derive_seed, numpy_rng

logger = get_logger(__name__)

BODY_CROP_PADDING = 2
DEFAULT_BODY_THRESHOLD = -0.95
DEFAULT_TARGET_SPACING: Spacing = (1.0, 1.0, 1.0)


class CropBox(NamedTuple):
    """Half-open voxel box [lo, hi) per axis."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def slices(self) -> tuple[slice, slice, slice]:
        """Numpy slices selecting the box."""
        return tuple(slice(a, b) for a, b in zip(self.lo, self.hi, strict=True))  # type: ignore[return-value]


class PreprocessedCase(NamedTuple):
    """Image and label after resampling, body crop and normalization."""

    image: Volume
    label: LabelVolume
    crop: CropBox


def _radial_boundary(
    spec: PhantomSpec, unit: np.ndarray, rng: np.random.Generator
) -> np.ndarray | float:
    """Band-limited angular deformation of the unit ellipsoid boundary."""
    amplitude = spec.radial_perturbation_amplitude
    if amplitude == 0:
        return 1.0

    modes = spec.perturbation_modes
    directions = rng.normal(size=(modes, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    frequencies = rng.uniform(0.5, spec.perturbation_max_frequency, size=modes)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=modes)
    weights = rng.uniform(0.5, 1.0, size=modes)

    # unit has shape (3, nx, ny, nz); projections onto each direction lie in [-1, 1]
    projections = np.tensordot(directions, unit, axes=(1, 0))
    waves = np.cos(frequencies[:, None, None, None] * projections + phases[:, None, None, None])
    noise = np.tensordot(weights, waves, axes=(0, 0)) / weights.sum()
    return 1.0 + amplitude * noise


def generate_phantom(spec: PhantomSpec) -> tuple[Volume, LabelVolume]:
    """Generate a low-contrast phantom and its analytic ground truth.

    The organ is the interior of an ellipsoid whose radius is deformed by smooth angular
    noise. Intensities are air outside the body slab, and inside it background plus
    ``contrast_delta`` times the blurred label plus Gaussian noise.

    Args:
        spec: Phantom description; the seed fixes every random draw

    Returns:
        Image volume and binary label volume with identical geometry

    Raises:
        PhantomSpecError: If the organ does not fit inside the volume with a 4-voxel margin
    """
    problems = spec.fit_problems()
    if problems:
        msg = "Organ does not fit inside the volume: " + "; ".join(problems)
        raise PhantomSpecError(msg)

    rng = np.random.default_rng(spec.seed)
    nx, ny, nz = spec.dims
    axes = [
        (np.arange(n, dtype=np.float64) - c) * s / r
        for n, c, s, r in zip(spec.dims, spec.center(), spec.spacing, spec.radii, strict=True)
    ]
    ex, ey, ez = np.meshgrid(*axes, indexing="ij")
    squared_radius = ex**2 + ey**2 + ez**2
    radius = np.sqrt(squared_radius)

    if spec.radial_perturbation_amplitude > 0:
        safe_radius = np.where(radius > 0, radius, 1.0)
        unit = np.stack([ex, ey, ez]) / safe_radius
        unit[:, radius == 0] = 0.0
        boundary = _radial_boundary(spec, unit, rng)
    else:
        boundary = 1.0
    label = squared_radius <= np.square(boundary)

    soft_label = label.astype(np.float64)
    if spec.boundary_blur_sigma > 0:
        soft_label = gaussian_filter(soft_label, sigma=spec.boundary_blur_sigma)

    m = spec.body_margin
    body = np.zeros(spec.dims, dtype=bool)
    body[m : nx - m, m : ny - m, :] = True

    image = np.full(spec.dims, spec.air_intensity, dtype=np.float64)
    tissue = spec.background_intensity + spec.contrast_delta * soft_label[body]
    if spec.noise_sigma > 0:
        tissue = tissue + rng.normal(0.0, spec.noise_sigma, size=tissue.shape)
    image[body] = tissue

    logger.debug(
        "Generated phantom",
        dims=spec.dims,
        seed=spec.seed,
        organ_voxels=int(label.sum()),
    )
    return (
        Volume(spacing=spec.spacing, data=image),
        LabelVolume(spacing=spec.spacing, data=label.astype(np.uint8)),
    )


def cohort_specs(cohort: PhantomCohortSpec, count: int, seed: int) -> list[PhantomSpec]:
    """Derive per-case phantom specs with inter-subject shape variance.

    Args:
        cohort: Base spec and jitter ranges
        count: Number of cases
        seed: Root seed; case ``i`` uses the sub-seed ("phantom", i)

    Returns:
        One fully specified PhantomSpec per case
    """
    specs = []
    base = cohort.base
    base_center = np.asarray(base.center())
    for index in range(count):
        case_seed = derive_seed(seed, "phantom", index)
        rng = numpy_rng(seed, "phantom-shape", index)
        scale = 1.0 + rng.uniform(-cohort.radius_jitter, cohort.radius_jitter, size=3)
        shift = rng.uniform(-cohort.center_jitter, cohort.center_jitter, size=3)
        specs.append(
            base.model_copy(
                update={
                    "radii": tuple(float(r) for r in np.asarray(base.radii) * scale),
                    "organ_center": tuple(float(c) for c in base_center + shift),
                    "seed": case_seed,
                }
            )
        )
    return specs


def resample_volume(v: Volume, target_spacing: Spacing, order: int = 1) -> Volume:
    """Resample onto a grid with the requested spacing, sharing the voxel-0 origin.

    Args:
        v: Source volume
        target_spacing: Output mm per voxel
        order: Interpolation order (1 trilinear, 0 nearest)

    Returns:
        Resampled volume; labels keep their type when ``order`` is 0
    """
    if as_spacing(target_spacing) == v.spacing:
        return v.model_copy(deep=True)

    ratios = np.asarray(target_spacing, dtype=np.float64) / np.asarray(v.spacing)
    new_dims = tuple(
        int(np.floor((n - 1) / ratio + 1e-9)) + 1 for n, ratio in zip(v.dims, ratios, strict=True)
    )
    resampled = affine_transform(
        v.data.astype(np.float64),
        matrix=ratios,
        offset=0.0,
        output_shape=new_dims,
        order=order,
        mode="nearest",
    )
    return type(v)(spacing=tuple(target_spacing), data=resampled)


def body_crop_box(v: Volume, body_threshold: float) -> CropBox:
    """Bounding box of voxels above the body threshold, padded by two voxels.

    Raises:
        GeometryError: If no voxel exceeds the threshold
    """
    coords = np.nonzero(v.data > body_threshold)
    if coords[0].size == 0:
        msg = f"Empty foreground: no voxel exceeds body threshold {body_threshold}"
        raise GeometryError(msg)
    lo = tuple(max(int(axis.min()) - BODY_CROP_PADDING, 0) for axis in coords)
    hi = tuple(
        min(int(axis.max()) + BODY_CROP_PADDING + 1, n) for axis, n in zip(coords, v.dims, strict=True)
    )
    return CropBox(lo=lo, hi=hi)  # type: ignore[arg-type]


def normalize_intensities(data: np.ndarray) -> np.ndarray:
    """Min-max normalize to [-1, 1]; a constant input maps to all zeros."""
    values = data.astype(np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return np.clip(2.0 * (values - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def preprocess(
    v: Volume,
    target_spacing: Spacing = DEFAULT_TARGET_SPACING,
    body_threshold: float = DEFAULT_BODY_THRESHOLD,
) -> Volume:
    """Resample, crop to the body and normalize intensities into [-1, 1].

    Args:
        v: Raw image volume
        target_spacing: Common resolution in mm
        body_threshold: Intensity separating body from air

    Returns:
        Preprocessed image volume
    """
    resampled = resample_volume(v, target_spacing)
    crop = body_crop_box(resampled, body_threshold)
    return Volume(spacing=resampled.spacing, data=normalize_intensities(resampled.data[crop.slices()]))


def preprocess_case(
    image: Volume,
    label: LabelVolume,
    target_spacing: Spacing = DEFAULT_TARGET_SPACING,
    body_threshold: float = DEFAULT_BODY_THRESHOLD,
) -> PreprocessedCase:
    """Preprocess an image and carry its label through the same geometry.

    Raises:
        GeometryError: If image and label disagree in geometry
    """
    if not image.same_geometry(label):
        msg = f"Image {image.dims} and label {label.dims} geometry differ"
        raise GeometryError(msg)
    resampled = resample_volume(image, target_spacing)
    resampled_label = resample_volume(label, target_spacing, order=0)
    crop = body_crop_box(resampled, body_threshold)
    return PreprocessedCase(
        image=Volume(
            spacing=resampled.spacing, data=normalize_intensities(resampled.data[crop.slices()])
        ),
        label=LabelVolume(
            spacing=resampled.spacing, data=resampled_label.data[crop.slices()]
        ),
        crop=crop,
    )


def slice_indices(center: int, depth: int, nz: int) -> np.ndarray:
    """Indices of the ``depth`` slices around ``center``, replicating edge slices."""
    half = depth // 2
    return np.clip(np.arange(center - half, center + half + 1), 0, nz - 1)


def sample_training_patches(
    v: Volume,
    gt: LabelVolume,
    heatmaps: HeatmapStack,
    n: int,
    rng_seed: int,
    patch_size: int = 64,
    slices: int = 3,
) -> list[TrainingPatch]:
    """Randomly crop 2.5D patches around the organ.

    Patch centres are drawn uniformly from the organ bounding box dilated by half the
    patch size in-plane (and by half the stack depth along z), restricted so the patch
    stays inside the volume. Both targets are the stack's middle slice cropped with the
    same window.

    Args:
        v: Preprocessed image
        gt: Ground-truth label with the image's geometry
        heatmaps: Contour heatmap stack with the image's geometry
        n: Number of patches
        rng_seed: Seed for centre sampling
        patch_size: In-plane patch extent p
        slices: Stack depth k (odd)

    Returns:
        n patches in draw order

    Raises:
        GeometryError: On geometry mismatch, empty organ or a patch larger than the volume
    """
    if not v.same_geometry(gt) or heatmaps.dims != v.dims:
        msg = f"Geometry mismatch: image {v.dims}, label {gt.dims}, heatmaps {heatmaps.dims}"
        raise GeometryError(msg)
    nx, ny, nz = v.dims
    if patch_size > nx or patch_size > ny:
        msg = f"Patch size {patch_size} exceeds volume extent {(nx, ny)}"
        raise GeometryError(msg)
    if slices % 2 == 0:
        msg = f"Slice stack depth must be odd, got {slices}"
        raise GeometryError(msg)
    if n == 0:
        return []

    bbox = gt.bounding_box()
    if bbox is None:
        msg = "Cannot sample patches around an empty organ"
        raise GeometryError(msg)

    half = patch_size // 2
    (bx0, bx1), (by0, by1), (bz0, bz1) = bbox
    x_range = (max(bx0 - half, half), min(bx1 + half, nx - patch_size + half))
    y_range = (max(by0 - half, half), min(by1 + half, ny - patch_size + half))
    z_range = (max(bz0 - slices // 2, 0), min(bz1 + slices // 2, nz - 1))

    rng = np.random.default_rng(rng_seed)
    centers = rng.integers(
        low=[x_range[0], y_range[0], z_range[0]],
        high=[x_range[1] + 1, y_range[1] + 1, z_range[1] + 1],
        size=(n, 3),
    )

    patches = []
    for cx, cy, cz in centers:
        x0, y0, z = int(cx) - half, int(cy) - half, int(cz)
        window = (slice(x0, x0 + patch_size), slice(y0, y0 + patch_size))
        stack = v.data[window[0], window[1], slice_indices(z, slices, nz)]
        patches.append(
            TrainingPatch(
                stack=SliceStack(data=np.moveaxis(stack, 2, 0), offset=(x0, y0, z)),
                mask=gt.data[window[0], window[1], z].copy(),
                heatmap=heatmaps.data[window[0], window[1], z].copy(),
            )
        )
    return patches
