"""Coarse organ localization and fixed-size region cropping."""

from typing import NamedTuple

import numpy as np
from scipy.ndimage import center_of_mass, generate_binary_structure, label

from hfunet.config import settings
from hfunet.logging_config import get_logger
from hfunet.models.contours import HeatmapStack
from hfunet.models.topology import Family, TopologyConfig
from hfunet.models.training import LossWeights, TrainConfig
from hfunet.models.volume import LabelVolume, Volume
from hfunet.services.inference import predict_slices
from hfunet.services.model_zoo import ModelState, build_topology
from hfunet.services.phantom_data import resample_volume
from hfunet.services.trainer import TrainingCase, WholeSliceSampler, train

logger = get_logger(__name__)

LOCALIZER_DOWNSAMPLE = 4

_SIX_CONNECTED = generate_binary_structure(3, 1)

Voxel = tuple[int, int, int]


class LocalizationResult(NamedTuple):
    """Estimated organ centre and the crop around it."""

    center: Voxel
    region: Volume
    origin: Voxel  # voxel of the source volume at region[0, 0, 0]; may be negative
    fallback: bool  # True when the coarse prediction was empty


def localizer_topology(in_slices: int = 3) -> TopologyConfig:
    """Smallest plain U-Net used for coarse localization."""
    return TopologyConfig(family=Family.UNET, base_width=8, depth=3, in_slices=in_slices)


def downsample(v: Volume, factor: int = LOCALIZER_DOWNSAMPLE) -> Volume:
    """Resample to ``factor`` times coarser spacing; labels use nearest neighbour."""
    target = tuple(s * factor for s in v.spacing)
    return resample_volume(v, target, order=0 if isinstance(v, LabelVolume) else 1)  # type: ignore[arg-type]


def coarse_segment(loc_model: ModelState, v: Volume, factor: int = LOCALIZER_DOWNSAMPLE) -> LabelVolume:
    """Slice-wise localizer prediction on the downsampled volume."""
    small = downsample(v, factor)
    labels, _ = predict_slices(loc_model, small.data)
    return LabelVolume(spacing=small.spacing, data=labels)


def center_from_coarse(
    coarse: LabelVolume, full_dims: Voxel, factor: int = LOCALIZER_DOWNSAMPLE
) -> tuple[Voxel, bool]:
    """Centroid of the largest coarse component mapped to full resolution.

    Coarse voxel i sits at full-resolution voxel ``factor * i`` since both grids share
    voxel 0. An empty prediction falls back to the volume centre.

    Returns:
        Centre voxel and whether the fallback was used
    """
    components, count = label(coarse.data, structure=_SIX_CONNECTED)
    if count == 0:
        return tuple(n // 2 for n in full_dims), True  # type: ignore[return-value]
    sizes = np.bincount(components.ravel())[1:]
    largest = int(np.argmax(sizes)) + 1
    centroid = np.asarray(center_of_mass(components == largest)) * factor
    center = tuple(
        int(np.clip(np.rint(c), 0, n - 1)) for c, n in zip(centroid, full_dims, strict=True)
    )
    return center, False  # type: ignore[return-value]


def crop_region(v: Volume, center: Voxel, crop_size: int) -> tuple[Volume, Voxel]:
    """Cube of edge ``crop_size`` centred on ``center``, zero-padded outside the volume.

    Returns:
        Crop with the source's type and spacing, and its origin in source voxels
    """
    origin = tuple(c - crop_size // 2 for c in center)
    out = np.zeros((crop_size,) * 3, dtype=v.data.dtype)
    src, dst = [], []
    for o, n in zip(origin, v.dims, strict=True):
        lo, hi = max(o, 0), min(o + crop_size, n)
        src.append(slice(lo, max(hi, lo)))
        dst.append(slice(lo - o, max(hi, lo) - o))
    out[tuple(dst)] = v.data[tuple(src)]
    return type(v)(spacing=v.spacing, data=out), origin  # type: ignore[return-value]


def paste_region(region: LabelVolume, origin: Voxel, dims: Voxel) -> LabelVolume:
    """Place a region label back into a full-size empty label volume."""
    out = np.zeros(dims, dtype=np.uint8)
    src, dst = [], []
    for o, n, c in zip(origin, dims, region.dims, strict=True):
        lo, hi = max(o, 0), min(o + c, n)
        dst.append(slice(lo, max(hi, lo)))
        src.append(slice(lo - o, max(hi, lo) - o))
    out[tuple(dst)] = region.data[tuple(src)]
    return LabelVolume(spacing=region.spacing, data=out)


def localize(
    v: Volume, loc_model: ModelState, crop_size: int, factor: int = LOCALIZER_DOWNSAMPLE
) -> LocalizationResult:
    """Locate the organ with the coarse network and crop the region around it.

    Args:
        v: Preprocessed volume
        loc_model: Localizer network
        crop_size: Edge of the returned cube
        factor: Downsampling factor of the coarse stage

    Returns:
        Centre, crop, crop origin and the fallback flag
    """
    coarse = coarse_segment(loc_model, v, factor)
    center, fallback = center_from_coarse(coarse, v.dims, factor)
    if fallback:
        logger.warning("Empty coarse prediction, using the volume centre", dims=v.dims)
    region, origin = crop_region(v, center, crop_size)
    return LocalizationResult(center=center, region=region, origin=origin, fallback=fallback)


def localize_from_label(v: Volume, gt: LabelVolume, crop_size: int) -> LocalizationResult:
    """Crop around the ground-truth centroid, bypassing the coarse network."""
    if gt.voxel_count == 0:
        center: Voxel = tuple(n // 2 for n in v.dims)  # type: ignore[assignment]
        fallback = True
    else:
        center = tuple(int(np.rint(c)) for c in center_of_mass(gt.data))  # type: ignore[assignment]
        fallback = False
    region, origin = crop_region(v, center, crop_size)
    return LocalizationResult(center=center, region=region, origin=origin, fallback=fallback)


def train_localizer(
    cases: list[TrainingCase],
    cfg: TrainConfig,
    factor: int = LOCALIZER_DOWNSAMPLE,
) -> ModelState:
    """Train the coarse U-Net on whole downsampled slices with the classification loss only.

    Args:
        cases: Preprocessed full volumes with labels
        cfg: Training configuration; its seed, schedule and batch size are reused
        factor: Downsampling factor

    Returns:
        Trained localizer
    """
    topology = localizer_topology(cfg.slices)
    small_cases = []
    for case in cases:
        image = downsample(case.image, factor)
        gt = downsample(case.label, factor)
        small_cases.append(
            TrainingCase(
                case_id=case.case_id,
                image=image,
                label=gt,  # type: ignore[arg-type]
                heatmaps=HeatmapStack(data=np.zeros(image.dims), spacing=image.spacing),
            )
        )
    loc_cfg = cfg.model_copy(
        update={
            "cold_start_epochs": 0,
            "weights": LossWeights(lambda1=1.0, lambda2=0.0, lambda3=0.0, weight_decay=cfg.weights.weight_decay),
        }
    )
    state = build_topology(topology, seed=cfg.seed).to(settings.device)
    state, _ = train(
        state,
        small_cases,
        loc_cfg,
        sampler=WholeSliceSampler(cfg.slices, 2**topology.depth),
    )
    logger.info("Trained localizer", cases=len(cases), factor=factor)
    return state
