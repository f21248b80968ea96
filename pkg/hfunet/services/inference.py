"""Slice-by-slice middle-slice inference over a cropped region with component post-processing."""

import numpy as np
import torch
from scipy.ndimage import generate_binary_structure, label

from hfunet.errors import GeometryError
from hfunet.logging_config import get_logger
from hfunet.models.contours import HeatmapStack
from hfunet.models.training import TrainConfig
from hfunet.models.volume import LabelVolume, Volume
from hfunet.services.model_zoo import ModelState
from hfunet.services.phantom_data import slice_indices

logger = get_logger(__name__)

INFERENCE_BATCH_SIZE = 16

_SIX_CONNECTED = generate_binary_structure(3, 1)


def pad_to_multiple(plane: np.ndarray, multiple: int, mode: str = "edge") -> np.ndarray:
    """Pad the last two axes at their high end up to a multiple of ``multiple``."""
    pad_x = -plane.shape[-2] % multiple
    pad_y = -plane.shape[-1] % multiple
    if pad_x == 0 and pad_y == 0:
        return plane
    widths = [(0, 0)] * (plane.ndim - 2) + [(0, pad_x), (0, pad_y)]
    return np.pad(plane, widths, mode=mode)  # type: ignore[call-overload]


def slice_stacks(data: np.ndarray, depth: int) -> np.ndarray:
    """2.5D stacks of every axial slice, edge slices replicated.

    Returns:
        Array of shape (nz, depth, nx, ny); entry s is centred on slice s
    """
    nz = data.shape[2]
    return np.stack(
        [np.moveaxis(data[:, :, slice_indices(s, depth, nz)], 2, 0) for s in range(nz)]
    ).astype(np.float32)


def predict_slices(
    state: ModelState, data: np.ndarray, batch_size: int = INFERENCE_BATCH_SIZE
) -> tuple[np.ndarray, np.ndarray | None]:
    """Run the network on the stack of every axial slice.

    In-plane extents that are not divisible by the network's down-sampling factor are
    edge-padded and the predictions cropped back.

    Args:
        state: Trained model
        data: Image grid of shape (nx, ny, nz)
        batch_size: Slices per forward pass

    Returns:
        Argmax labels (uint8) and the contour prediction (None without a contour head),
        both of shape (nx, ny, nz)
    """
    cfg = state.cfg
    nx, ny, nz = data.shape
    stacks = pad_to_multiple(slice_stacks(data, cfg.in_slices), 2**cfg.depth)
    reference = next(state.network.parameters())

    labels = np.zeros((nz, nx, ny), dtype=np.uint8)
    contour = np.zeros((nz, nx, ny), dtype=np.float64) if cfg.has_contour_branch else None
    was_training = state.network.training
    state.network.eval()
    try:
        with torch.no_grad():
            for start in range(0, nz, batch_size):
                batch = torch.from_numpy(stacks[start : start + batch_size]).to(
                    device=reference.device, dtype=reference.dtype
                )
                output = state.forward(batch)
                chunk = output.seg_logits.argmax(dim=1)[:, :nx, :ny]
                labels[start : start + batch_size] = chunk.cpu().numpy().astype(np.uint8)
                if contour is not None and output.contour_pred is not None:
                    contour[start : start + batch_size] = (
                        output.contour_pred[:, 0, :nx, :ny].double().cpu().numpy()
                    )
    finally:
        state.network.train(was_training)

    return (
        np.moveaxis(labels, 0, 2),
        np.moveaxis(contour, 0, 2) if contour is not None else None,
    )


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep the largest 6-connected foreground component; ties keep the lowest label."""
    components, count = label(mask, structure=_SIX_CONNECTED)
    if count == 0:
        return np.zeros(mask.shape, dtype=np.uint8)
    sizes = np.bincount(components.ravel())[1:]
    return (components == int(np.argmax(sizes)) + 1).astype(np.uint8)


def infer(state: ModelState, region: Volume, cfg: TrainConfig) -> tuple[LabelVolume, HeatmapStack]:
    """Segment a cropped region slice by slice.

    Args:
        state: Trained model
        region: Preprocessed crop of edge ``cfg.crop_size``
        cfg: Training configuration the model was trained with

    Returns:
        Binary segmentation (largest component only) and the predicted contour heatmaps,
        clipped at zero; a model without a contour head yields zero heatmaps

    Raises:
        GeometryError: If the region is not a crop_size cube
    """
    expected = (cfg.crop_size,) * 3
    if region.dims != expected:
        msg = f"Region dims {region.dims} do not match the crop size {expected}"
        raise GeometryError(msg)

    labels, contour = predict_slices(state, region.data)
    mask = largest_component(labels)
    heatmaps = np.zeros(region.dims) if contour is None else np.clip(contour, 0.0, None)
    logger.debug(
        "Inferred region",
        topology=state.cfg.label(),
        raw_voxels=int(labels.sum()),
        kept_voxels=int(mask.sum()),
    )
    return (
        LabelVolume(spacing=region.spacing, data=mask),
        HeatmapStack(data=heatmaps, spacing=region.spacing, sigma=cfg.sigma, truncation=cfg.sigma),
    )
