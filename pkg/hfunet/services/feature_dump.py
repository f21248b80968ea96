"""Channel mosaics of segmentation, contour and fused features at a TCL level."""

from pathlib import Path
from typing import NamedTuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import torch  # noqa: E402

from hfunet.errors import GeometryError, TopologyError  # noqa: E402
from hfunet.logging_config import get_logger  # noqa: E402
from hfunet.models.volume import Volume  # noqa: E402
from hfunet.services.inference import pad_to_multiple, slice_stacks  # noqa: E402
from hfunet.services.model_zoo import ModelState  # noqa: E402

logger = get_logger(__name__)

MAX_MOSAIC_CHANNELS = 14
MOSAIC_ROWS = ("seg", "contour", "tcl")


class FeatureMosaic(NamedTuple):
    """Where a mosaic was written and its layout."""

    path: Path
    level: int
    rows: int
    tiles: int


def feature_maps(state: ModelState, region: Volume, slice_index: int, level: int | None = None) -> tuple[int, np.ndarray]:
    """Features of one slice stack at a TCL level.

    Args:
        state: Model with TCL blocks
        region: Image the stack is taken from
        slice_index: Middle slice of the stack
        level: TCL level, the highest one when None

    Returns:
        The level and an array of shape (3, channels, h, w) holding seg, contour and tcl features

    Raises:
        TopologyError: If the model has no TCL levels or ``level`` carries no TCL block
        GeometryError: If the slice index is outside the region
    """
    valid = state.cfg.tcl_levels()
    if not valid:
        msg = f"Topology '{state.cfg.label()}' has no TCL levels"
        raise TopologyError(msg)
    chosen = max(valid) if level is None else level
    if chosen not in valid:
        msg = f"Level {chosen} has no TCL block; valid levels: {valid}"
        raise TopologyError(msg)
    nz = region.dims[2]
    if not 0 <= slice_index < nz:
        msg = f"Slice index {slice_index} outside [0, {nz})"
        raise GeometryError(msg)

    stack = slice_stacks(region.data, state.cfg.in_slices)[slice_index : slice_index + 1]
    batch = torch.from_numpy(pad_to_multiple(stack, 2**state.cfg.depth))
    reference = next(state.network.parameters())
    was_training = state.network.training
    state.network.eval()
    try:
        with torch.no_grad():
            output = state.forward(batch.to(device=reference.device, dtype=reference.dtype))
    finally:
        state.network.train(was_training)

    triple = next(t for t in output.triples if t.level == chosen)
    features = torch.stack([triple.seg[0], triple.contour[0], triple.tcl[0]])
    return chosen, features.double().cpu().numpy()


def write_mosaic(features: np.ndarray, path: str | Path, title: str | None = None) -> tuple[int, int]:
    """Tile the first channels of each feature row with one shared colour scale.

    Returns:
        (rows, tiles per row)
    """
    rows = features.shape[0]
    tiles = min(MAX_MOSAIC_CHANNELS, features.shape[1])
    shown = features[:, :tiles]
    vmin, vmax = float(shown.min()), float(shown.max())

    fig, axes = plt.subplots(rows, tiles, figsize=(1.2 * tiles, 1.2 * rows + 0.4), squeeze=False)
    for r in range(rows):
        for c in range(tiles):
            ax = axes[r][c]
            image = ax.imshow(shown[r, c].T, cmap="jet", vmin=vmin, vmax=vmax, origin="lower")
            ax.set_xticks([])
            ax.set_yticks([])
            if c == 0:
                ax.set_ylabel(MOSAIC_ROWS[r] if r < len(MOSAIC_ROWS) else str(r))
    fig.colorbar(image, ax=axes, shrink=0.8)
    if title:
        fig.suptitle(title)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(target, format="png", dpi=100)
    plt.close(fig)
    return rows, tiles


def dump_features(
    state: ModelState, region: Volume, path: str | Path, slice_index: int, level: int | None = None
) -> FeatureMosaic:
    """Write the feature mosaic of one slice at a TCL level.

    Raises:
        TopologyError: If the level has no TCL block
    """
    chosen, features = feature_maps(state, region, slice_index, level)
    rows, tiles = write_mosaic(features, path, title=f"{state.cfg.label()} level {chosen} slice {slice_index}")
    logger.info("Wrote feature mosaic", path=str(path), level=chosen, tiles=tiles)
    return FeatureMosaic(path=Path(path), level=chosen, rows=rows, tiles=tiles)
