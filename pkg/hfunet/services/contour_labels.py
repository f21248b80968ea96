"""Contour-sensitive regression targets: boundary extraction and Gaussian aggregation."""

import math

import numpy as np
from scipy.ndimage import binary_erosion, convolve, generate_binary_structure

from hfunet.errors import ContourLabelError
from hfunet.models.contours import DEFAULT_SIGMA, ContourHeatmap, ContourSet, HeatmapStack
from hfunet.models.volume import LabelVolume

_FOUR_CONNECTED = generate_binary_structure(2, 1)


def extract_contour(mask_slice: np.ndarray, slice_index: int = 0) -> ContourSet:
    """Foreground pixels with at least one background 4-neighbour.

    Pixels outside the image count as background, so foreground on the border is contour.

    Args:
        mask_slice: 2D binary grid
        slice_index: Axial index recorded on the result

    Returns:
        Contour pixels in row-major order

    Raises:
        ContourLabelError: If the input is not a binary 2D grid
    """
    mask = np.asarray(mask_slice)
    if mask.ndim != 2:
        msg = f"Contour extraction needs a 2D slice, got shape {mask.shape}"
        raise ContourLabelError(msg)
    if mask.dtype != np.bool_ and not np.isin(mask, (0, 1)).all():
        msg = "Contour extraction needs a binary slice (values 0/1)"
        raise ContourLabelError(msg)

    foreground = mask.astype(bool)
    interior = binary_erosion(foreground, structure=_FOUR_CONNECTED, border_value=0)
    rows, cols = np.nonzero(foreground & ~interior)
    return ContourSet(
        slice_index=slice_index,
        points=[(int(i), int(j)) for i, j in zip(rows, cols, strict=True)],
    )


def gaussian_kernel(sigma: float, truncation: float) -> np.ndarray:
    """Truncated Gaussian kernel, zero at distances >= truncation.

    Returns:
        Square kernel of odd side centred on the zero offset
    """
    radius = math.ceil(truncation)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    squared = offsets[:, None] ** 2 + offsets[None, :] ** 2
    kernel = np.exp(-squared / (2.0 * sigma**2)) / (sigma * math.sqrt(2.0 * math.pi))
    kernel[squared >= truncation**2] = 0.0
    return kernel


def gaussian_contour_map(
    contour: ContourSet,
    dims: tuple[int, int],
    sigma: float = DEFAULT_SIGMA,
    truncation: float | None = None,
) -> ContourHeatmap:
    """Sum a truncated Gaussian over every contour point.

    S(i, j) adds 1 / (sigma * sqrt(2 pi)) * exp(-d^2 / (2 sigma^2)) for each contour
    point at Euclidean distance d < truncation.

    Args:
        contour: Contour pixels
        dims: Slice grid shape
        sigma: Gaussian width in pixels
        truncation: Support radius in pixels, defaults to sigma

    Returns:
        Heatmap over the slice grid

    Raises:
        ContourLabelError: If sigma or truncation is not positive
    """
    truncation = sigma if truncation is None else truncation
    if sigma <= 0 or truncation <= 0:
        msg = f"sigma and truncation must be positive, got {sigma} and {truncation}"
        raise ContourLabelError(msg)

    indicator = np.zeros(dims, dtype=np.float64)
    points = contour.as_array()
    if len(points):
        np.add.at(indicator, (points[:, 0], points[:, 1]), 1.0)
        values = convolve(
            indicator, gaussian_kernel(sigma, truncation), mode="constant", cval=0.0
        )
        values = np.maximum(values, 0.0)
    else:
        values = indicator
    return ContourHeatmap(values=values, sigma=sigma, truncation=truncation)


def heatmap_stack(
    gt: LabelVolume, sigma: float = DEFAULT_SIGMA, truncation: float | None = None
) -> HeatmapStack:
    """Contour heatmap of every axial slice of a label volume."""
    truncation = sigma if truncation is None else truncation
    nx, ny, nz = gt.dims
    data = np.zeros((nx, ny, nz), dtype=np.float64)
    for s in range(nz):
        contour = extract_contour(gt.data[:, :, s], slice_index=s)
        if len(contour):
            data[:, :, s] = gaussian_contour_map(contour, (nx, ny), sigma, truncation).values
    return HeatmapStack(data=data, spacing=gt.spacing, sigma=sigma, truncation=truncation)
