"""Overlap and surface-distance metrics between ground truth and segmentation."""

from collections.abc import Iterable

import numpy as np
from scipy.ndimage import binary_erosion, generate_binary_structure
from scipy.spatial import cKDTree

from hfunet.errors import GeometryError, HFUNetError, SurfaceError
from hfunet.logging_config import get_logger
from hfunet.models.reports import CaseMetrics, MetricsReport, RunMetadata, generate_metrics_report
from hfunet.models.volume import LabelVolume, Spacing

logger = get_logger(__name__)

_SIX_CONNECTED = generate_binary_structure(3, 1)


def _masks(gt: LabelVolume, seg: LabelVolume) -> tuple[np.ndarray, np.ndarray]:
    if gt.dims != seg.dims:
        msg = f"Geometry mismatch: ground truth {gt.dims} vs segmentation {seg.dims}"
        raise GeometryError(msg)
    return gt.data.astype(bool), seg.data.astype(bool)


def dsc(gt: LabelVolume, seg: LabelVolume) -> float:
    """Dice similarity 2|A n B| / (|A| + |B|); two empty masks score 1.0."""
    a, b = _masks(gt, seg)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def sen_ppv(gt: LabelVolume, seg: LabelVolume) -> tuple[float, float]:
    """Sensitivity |A n B| / |A| and positive predictive value |A n B| / |B|.

    Raises:
        GeometryError: If either mask is empty or the geometries differ
    """
    a, b = _masks(gt, seg)
    gt_count, seg_count = int(a.sum()), int(b.sum())
    if gt_count == 0:
        msg = "Sensitivity is undefined for an empty ground truth"
        raise GeometryError(msg)
    if seg_count == 0:
        msg = "Positive predictive value is undefined for an empty segmentation"
        raise GeometryError(msg)
    overlap = int(np.logical_and(a, b).sum())
    return overlap / gt_count, overlap / seg_count


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Voxels of the mask with a face neighbour outside it; the volume border counts as outside.

    Returns:
        (n, 3) integer voxel coordinates
    """
    interior = binary_erosion(mask, structure=_SIX_CONNECTED, border_value=0)
    return np.argwhere(mask & ~interior)


def asd(gt: LabelVolume, seg: LabelVolume, spacing: Spacing | None = None) -> float:
    """Symmetric average surface distance in mm between voxel-centre surfaces.

    Args:
        gt: Ground truth
        seg: Segmentation
        spacing: Millimetres per voxel, the ground truth's spacing when omitted

    Returns:
        Mean of the two directed average nearest-surface distances

    Raises:
        SurfaceError: If either mask is empty
    """
    a, b = _masks(gt, seg)
    if not a.any() or not b.any():
        msg = "undefined surface: ASD needs two non-empty masks"
        raise SurfaceError(msg)
    scale = np.asarray(spacing if spacing is not None else gt.spacing, dtype=np.float64)
    gt_points = surface_voxels(a) * scale
    seg_points = surface_voxels(b) * scale
    gt_to_seg, _ = cKDTree(seg_points).query(gt_points, k=1)
    seg_to_gt, _ = cKDTree(gt_points).query(seg_points, k=1)
    return 0.5 * (float(np.mean(gt_to_seg)) + float(np.mean(seg_to_gt)))


def evaluate_case(
    case_id: str, gt: LabelVolume, seg: LabelVolume, spacing: Spacing | None = None
) -> CaseMetrics:
    """Compute all metrics of one case, recording a failure instead of raising."""
    case_logger = logger.bind(case_id=case_id)
    try:
        sen, ppv = sen_ppv(gt, seg)
        return CaseMetrics(
            case_id=case_id,
            dsc=dsc(gt, seg),
            asd_mm=asd(gt, seg, spacing),
            sen=sen,
            ppv=ppv,
        )
    except HFUNetError as e:
        case_logger.warning("Case evaluation failed", error=str(e))
        dice = None
        try:
            dice = dsc(gt, seg)
        except GeometryError:
            pass
        return CaseMetrics(case_id=case_id, dsc=dice, error=str(e))


def evaluate_cases(
    pairs: Iterable[tuple[str, LabelVolume, LabelVolume]],
    spacing: Spacing | None = None,
    metadata: RunMetadata | None = None,
) -> MetricsReport:
    """Evaluate (case id, ground truth, segmentation) triples.

    Per-case failures are recorded in the row and do not stop the evaluation.

    Returns:
        Report with per-case rows and mean/std aggregates
    """
    rows = [evaluate_case(case_id, gt, seg, spacing) for case_id, gt, seg in pairs]
    report = generate_metrics_report(rows, metadata)
    logger.info(
        "Evaluated cases",
        cases=len(rows),
        failed=len(report.failed_cases),
        dsc=report.aggregates["dsc"].mean if "dsc" in report.aggregates else None,
    )
    return report
