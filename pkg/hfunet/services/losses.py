"""Classification, contour regression, TCL consistency and total multi-task losses."""

import math
from collections.abc import Iterable
from typing import NamedTuple

import torch
from torch import Tensor

from hfunet.errors import GeometryError, LossValueError
from hfunet.models.training import LossBreakdown, LossWeights, TrainPhase
from hfunet.services.fusion import FeatureTriple
from hfunet.services.model_zoo import ModelState, NetworkOutput

PROBABILITY_EPS = 1e-7


class LossTerms(NamedTuple):
    """Differentiable loss components of one step."""

    l_cls: Tensor
    l_reg: Tensor
    l_tcl: Tensor
    l_regularizer: Tensor
    total: Tensor

    def to_breakdown(self) -> LossBreakdown:
        """Detach to plain floats."""
        return LossBreakdown(**{name: float(value.detach()) for name, value in self._asdict().items()})


def _check_shapes(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        msg = f"{what} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}"
        raise GeometryError(msg)


def foreground_probability(seg_logits: Tensor) -> Tensor:
    """Probability of any non-background class from (B, classes, p, p) logits."""
    return 1.0 - torch.softmax(seg_logits, dim=1)[:, 0]


def classification_loss(probabilities: Tensor, targets: Tensor) -> Tensor:
    """Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps]."""
    _check_shapes(probabilities, targets, "Classification loss")
    p = probabilities.clamp(PROBABILITY_EPS, 1.0 - PROBABILITY_EPS)
    y = targets.to(p.dtype)
    return -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)).mean()


def regression_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error between predicted and target contour heatmaps."""
    _check_shapes(pred, target, "Regression loss")
    return ((target.to(pred.dtype) - pred) ** 2).mean()


def tcl_consistency_loss(triples: list[FeatureTriple]) -> Tensor:
    """Sum over fused levels of mean (seg - tcl)^2 + mean (contour - tcl)^2.

    An empty list gives zero.
    """
    if not triples:
        return torch.zeros(())
    total = torch.zeros((), dtype=triples[0].tcl.dtype, device=triples[0].tcl.device)
    for triple in triples:
        _check_shapes(triple.seg, triple.tcl, f"Level {triple.level} seg/tcl")
        _check_shapes(triple.contour, triple.tcl, f"Level {triple.level} contour/tcl")
        total = total + ((triple.seg - triple.tcl) ** 2).mean() + ((triple.contour - triple.tcl) ** 2).mean()
    return total


def regularizer(params: Iterable[Tensor], weight_decay: float) -> Tensor:
    """L2 penalty weight_decay * sum(theta^2) / 2."""
    params = list(params)
    if weight_decay == 0 or not params:
        return torch.zeros(())
    return weight_decay * 0.5 * sum((p**2).sum() for p in params)  # type: ignore[return-value]


def _as_tensor(value: Tensor | float) -> Tensor:
    return value if isinstance(value, Tensor) else torch.tensor(float(value), dtype=torch.float64)


def total_loss(
    l_cls: Tensor | float,
    l_reg: Tensor | float,
    l_tcl: Tensor | float,
    weights: LossWeights,
    params: ModelState | Iterable[Tensor],
) -> LossTerms:
    """Weighted multi-task objective plus the L2 regularizer over all parameter groups.

    Raises:
        LossValueError: If any component is NaN or infinite
    """
    tensors = params.network.parameters() if isinstance(params, ModelState) else params
    terms = {
        "l_cls": _as_tensor(l_cls),
        "l_reg": _as_tensor(l_reg),
        "l_tcl": _as_tensor(l_tcl),
        "l_regularizer": regularizer(tensors, weights.weight_decay),
    }
    for name, value in terms.items():
        number = float(value.detach())
        if not math.isfinite(number):
            raise LossValueError(name, number)
    total = (
        weights.lambda1 * terms["l_cls"]
        + weights.lambda2 * terms["l_reg"]
        + weights.lambda3 * terms["l_tcl"]
        + terms["l_regularizer"]
    )
    return LossTerms(total=total, **terms)


def effective_weights(weights: LossWeights, phase: TrainPhase) -> LossWeights:
    """Cold start trains the segmentation objective only."""
    if phase == TrainPhase.COLD_START:
        return weights.model_copy(update={"lambda2": 0.0, "lambda3": 0.0})
    return weights


def compute_losses(
    output: NetworkOutput,
    masks: Tensor,
    heatmaps: Tensor,
    weights: LossWeights,
    state: ModelState,
    phase: TrainPhase = TrainPhase.JOINT,
) -> LossTerms:
    """Loss terms of a forward pass against (B, p, p) mask and heatmap targets."""
    l_cls = classification_loss(foreground_probability(output.seg_logits), masks)
    if output.contour_pred is not None:
        l_reg = regression_loss(output.contour_pred[:, 0], heatmaps)
    else:
        l_reg = torch.zeros((), dtype=l_cls.dtype)
    l_tcl = tcl_consistency_loss(output.triples).to(l_cls.dtype)
    return total_loss(l_cls, l_reg, l_tcl, effective_weights(weights, phase), state)
