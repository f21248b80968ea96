"""Task-consistency fusion: weighted residual, channel/position attention and TCL blocks."""

from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from hfunet.errors import TopologyError
from hfunet.models.topology import AttentionMode

POSITION_ATTENTION_MAX_POSITIONS = 4096


class AttentionResult(NamedTuple):
    """A row-stochastic mask and the feature it attends."""

    mask: Tensor
    attended: Tensor
    pool: int = 1


class AttentionMasks(NamedTuple):
    """Masks used by attention feedback; unused terms are None.

    Channel masks are (B, d, d). Position masks are (B, N, N) over the grid pooled by ``pool``.
    """

    channel_priv: Tensor | None = None
    channel_pub: Tensor | None = None
    position_priv: Tensor | None = None
    position_pub: Tensor | None = None
    pool: int = 1


class FeatureTriple(NamedTuple):
    """Branch features and TCL output at one fused level."""

    level: int
    seg: Tensor
    contour: Tensor
    tcl: Tensor


class TCLOutput(NamedTuple):
    """TCL block output and the fused features fed back to each branch."""

    tcl: Tensor
    seg: Tensor
    contour: Tensor


def _check_same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        msg = f"{what} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}"
        raise TopologyError(msg)


def tcl_fuse_weighted(priv: Tensor, pub: Tensor, alpha: float) -> Tensor:
    """Weighted residual: alpha * priv + (1 - alpha) * pub.

    Raises:
        TopologyError: If the features differ in shape or alpha is outside [0, 1]
    """
    _check_same_shape(priv, pub, "Weighted residual")
    if not 0.0 <= alpha <= 1.0:
        msg = f"alpha must lie in [0, 1], got {alpha}"
        raise TopologyError(msg)
    return alpha * priv + (1.0 - alpha) * pub


def apply_channel_mask(mask: Tensor, feature: Tensor) -> Tensor:
    """Mix channels: out[:, i] = sum_j mask[i, j] * feature[:, j]."""
    batch, channels, height, width = feature.shape
    return torch.bmm(mask, feature.reshape(batch, channels, height * width)).reshape(
        batch, channels, height, width
    )


def apply_position_mask(mask: Tensor, feature: Tensor, pool: int = 1) -> Tensor:
    """Mix positions: out[:, :, p] = sum_q mask[p, q] * feature[:, :, q].

    With ``pool`` > 1 the mask lives on the average-pooled grid and the result is
    upsampled back with nearest-neighbour interpolation.
    """
    batch, channels, height, width = feature.shape
    source = F.avg_pool2d(feature, pool, ceil_mode=True) if pool > 1 else feature
    pooled_h, pooled_w = source.shape[-2:]
    flat = source.reshape(batch, channels, pooled_h * pooled_w)
    attended = torch.bmm(flat, mask.transpose(1, 2)).reshape(batch, channels, pooled_h, pooled_w)
    if pool > 1:
        attended = F.interpolate(attended, scale_factor=pool, mode="nearest")[..., :height, :width]
    return attended


def channel_attention(feature: Tensor) -> AttentionResult:
    """Channel attention with mask softmax(X X^T) over the d channel vectors.

    Args:
        feature: (B, d, H, W)

    Returns:
        (B, d, d) row-stochastic mask and the attended feature
    """
    if feature.dim() != 4:
        msg = f"Channel attention expects (B, d, H, W), got {tuple(feature.shape)}"
        raise TopologyError(msg)
    flat = feature.flatten(2)
    mask = torch.softmax(torch.bmm(flat, flat.transpose(1, 2)), dim=-1)
    return AttentionResult(mask=mask, attended=apply_channel_mask(mask, feature))


def position_pool_factor(height: int, width: int) -> int:
    """Smallest power of two bringing the grid under the position-attention limit."""
    factor = 1
    while -(-height // factor) * -(-width // factor) > POSITION_ATTENTION_MAX_POSITIONS:
        factor *= 2
    return factor


def position_attention(feature: Tensor, query: nn.Module, key: nn.Module) -> AttentionResult:
    """Position attention with mask softmax(q^T k) from low-dimensional projections.

    Large grids are average pooled first (see ``position_pool_factor``).

    Args:
        feature: (B, d, H, W)
        query: Projection producing (B, r, H', W') queries
        key: Projection producing (B, r, H', W') keys

    Returns:
        (B, N, N) row-stochastic mask over the (pooled) positions and the attended feature
    """
    if feature.dim() != 4:
        msg = f"Position attention expects (B, d, H, W), got {tuple(feature.shape)}"
        raise TopologyError(msg)
    pool = position_pool_factor(*feature.shape[-2:])
    source = F.avg_pool2d(feature, pool, ceil_mode=True) if pool > 1 else feature
    q = query(source).flatten(2)
    k = key(source).flatten(2)
    mask = torch.softmax(torch.bmm(q.transpose(1, 2), k), dim=-1)
    return AttentionResult(mask=mask, attended=apply_position_mask(mask, feature, pool), pool=pool)


def fuse_attention_terms(
    priv: Tensor, pub: Tensor, masks: AttentionMasks, averaged: bool = False
) -> Tensor:
    """Attention feedback with a residual copy of the input beside every attended term.

    The dual form is A_c1 priv + priv + A_c2 pub + pub + A_p1 priv + priv + A_p2 pub + pub.
    Missing masks drop their terms together with their residuals. ``averaged`` keeps a
    single copy of each residual.

    Raises:
        TopologyError: If priv and pub differ in shape or no mask is given
    """
    _check_same_shape(priv, pub, "Attention fusion")
    out = torch.zeros_like(priv)
    residual_copies = 0
    if masks.channel_priv is not None and masks.channel_pub is not None:
        out = out + apply_channel_mask(masks.channel_priv, priv)
        out = out + apply_channel_mask(masks.channel_pub, pub)
        residual_copies += 1
    if masks.position_priv is not None and masks.position_pub is not None:
        out = out + apply_position_mask(masks.position_priv, priv, masks.pool)
        out = out + apply_position_mask(masks.position_pub, pub, masks.pool)
        residual_copies += 1
    if residual_copies == 0:
        msg = "Attention fusion needs channel or position masks"
        raise TopologyError(msg)
    if averaged:
        residual_copies = 1
    return out + residual_copies * (priv + pub)


class PositionAttention(nn.Module):
    """Query/key projections reducing channels to max(d / 8, 1)."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        reduced = max(channels // 8, 1)
        self.query = nn.Conv2d(channels, reduced, kernel_size=1)
        self.key = nn.Conv2d(channels, reduced, kernel_size=1)

    def forward(self, feature: Tensor) -> AttentionResult:
        return position_attention(feature, self.query, self.key)


class AttentionFusion(nn.Module):
    """Attention feedback of TCL output (public) into one branch (private).

    Masks are computed from the feature they modulate: A_c1 and A_p1 from priv,
    A_c2 and A_p2 from pub.
    """

    def __init__(self, channels: int, mode: AttentionMode, averaged: bool = False) -> None:
        super().__init__()
        if mode == AttentionMode.NONE:
            msg = "AttentionFusion needs an attention mode"
            raise TopologyError(msg)
        self.mode = mode
        self.averaged = averaged
        uses_position = mode in (AttentionMode.POSITION, AttentionMode.DUAL)
        self.position_priv = PositionAttention(channels) if uses_position else None
        self.position_pub = PositionAttention(channels) if uses_position else None

    def masks(self, priv: Tensor, pub: Tensor) -> AttentionMasks:
        """Compute every mask the mode uses."""
        channel_priv = channel_pub = position_priv = position_pub = None
        pool = 1
        if self.mode in (AttentionMode.CHANNEL, AttentionMode.DUAL):
            channel_priv = channel_attention(priv).mask
            channel_pub = channel_attention(pub).mask
        if self.position_priv is not None and self.position_pub is not None:
            result_priv = self.position_priv(priv)
            position_priv, pool = result_priv.mask, result_priv.pool
            position_pub = self.position_pub(pub).mask
        return AttentionMasks(channel_priv, channel_pub, position_priv, position_pub, pool)

    def forward(self, priv: Tensor, pub: Tensor) -> Tensor:
        return fuse_attention_terms(priv, pub, self.masks(priv, pub), self.averaged)


def conv3x3(in_channels: int, out_channels: int, normalization: bool = False) -> nn.Sequential:
    """3x3 same-padding convolution followed by ReLU."""
    layers: list[nn.Module] = [nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)]
    if normalization:
        layers.append(nn.BatchNorm2d(out_channels))
    layers.append(nn.ReLU(inplace=False))
    return nn.Sequential(*layers)


class TCLBlock(nn.Module):
    """Sum both branch features, bottleneck, two 3x3 convolutions, then feed back.

    The feedback to each branch is the weighted residual with ``alpha`` or attention
    fusion, with the TCL output as the public feature.
    """

    def __init__(
        self,
        channels: int,
        attention: AttentionMode = AttentionMode.NONE,
        alpha: float = 0.2,
        bottleneck_channels: int | None = None,
        attention_averaged: bool = False,
        normalization: bool = False,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.alpha = alpha
        self.attention = attention
        width = bottleneck_channels or max(channels // 2, 1)
        self.bottleneck = nn.Conv2d(channels, width, kernel_size=1)
        self.convs = nn.Sequential(
            conv3x3(width, channels, normalization), conv3x3(channels, channels, normalization)
        )
        if attention == AttentionMode.NONE:
            self.seg_feedback = None
            self.contour_feedback = None
        else:
            self.seg_feedback = AttentionFusion(channels, attention, attention_averaged)
            self.contour_feedback = AttentionFusion(channels, attention, attention_averaged)

    def fuse(self, priv_seg: Tensor, priv_contour: Tensor) -> Tensor:
        """TCL output from the two branch features."""
        _check_same_shape(priv_seg, priv_contour, "TCL input")
        return self.convs(self.bottleneck(priv_seg + priv_contour))

    def forward(self, priv_seg: Tensor, priv_contour: Tensor) -> TCLOutput:
        tcl = self.fuse(priv_seg, priv_contour)
        if self.seg_feedback is None or self.contour_feedback is None:
            return TCLOutput(
                tcl=tcl,
                seg=tcl_fuse_weighted(priv_seg, tcl, self.alpha),
                contour=tcl_fuse_weighted(priv_contour, tcl, self.alpha),
            )
        return TCLOutput(
            tcl=tcl,
            seg=self.seg_feedback(priv_seg, tcl),
            contour=self.contour_feedback(priv_contour, tcl),
        )
