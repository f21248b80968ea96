"""Network builder for every topology family, with parameter groups and graph description."""

import hashlib
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from hfunet.errors import TopologyError
from hfunet.logging_config import get_logger
from hfunet.models.topology import (
    BlockKind,
    GraphNode,
    ParameterGroup,
    TopologyConfig,
)
from hfunet.services.fusion import FeatureTriple, TCLBlock, conv3x3
from hfunet.services.seeding import derive_seed

logger = get_logger(__name__)

HEAD_KEY = "head"


class NetworkOutput(NamedTuple):
    """Middle-slice predictions and fused-level features."""

    seg_logits: Tensor
    contour_pred: Tensor | None
    triples: list[FeatureTriple]


class LevelBlock(nn.Module):
    """Two 3x3 convolutions, preceded by a transposed convolution on decoder levels."""

    def __init__(
        self, kind: BlockKind, in_channels: int, out_channels: int, normalization: bool = False
    ) -> None:
        super().__init__()
        self.kind = kind
        if kind == BlockKind.DECODER:
            self.up = nn.ConvTranspose2d(in_channels, out_channels, kernel_size=2, stride=2)
            conv_in = 2 * out_channels
        else:
            self.up = None
            conv_in = in_channels
        self.convs = nn.Sequential(
            conv3x3(conv_in, out_channels, normalization),
            conv3x3(out_channels, out_channels, normalization),
        )

    def forward(self, x: Tensor, skip: Tensor | None = None) -> Tensor:
        if self.up is not None:
            if skip is None:
                msg = "Decoder block needs a skip feature"
                raise TopologyError(msg)
            x = torch.cat([self.up(x), skip], dim=1)
        return self.convs(x)


class TopMapping(nn.Sequential):
    """Task head: 3x3 convolution with ReLU, then a 1x1 projection."""

    def __init__(self, in_channels: int, out_channels: int) -> None:
        super().__init__(
            nn.Conv2d(in_channels, in_channels, kernel_size=3, padding=1),
            nn.ReLU(inplace=False),
            nn.Conv2d(in_channels, out_channels, kernel_size=1),
        )


class HFNet(nn.Module):
    """Encoder-decoder with optional task branches and TCL fusion.

    Submodules are stored under the name of their parameter group, so every parameter
    belongs to exactly one group by construction.
    """

    def __init__(self, cfg: TopologyConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.shared = nn.ModuleDict()
        self.seg_branch = nn.ModuleDict()
        self.contour_branch = nn.ModuleDict()
        self.tcl_blocks = nn.ModuleDict()

        split = set(cfg.split_levels())
        for level in range(1, cfg.total_levels + 1):
            kind = cfg.level_kind(level)
            out_channels = cfg.level_channels(level)
            in_channels = cfg.in_slices if level == 1 else cfg.level_channels(level - 1)
            if level in split:
                self.seg_branch[str(level)] = LevelBlock(kind, in_channels, out_channels, cfg.normalization)
                self.contour_branch[str(level)] = LevelBlock(
                    kind, in_channels, out_channels, cfg.normalization
                )
            else:
                self.shared[str(level)] = LevelBlock(kind, in_channels, out_channels, cfg.normalization)
        for level in cfg.tcl_levels():
            self.tcl_blocks[str(level)] = TCLBlock(
                cfg.level_channels(level),
                attention=cfg.attention,
                alpha=cfg.alpha,
                bottleneck_channels=cfg.bottleneck_channels,
                attention_averaged=cfg.attention_averaged,
                normalization=cfg.normalization,
            )

        self.seg_branch[HEAD_KEY] = TopMapping(cfg.base_width, cfg.classes)
        if cfg.has_contour_branch:
            self.contour_branch[HEAD_KEY] = TopMapping(cfg.base_width, 1)

    def forward(self, x: Tensor) -> NetworkOutput:
        cfg = self.cfg
        if x.dim() != 4 or x.shape[1] != cfg.in_slices:
            msg = f"Expected a (B, {cfg.in_slices}, p, p) batch, got {tuple(x.shape)}"
            raise TopologyError(msg)
        divisor = 2**cfg.depth
        if x.shape[-1] % divisor or x.shape[-2] % divisor:
            msg = f"Patch size {tuple(x.shape[-2:])} must be divisible by {divisor}"
            raise TopologyError(msg)

        seg = contour = x
        seg_skips: dict[int, Tensor] = {}
        contour_skips: dict[int, Tensor] = {}
        triples: list[FeatureTriple] = []

        for level in range(1, cfg.total_levels + 1):
            key = str(level)
            skip_level = cfg.skip_level(level)
            if key in self.shared:
                skip = seg_skips[skip_level] if skip_level is not None else None
                seg = contour = self.shared[key](seg, skip)
            else:
                seg_skip = seg_skips[skip_level] if skip_level is not None else None
                contour_skip = contour_skips[skip_level] if skip_level is not None else None
                seg = self.seg_branch[key](seg, seg_skip)
                contour = self.contour_branch[key](contour, contour_skip)
                if key in self.tcl_blocks:
                    fused = self.tcl_blocks[key](seg, contour)
                    triples.append(FeatureTriple(level=level, seg=seg, contour=contour, tcl=fused.tcl))
                    seg, contour = fused.seg, fused.contour

            if cfg.level_kind(level) == BlockKind.ENCODER:
                seg_skips[level] = seg
                contour_skips[level] = contour
                shared_path = seg is contour
                seg = F.max_pool2d(seg, 2)
                contour = seg if shared_path else F.max_pool2d(contour, 2)

        seg_logits = self.seg_branch[HEAD_KEY](seg)
        contour_pred = (
            self.contour_branch[HEAD_KEY](contour) if HEAD_KEY in self.contour_branch else None
        )
        return NetworkOutput(seg_logits=seg_logits, contour_pred=contour_pred, triples=triples)


class ModelState:
    """A built network with its topology, parameter groups and graph description."""

    def __init__(self, cfg: TopologyConfig, network: HFNet | None = None) -> None:
        self.cfg = cfg
        self.network = network if network is not None else HFNet(cfg)
        self.trainable: set[ParameterGroup] = set(ParameterGroup)

    def parameter_groups(self) -> dict[ParameterGroup, dict[str, nn.Parameter]]:
        """Named parameters of each group."""
        groups: dict[ParameterGroup, dict[str, nn.Parameter]] = {group: {} for group in ParameterGroup}
        for name, param in self.network.named_parameters():
            groups[ParameterGroup(name.split(".", 1)[0])][name] = param
        return groups

    def group_counts(self) -> dict[ParameterGroup, int]:
        """Number of scalar parameters per group."""
        return {
            group: sum(p.numel() for p in params.values())
            for group, params in self.parameter_groups().items()
        }

    def total_parameters(self) -> int:
        """Number of scalar parameters."""
        return sum(p.numel() for p in self.network.parameters())

    def graph(self) -> list[GraphNode]:
        """Forward-graph description in execution order."""
        cfg = self.cfg
        nodes = []
        split = set(cfg.split_levels())
        for level in range(1, cfg.total_levels + 1):
            kind = cfg.level_kind(level)
            in_channels = cfg.in_slices if level == 1 else cfg.level_channels(level - 1)
            groups = (
                [ParameterGroup.SEG_BRANCH, ParameterGroup.CONTOUR_BRANCH]
                if level in split
                else [ParameterGroup.SHARED]
            )
            for group in groups:
                nodes.append(
                    GraphNode(
                        level=level,
                        kind=kind,
                        group=group,
                        in_channels=in_channels,
                        out_channels=cfg.level_channels(level),
                        scale=cfg.level_scale(level),
                        skip_from=cfg.skip_level(level),
                    )
                )
            if str(level) in self.network.tcl_blocks:
                nodes.append(
                    GraphNode(
                        level=level,
                        kind=BlockKind.TCL,
                        group=ParameterGroup.TCL_BLOCKS,
                        in_channels=cfg.level_channels(level),
                        out_channels=cfg.level_channels(level),
                        scale=cfg.level_scale(level),
                    )
                )
        heads = [(ParameterGroup.SEG_BRANCH, cfg.classes)]
        if cfg.has_contour_branch:
            heads.append((ParameterGroup.CONTOUR_BRANCH, 1))
        for group, out_channels in heads:
            nodes.append(
                GraphNode(
                    level=None,
                    kind=BlockKind.HEAD,
                    group=group,
                    in_channels=cfg.base_width,
                    out_channels=out_channels,
                    scale=0,
                )
            )
        return nodes

    def checksums(self) -> dict[ParameterGroup, str]:
        """SHA-256 of each group's parameter and buffer bytes, in name order.

        Buffers include batch-normalization running statistics.
        """
        tensors: dict[ParameterGroup, dict[str, Tensor]] = {group: {} for group in ParameterGroup}
        for name, tensor in self.network.state_dict().items():
            tensors[ParameterGroup(name.split(".", 1)[0])][name] = tensor
        digests = {}
        for group, named in tensors.items():
            digest = hashlib.sha256()
            for name in sorted(named):
                digest.update(name.encode("utf-8"))
                digest.update(named[name].detach().cpu().contiguous().numpy().tobytes())
            digests[group] = digest.hexdigest()
        return digests

    def set_trainable(self, groups: set[ParameterGroup]) -> None:
        """Enable gradients for the listed groups only.

        In training mode the other groups are switched to eval so their normalization
        statistics stay frozen as well.
        """
        self.trainable = set(groups)
        for group, params in self.parameter_groups().items():
            for param in params.values():
                param.requires_grad_(group in groups)
        if self.network.training:
            self.train()

    def train(self) -> None:
        """Put the trainable groups in training mode and keep frozen groups in eval."""
        self.network.train()
        for group in set(ParameterGroup) - self.trainable:
            getattr(self.network, group.value).eval()

    def to(self, device: str | torch.device) -> "ModelState":
        """Move the network to a device in place."""
        self.network.to(device)
        return self

    def forward(self, batch: Tensor) -> NetworkOutput:
        """Evaluate the network on a (B, k, p, p) batch of slice stacks."""
        return self.network(batch)


def build_topology(cfg: TopologyConfig, seed: int | None = None) -> ModelState:
    """Build and initialize a network for a topology.

    Args:
        cfg: Topology description
        seed: Initialization seed; torch's global generator is used when None

    Returns:
        Freshly initialized model state
    """
    if seed is None:
        network = HFNet(cfg)
    else:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(derive_seed(seed, "init", cfg.label()))
            network = HFNet(cfg)
    state = ModelState(cfg, network)
    logger.info(
        "Built topology",
        topology=cfg.label(),
        parameters=state.total_parameters(),
        groups={group.value: count for group, count in state.group_counts().items()},
    )
    return state
