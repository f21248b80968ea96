"""Named topology presets for the method comparison and attention variants."""

from enum import Enum

from pydantic import BaseModel, Field

from hfunet.models.topology import AttentionMode, Family, TopologyConfig


class TopologyPreset(str, Enum):
    """Predefined methods."""

    UNET = "unet"
    EB = "eb"
    LB = "lb"
    HF_1 = "hf-1"
    HF_2 = "hf-2"
    HF_3 = "hf-3"
    HF_6 = "hf-6"
    HF_6_CATT = "hf-6-catt"
    HF_6_PATT = "hf-6-patt"
    HF_6_DATT = "hf-6-datt"


class PresetConfig(BaseModel):
    """A named topology with a description."""

    name: str = Field(description="Method name as it appears in comparison tables")
    description: str = Field(description="What the topology shares and fuses")
    config: TopologyConfig = Field(description="Topology configuration")


TOPOLOGY_PRESETS: dict[TopologyPreset, PresetConfig] = {
    TopologyPreset.UNET: PresetConfig(
        name="U-Net",
        description="Single-task baseline with a segmentation head only",
        config=TopologyConfig(family=Family.UNET),
    ),
    TopologyPreset.EB: PresetConfig(
        name="EB",
        description="Early-branched multi-task network sharing only the first block",
        config=TopologyConfig(family=Family.EB),
    ),
    TopologyPreset.LB: PresetConfig(
        name="LB",
        description="Late-branched network: one shared trunk and two top-mapping heads",
        config=TopologyConfig(family=Family.LB),
    ),
    TopologyPreset.HF_1: PresetConfig(
        name="HF-UNet-1",
        description="TCL fusion on the last decoder level",
        config=TopologyConfig(family=Family.HF, tcl_count=1),
    ),
    TopologyPreset.HF_2: PresetConfig(
        name="HF-UNet-2",
        description="TCL fusion on the last two decoder levels",
        config=TopologyConfig(family=Family.HF, tcl_count=2),
    ),
    TopologyPreset.HF_3: PresetConfig(
        name="HF-UNet-3",
        description="TCL fusion on every decoder level",
        config=TopologyConfig(family=Family.HF, tcl_count=3),
    ),
    TopologyPreset.HF_6: PresetConfig(
        name="HF-UNet-6",
        description="Separate encoders and decoders after the first block, fused at six levels",
        config=TopologyConfig(family=Family.HF, tcl_count=6),
    ),
    TopologyPreset.HF_6_CATT: PresetConfig(
        name="HF-UNet-6-cAtt",
        description="HF-UNet-6 with channel-attention feedback",
        config=TopologyConfig(family=Family.HF, tcl_count=6, attention=AttentionMode.CHANNEL),
    ),
    TopologyPreset.HF_6_PATT: PresetConfig(
        name="HF-UNet-6-pAtt",
        description="HF-UNet-6 with position-attention feedback",
        config=TopologyConfig(family=Family.HF, tcl_count=6, attention=AttentionMode.POSITION),
    ),
    TopologyPreset.HF_6_DATT: PresetConfig(
        name="HF-UNet-6-dAtt",
        description="HF-UNet-6 with dual attention feedback",
        config=TopologyConfig(family=Family.HF, tcl_count=6, attention=AttentionMode.DUAL),
    ),
}

# Methods of the topology comparison table, in table order
COMPARISON_PRESETS: list[TopologyPreset] = [
    TopologyPreset.UNET,
    TopologyPreset.EB,
    TopologyPreset.LB,
    TopologyPreset.HF_1,
    TopologyPreset.HF_2,
    TopologyPreset.HF_3,
    TopologyPreset.HF_6,
]


def get_preset_config(preset: TopologyPreset | str) -> PresetConfig:
    """Get a preset by enum member or value.

    Raises:
        KeyError: If the preset is not found
    """
    try:
        key = TopologyPreset(preset)
    except ValueError as e:
        raise KeyError(preset) from e
    return TOPOLOGY_PRESETS[key]


def list_available_presets() -> dict[str, str]:
    """List all topology presets.

    Returns:
        Dictionary mapping preset values to descriptions
    """
    return {preset.value: config.description for preset, config in TOPOLOGY_PRESETS.items()}
