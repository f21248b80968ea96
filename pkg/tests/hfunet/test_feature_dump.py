"""Tests for feature mosaics."""

import numpy as np
import pytest

from hfunet.errors import GeometryError, TopologyError
from hfunet.models.topology import Family, TopologyConfig
from hfunet.models.volume import Volume
from hfunet.services.feature_dump import MAX_MOSAIC_CHANNELS, dump_features, feature_maps
from hfunet.services.model_zoo import build_topology


def _region() -> Volume:
    rng = np.random.default_rng(3)
    return Volume(spacing=(1.0, 1.0, 1.0), data=rng.normal(size=(16, 16, 8)))


def _hf6(base_width: int = 16):
    return build_topology(TopologyConfig(family=Family.HF, tcl_count=6, base_width=base_width), seed=0)


class TestFeatureMaps:
    """Test feature extraction at TCL levels."""

    def test_top_level_by_default(self):
        """Test the highest TCL level is used with all of its channels."""
        level, features = feature_maps(_hf6(), _region(), slice_index=4)

        assert level == 7
        assert features.shape == (3, 16, 16, 16)
        assert np.isfinite(features).all()

    def test_bottom_level_resolution(self):
        """Test the bottom level is at an eighth of the input size."""
        level, features = feature_maps(_hf6(), _region(), slice_index=4, level=4)
        assert level == 4
        assert features.shape == (3, 128, 2, 2)

    def test_unet_has_no_levels(self):
        """Test a plain U-Net cannot be dumped."""
        state = build_topology(TopologyConfig(family=Family.UNET, base_width=4), seed=0)
        with pytest.raises(TopologyError, match="no TCL levels"):
            feature_maps(state, _region(), slice_index=0)

    def test_invalid_level_lists_valid_ones(self):
        """Test a level without a TCL block names the valid levels."""
        with pytest.raises(TopologyError, match=r"valid levels: \[2, 3, 4, 5, 6, 7\]"):
            feature_maps(_hf6(4), _region(), slice_index=0, level=1)

    def test_slice_outside_region(self):
        """Test a slice index past the region is rejected."""
        with pytest.raises(GeometryError, match="outside"):
            feature_maps(_hf6(4), _region(), slice_index=8)


class TestDumpFeatures:
    """Test mosaic files."""

    def test_mosaic_layout(self, tmp_path):
        """Test the mosaic has three rows of at most fourteen tiles."""
        mosaic = dump_features(_hf6(), _region(), tmp_path / "f.png", slice_index=4)

        assert mosaic.rows == 3
        assert mosaic.tiles == MAX_MOSAIC_CHANNELS
        assert mosaic.path.read_bytes().startswith(b"\x89PNG")

    def test_narrow_level_shows_every_channel(self, tmp_path):
        """Test fewer channels than the tile limit are all shown."""
        mosaic = dump_features(_hf6(4), _region(), tmp_path / "f.png", slice_index=2)
        assert mosaic.tiles == 4

    def test_repeatable(self, tmp_path):
        """Test two dumps of the same model and slice are byte-identical."""
        state, region = _hf6(4), _region()
        a = dump_features(state, region, tmp_path / "a.png", slice_index=3)
        b = dump_features(state, region, tmp_path / "b.png", slice_index=3)
        assert a.path.read_bytes() == b.path.read_bytes()
