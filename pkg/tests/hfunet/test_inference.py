"""Tests for slice-wise inference and post-processing."""

import numpy as np
import pytest
import torch

from hfunet.errors import GeometryError
from hfunet.models.topology import Family, TopologyConfig
from hfunet.models.training import TrainConfig
from hfunet.models.volume import Volume
from hfunet.services.inference import infer, largest_component, predict_slices, slice_stacks
from hfunet.services.model_zoo import build_topology


def _region(size: int = 16, seed: int = 0) -> Volume:
    rng = np.random.default_rng(seed)
    return Volume(spacing=(1.0, 1.0, 1.0), data=rng.uniform(-1.0, 1.0, size=(size, size, size)))


def _cfg(size: int = 16) -> TrainConfig:
    return TrainConfig(crop_size=size, patch_size=size)


class TestSliceStacks:
    """Test 2.5D stack assembly."""

    def test_border_slice_replicated(self):
        """Test slice 0 uses slices (0, 0, 1) and the last uses (n-2, n-1, n-1)."""
        data = np.arange(2 * 2 * 4, dtype=np.float32).reshape(2, 2, 4)
        stacks = slice_stacks(data, 3)

        assert stacks.shape == (4, 3, 2, 2)
        assert np.array_equal(stacks[0], np.moveaxis(data[:, :, [0, 0, 1]], 2, 0))
        assert np.array_equal(stacks[3], np.moveaxis(data[:, :, [2, 3, 3]], 2, 0))
        assert np.array_equal(stacks[2], np.moveaxis(data[:, :, [1, 2, 3]], 2, 0))


class TestPredictSlices:
    """Test the slice sweep."""

    def test_matches_per_slice_forward(self):
        """Test the assembled prediction equals per-slice forward outputs."""
        state = build_topology(TopologyConfig(family=Family.HF, tcl_count=2, base_width=4), seed=0)
        state.network.double().eval()
        region = _region()

        labels, contour = predict_slices(state, region.data.astype(np.float64))

        stacks = slice_stacks(region.data, 3)
        for s in range(16):
            with torch.no_grad():
                out = state.forward(torch.from_numpy(stacks[s : s + 1]).double())
            assert np.array_equal(labels[:, :, s], out.seg_logits.argmax(dim=1)[0].numpy())
            np.testing.assert_allclose(contour[:, :, s], out.contour_pred[0, 0].numpy(), atol=1e-12)

    def test_translation_consistency(self):
        """Test shifting the region by one slice shifts interior predictions identically."""
        state = build_topology(TopologyConfig(family=Family.UNET, base_width=4), seed=1)
        state.network.double()
        data = np.random.default_rng(3).uniform(-1, 1, size=(16, 16, 12))
        shifted = np.zeros_like(data)
        shifted[:, :, 1:] = data[:, :, :-1]

        labels, _ = predict_slices(state, data)
        labels_shifted, _ = predict_slices(state, shifted)

        for s in range(1, 10):
            assert np.array_equal(labels_shifted[:, :, s + 1], labels[:, :, s])

    def test_unpadded_extent_restored(self):
        """Test in-plane extents not divisible by the pooling factor are cropped back."""
        state = build_topology(TopologyConfig(family=Family.UNET, base_width=4), seed=0)
        labels, contour = predict_slices(state, np.zeros((13, 10, 3)))

        assert labels.shape == (13, 10, 3)
        assert contour is None

    def test_restores_training_mode(self):
        """Test the network's mode is restored after inference."""
        state = build_topology(TopologyConfig(family=Family.UNET, base_width=4), seed=0)
        state.network.train()
        predict_slices(state, np.zeros((8, 8, 2)))
        assert state.network.training


class TestInfer:
    """Test region inference."""

    def test_zero_logits_give_empty_mask(self):
        """Test a constant-zero model yields an empty mask without failing."""
        state = build_topology(TopologyConfig(family=Family.HF, tcl_count=1, base_width=4), seed=0)
        with torch.no_grad():
            for param in state.network.parameters():
                param.zero_()

        mask, heatmaps = infer(state, _region(), _cfg())

        assert mask.voxel_count == 0
        assert mask.dims == (16, 16, 16)
        assert heatmaps.dims == (16, 16, 16)
        assert not heatmaps.data.any()

    def test_region_mismatch(self):
        """Test a region of the wrong size is rejected."""
        state = build_topology(TopologyConfig(family=Family.UNET, base_width=4), seed=0)
        with pytest.raises(GeometryError, match="crop size"):
            infer(state, _region(16), _cfg(24))

    def test_unet_heatmaps_are_zero(self):
        """Test a model without contour head emits zero heatmaps."""
        state = build_topology(TopologyConfig(family=Family.UNET, base_width=4), seed=0)
        _, heatmaps = infer(state, _region(), _cfg())
        assert not heatmaps.data.any()
        assert heatmaps.sigma == 5.0


class TestLargestComponent:
    """Test connected-component post-processing."""

    def test_keeps_largest(self):
        """Test the bigger of two blobs survives."""
        mask = np.zeros((8, 8, 8), dtype=np.uint8)
        mask[0:2, 0:2, 0:2] = 1
        mask[5, 5, 5] = 1
        kept = largest_component(mask)

        assert kept.sum() == 8
        assert kept[5, 5, 5] == 0

    def test_diagonal_neighbours_are_separate(self):
        """Test components are 6-connected."""
        mask = np.zeros((4, 4, 4), dtype=np.uint8)
        mask[0, 0, 0] = mask[1, 1, 0] = mask[1, 2, 0] = 1
        assert largest_component(mask).sum() == 2

    def test_empty(self):
        """Test an empty mask stays empty."""
        assert not largest_component(np.zeros((3, 3, 3), dtype=np.uint8)).any()
