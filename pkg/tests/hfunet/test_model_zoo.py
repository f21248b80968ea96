"""Tests for the topology builder, forward pass and checkpoints."""

import pytest
import torch

from hfunet.errors import CheckpointError, TopologyError
from hfunet.models.presets import COMPARISON_PRESETS, TOPOLOGY_PRESETS, TopologyPreset
from hfunet.models.topology import AttentionMode, BlockKind, Family, ParameterGroup, TopologyConfig
from hfunet.services.checkpoint import load_checkpoint, save_checkpoint
from hfunet.services.model_zoo import ModelState, build_topology


def _mirror_branches(state: ModelState) -> None:
    """Copy the segmentation branch's level blocks into the contour branch."""
    network = state.network
    with torch.no_grad():
        for level in state.cfg.split_levels():
            network.contour_branch[str(level)].load_state_dict(network.seg_branch[str(level)].state_dict())


class TestBuildTopology:
    """Test parameter groups per family."""

    def test_unet_groups(self):
        """Test a U-Net has a shared trunk and a segmentation head only."""
        state = build_topology(TopologyConfig(family=Family.UNET), seed=0)
        groups = state.parameter_groups()

        assert groups[ParameterGroup.SHARED]
        assert groups[ParameterGroup.SEG_BRANCH]
        assert all(name.startswith("seg_branch.head.") for name in groups[ParameterGroup.SEG_BRANCH])
        assert groups[ParameterGroup.CONTOUR_BRANCH] == {}
        assert groups[ParameterGroup.TCL_BLOCKS] == {}

    def test_lb_has_two_top_mappings(self):
        """Test the late-branched net is a shared trunk plus two heads."""
        state = build_topology(TopologyConfig(family=Family.LB), seed=0)
        groups = state.parameter_groups()

        assert all(name.startswith("seg_branch.head.") for name in groups[ParameterGroup.SEG_BRANCH])
        assert all(name.startswith("contour_branch.head.") for name in groups[ParameterGroup.CONTOUR_BRANCH])
        assert groups[ParameterGroup.CONTOUR_BRANCH]
        assert groups[ParameterGroup.TCL_BLOCKS] == {}
        heads = [node for node in state.graph() if node.kind == BlockKind.HEAD]
        assert len(heads) == 2

    def test_more_tcl_blocks_more_parameters(self):
        """Test hf-6 has more parameters than hf-1 at equal width."""
        hf6 = build_topology(TopologyConfig(family=Family.HF, tcl_count=6), seed=0)
        hf1 = build_topology(TopologyConfig(family=Family.HF, tcl_count=1), seed=0)
        assert hf6.total_parameters() > hf1.total_parameters()

    @pytest.mark.parametrize("preset", list(TopologyPreset))
    def test_partition_complete(self, preset):
        """Test group counts sum to the total and names never repeat across groups."""
        state = build_topology(TOPOLOGY_PRESETS[preset].config, seed=0)
        counts = state.group_counts()
        assert sum(counts.values()) == state.total_parameters()
        names = [name for params in state.parameter_groups().values() for name in params]
        assert len(names) == len(set(names))

    def test_tcl_group_matches_levels(self):
        """Test TCL blocks exist exactly at the configured levels."""
        state = build_topology(TopologyConfig(family=Family.HF, tcl_count=3), seed=0)
        assert sorted(int(key) for key in state.network.tcl_blocks) == [5, 6, 7]
        tcl_nodes = [node.level for node in state.graph() if node.kind == BlockKind.TCL]
        assert tcl_nodes == [5, 6, 7]

    def test_seeded_build_is_reproducible(self):
        """Test the same seed gives identical parameters."""
        cfg = TopologyConfig(family=Family.HF, tcl_count=2)
        assert build_topology(cfg, seed=4).checksums() == build_topology(cfg, seed=4).checksums()
        assert build_topology(cfg, seed=4).checksums() != build_topology(cfg, seed=5).checksums()

    def test_set_trainable(self):
        """Test freezing groups toggles requires_grad."""
        state = build_topology(TopologyConfig(family=Family.HF, tcl_count=1), seed=0)
        state.set_trainable({ParameterGroup.SHARED, ParameterGroup.SEG_BRANCH})
        groups = state.parameter_groups()
        assert all(p.requires_grad for p in groups[ParameterGroup.SEG_BRANCH].values())
        assert not any(p.requires_grad for p in groups[ParameterGroup.CONTOUR_BRANCH].values())
        assert not any(p.requires_grad for p in groups[ParameterGroup.TCL_BLOCKS].values())

    def test_frozen_groups_keep_normalization_statistics(self):
        """Test a training-mode forward pass leaves frozen groups' running statistics alone."""
        cfg = TopologyConfig(family=Family.HF, tcl_count=1, base_width=4, normalization=True)
        state = build_topology(cfg, seed=0)
        state.set_trainable({ParameterGroup.SHARED, ParameterGroup.SEG_BRANCH})
        state.train()
        before = state.checksums()

        with torch.no_grad():
            state.forward(torch.randn(2, 3, 32, 32))

        after = state.checksums()
        assert not state.network.contour_branch.training
        assert state.network.seg_branch.training
        assert after[ParameterGroup.CONTOUR_BRANCH] == before[ParameterGroup.CONTOUR_BRANCH]
        assert after[ParameterGroup.TCL_BLOCKS] == before[ParameterGroup.TCL_BLOCKS]
        assert after[ParameterGroup.SEG_BRANCH] != before[ParameterGroup.SEG_BRANCH]

    def test_unfreezing_restores_training_mode(self):
        """Test enabling every group puts all of them back in training mode."""
        cfg = TopologyConfig(family=Family.HF, tcl_count=1, base_width=4, normalization=True)
        state = build_topology(cfg, seed=0)
        state.set_trainable({ParameterGroup.SHARED})
        state.set_trainable(set(ParameterGroup))
        assert all(module.training for module in state.network.modules())

    def test_checksums_cover_buffers(self):
        """Test a changed running mean changes the group checksum."""
        cfg = TopologyConfig(family=Family.HF, tcl_count=1, base_width=4, normalization=True)
        state = build_topology(cfg, seed=0)
        before = state.checksums()
        buffer_name = next(
            name for name, _ in state.network.contour_branch.named_buffers() if name.endswith("running_mean")
        )

        with torch.no_grad():
            state.network.contour_branch.get_buffer(buffer_name).add_(1.0)

        assert state.checksums()[ParameterGroup.CONTOUR_BRANCH] != before[ParameterGroup.CONTOUR_BRANCH]


class TestForward:
    """Test forward evaluation."""

    @pytest.mark.parametrize("preset", COMPARISON_PRESETS)
    def test_output_shapes(self, preset):
        """Test output shapes for every family at base width 8."""
        cfg = TOPOLOGY_PRESETS[preset].config
        state = build_topology(cfg, seed=0)
        with torch.no_grad():
            out = state.forward(torch.randn(2, 3, 64, 64))

        assert out.seg_logits.shape == (2, 2, 64, 64)
        if cfg.family == Family.UNET:
            assert out.contour_pred is None
        else:
            assert out.contour_pred.shape == (2, 1, 64, 64)
        assert len(out.triples) == cfg.tcl_count

    def test_hf6_triple_geometry(self):
        """Test hf-6 triples shrink then grow across levels with identical shapes per triple."""
        state = build_topology(TOPOLOGY_PRESETS[TopologyPreset.HF_6].config, seed=0)
        with torch.no_grad():
            out = state.forward(torch.randn(1, 3, 64, 64))

        assert [t.level for t in out.triples] == [2, 3, 4, 5, 6, 7]
        assert [t.seg.shape[-1] for t in out.triples] == [32, 16, 8, 16, 32, 64]
        for triple in out.triples:
            assert triple.seg.shape == triple.contour.shape == triple.tcl.shape

    @pytest.mark.parametrize("attention", [AttentionMode.CHANNEL, AttentionMode.POSITION, AttentionMode.DUAL])
    def test_attention_variants_forward(self, attention):
        """Test attention variants produce the contract shapes."""
        cfg = TopologyConfig(family=Family.HF, tcl_count=6, attention=attention)
        state = build_topology(cfg, seed=0)
        with torch.no_grad():
            out = state.forward(torch.randn(1, 3, 32, 32))
        assert out.seg_logits.shape == (1, 2, 32, 32)
        assert len(out.triples) == 6

    def test_forward_deterministic(self):
        """Test repeated forward passes agree exactly."""
        state = build_topology(TopologyConfig(family=Family.HF, tcl_count=3), seed=0)
        batch = torch.randn(2, 3, 32, 32)
        with torch.no_grad():
            first, second = state.forward(batch), state.forward(batch)
        assert torch.equal(first.seg_logits, second.seg_logits)
        assert torch.equal(first.contour_pred, second.contour_pred)

    def test_batch_mismatch(self):
        """Test a batch with the wrong slice count is rejected."""
        state = build_topology(TopologyConfig(family=Family.UNET), seed=0)
        with pytest.raises(TopologyError, match="Expected"):
            state.forward(torch.randn(1, 5, 32, 32))

    def test_indivisible_patch(self):
        """Test a patch size not divisible by 2**depth is rejected."""
        state = build_topology(TopologyConfig(family=Family.UNET), seed=0)
        with pytest.raises(TopologyError, match="divisible"):
            state.forward(torch.randn(1, 3, 30, 30))


class TestAlphaZeroDegeneracy:
    """Test the fully-shared regime at alpha = 0."""

    @pytest.mark.parametrize("tcl_count", [1, 3, 6])
    def test_branch_features_equal(self, tcl_count):
        """Test identical branches see identical inputs at every fused level."""
        cfg = TopologyConfig(family=Family.HF, tcl_count=tcl_count, alpha=0.0)
        state = build_topology(cfg, seed=0)
        _mirror_branches(state)
        generator = torch.Generator().manual_seed(0)

        with torch.no_grad():
            for _ in range(10):
                out = state.forward(torch.randn(2, 3, 32, 32, generator=generator))
                assert len(out.triples) == tcl_count
                for triple in out.triples:
                    assert torch.allclose(triple.seg, triple.contour, atol=1e-6)


class TestCheckpoint:
    """Test checkpoint save and load."""

    def test_round_trip(self, tmp_path):
        """Test parameters, checksums and metadata survive a round trip."""
        cfg = TopologyConfig(family=Family.HF, tcl_count=2, attention=AttentionMode.DUAL)
        state = build_topology(cfg, seed=1)
        path = save_checkpoint(tmp_path / "ckpt" / "model.pt", state, {"step": 7})

        restored, metadata = load_checkpoint(path, expected=cfg)

        assert restored.cfg == cfg
        assert restored.checksums() == state.checksums()
        assert metadata == {"step": 7}

    def test_topology_mismatch_rejected(self, tmp_path):
        """Test a checkpoint disagreeing with the requested topology is rejected."""
        state = build_topology(TopologyConfig(family=Family.HF, tcl_count=2), seed=1)
        path = save_checkpoint(tmp_path / "model.pt", state)
        with pytest.raises(CheckpointError, match="disagrees"):
            load_checkpoint(path, expected=TopologyConfig(family=Family.HF, tcl_count=3))

    def test_unreadable_file(self, tmp_path):
        """Test a non-checkpoint file is rejected."""
        path = tmp_path / "bogus.pt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_normalization_buffers_saved(self, tmp_path):
        """Test batch-norm buffers are stored with their group."""
        cfg = TopologyConfig(family=Family.EB, normalization=True)
        state = build_topology(cfg, seed=0)
        state.network.train()
        with torch.no_grad():
            state.forward(torch.randn(2, 3, 16, 16))
        path = save_checkpoint(tmp_path / "model.pt", state)

        restored, _ = load_checkpoint(path)

        original = state.network.state_dict()
        for name, tensor in restored.network.state_dict().items():
            assert torch.equal(tensor, original[name])
