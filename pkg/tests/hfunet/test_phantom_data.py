"""Tests for phantom generation, preprocessing and patch sampling."""

import numpy as np
import pytest

from hfunet.errors import GeometryError, PhantomSpecError
from hfunet.models.phantom import PhantomCohortSpec, PhantomSpec
from hfunet.models.volume import LabelVolume, SliceStack, Volume
from hfunet.services.contour_labels import heatmap_stack
from hfunet.services.phantom_data import (
    body_crop_box,
    cohort_specs,
    generate_phantom,
    preprocess,
    preprocess_case,
    resample_volume,
    sample_training_patches,
    slice_indices,
)


def _clean_spec(**overrides) -> PhantomSpec:
    values = {
        "dims": (64, 64, 64),
        "radii": (20.0, 14.0, 16.0),
        "radial_perturbation_amplitude": 0.0,
        "noise_sigma": 0.0,
        "boundary_blur_sigma": 0.0,
    }
    values.update(overrides)
    return PhantomSpec(**values)


class TestGeneratePhantom:
    """Test synthetic phantom generation."""

    def test_unperturbed_label_is_exact_ellipsoid(self):
        """Test the label equals the analytic ellipsoid interior."""
        spec = _clean_spec(spacing=(1.0, 1.0, 2.0), dims=(64, 64, 48), radii=(18.0, 12.0, 30.0))
        _, label = generate_phantom(spec)

        cx, cy, cz = spec.center()
        x, y, z = np.meshgrid(np.arange(64), np.arange(64), np.arange(48), indexing="ij")
        expected = ((x - cx) / 18.0) ** 2 + ((y - cy) / 12.0) ** 2 + ((z - cz) * 2.0 / 30.0) ** 2 <= 1
        assert np.array_equal(label.data.astype(bool), expected)

    def test_same_seed_is_bit_identical(self):
        """Test two generations with seed 7 match exactly."""
        spec = PhantomSpec(dims=(48, 48, 40), radii=(12.0, 9.0, 10.0), seed=7)
        image_a, label_a = generate_phantom(spec)
        image_b, label_b = generate_phantom(spec)

        assert image_a == image_b
        assert label_a == label_b

    def test_different_seeds_differ(self):
        """Test the seed changes the noise realisation."""
        image_a, _ = generate_phantom(PhantomSpec(dims=(48, 48, 40), radii=(12.0, 9.0, 10.0), seed=1))
        image_b, _ = generate_phantom(PhantomSpec(dims=(48, 48, 40), radii=(12.0, 9.0, 10.0), seed=2))
        assert not np.array_equal(image_a.data, image_b.data)

    def test_voxel_count_close_to_analytic_volume(self):
        """Test the label volume is within 1% of (4/3) pi abc."""
        _, label = generate_phantom(_clean_spec())
        analytic = 4.0 / 3.0 * np.pi * 20 * 14 * 16
        assert abs(label.voxel_count - analytic) / analytic < 0.01

    def test_noise_free_intensities(self):
        """Test intensities are air outside the body and background plus contrast inside."""
        spec = _clean_spec(contrast_delta=0.5)
        image, label = generate_phantom(spec)

        assert np.all(image.data[0, :, :] == pytest.approx(-1.0))
        organ = label.data.astype(bool)
        assert np.allclose(image.data[organ], 0.5)
        body = np.zeros(spec.dims, dtype=bool)
        body[2:-2, 2:-2, :] = True
        assert np.allclose(image.data[body & ~organ], 0.0)

    def test_geometry_matches(self):
        """Test image and label share dims and spacing."""
        image, label = generate_phantom(PhantomSpec(dims=(48, 48, 40), radii=(12.0, 9.0, 10.0)))
        assert image.same_geometry(label)
        assert image.data.dtype == np.float32
        assert label.data.dtype == np.uint8

    def test_organ_too_large_rejected(self):
        """Test an organ violating the margin is rejected with an explanation."""
        spec = _clean_spec(radii=(30.0, 14.0, 16.0))
        with pytest.raises(PhantomSpecError, match="axis x"):
            generate_phantom(spec)


class TestCohortSpecs:
    """Test cohort spec derivation."""

    def test_cases_vary_but_are_reproducible(self):
        """Test per-case specs differ from each other and repeat for the same seed."""
        cohort = PhantomCohortSpec(base=PhantomSpec(dims=(64, 64, 48), radii=(14.0, 10.0, 10.0)))
        first = cohort_specs(cohort, 4, seed=3)
        second = cohort_specs(cohort, 4, seed=3)

        assert first == second
        assert len({spec.seed for spec in first}) == 4
        assert len({spec.radii for spec in first}) == 4

    def test_zero_count(self):
        """Test an empty cohort."""
        assert cohort_specs(PhantomCohortSpec(), 0, seed=0) == []


class TestPreprocess:
    """Test resampling, body crop and normalization."""

    def test_constant_volume_maps_to_zeros(self):
        """Test the degenerate normalization rule."""
        volume = Volume(spacing=(1.0, 1.0, 1.0), data=np.full((6, 5, 4), 0.3))
        result = preprocess(volume)
        assert np.all(result.data == 0.0)

    def test_endpoints_at_target_spacing(self):
        """Test min maps to -1 and max to +1 with only an affine rescale."""
        rng = np.random.default_rng(0)
        data = rng.uniform(0.0, 5.0, size=(6, 7, 5))
        volume = Volume(spacing=(1.0, 1.0, 1.0), data=data)

        result = preprocess(volume)

        source = volume.data.astype(np.float64)
        expected = 2.0 * (source - source.min()) / (source.max() - source.min()) - 1.0
        assert result.dims == volume.dims
        assert result.data.min() == pytest.approx(-1.0)
        assert result.data.max() == pytest.approx(1.0)
        assert np.allclose(result.data, expected, atol=1e-6)

    def test_linear_ramp_downsampling(self):
        """Test 2x downsampling of a ramp along x evaluates the ramp at the new coordinates."""
        x = np.arange(16, dtype=np.float64)
        data = np.broadcast_to(x[:, None, None], (16, 4, 3)).copy()
        volume = Volume(spacing=(1.0, 1.0, 1.0), data=data)

        result = resample_volume(volume, (2.0, 1.0, 1.0))

        assert result.dims == (8, 4, 3)
        assert result.spacing == (2.0, 1.0, 1.0)
        expected = 2.0 * np.arange(8)
        for i in range(1, 7):
            assert np.allclose(result.data[i], expected[i], atol=1e-6)

    def test_label_resampling_stays_binary(self):
        """Test nearest-neighbour resampling keeps a label volume binary."""
        label = LabelVolume(spacing=(1.0, 1.0, 1.0), data=np.eye(8)[:, :, None].repeat(4, axis=2))
        result = resample_volume(label, (2.0, 2.0, 1.0), order=0)
        assert isinstance(result, LabelVolume)
        assert set(np.unique(result.data)) <= {0, 1}

    def test_output_range_on_phantom(self):
        """Test outputs stay in [-1, 1] and the crop removes the air frame."""
        image, _ = generate_phantom(PhantomSpec(dims=(48, 48, 40), radii=(12.0, 9.0, 10.0), body_margin=6))
        result = preprocess(image)
        assert result.data.min() >= -1.0
        assert result.data.max() <= 1.0
        assert result.dims[0] < 48

    def test_empty_foreground_rejected(self):
        """Test a volume with nothing above the threshold is rejected."""
        volume = Volume(spacing=(1.0, 1.0, 1.0), data=np.full((4, 4, 4), -1.0))
        with pytest.raises(GeometryError, match="Empty foreground"):
            preprocess(volume)

    def test_crop_box_padding(self):
        """Test the body crop pads by two voxels and clamps at borders."""
        data = np.full((20, 20, 20), -1.0)
        data[5:10, 0:3, 15:20] = 0.0
        box = body_crop_box(Volume(spacing=(1.0, 1.0, 1.0), data=data), -0.95)
        assert box.lo == (3, 0, 13)
        assert box.hi == (12, 5, 20)

    def test_preprocess_case_keeps_label_aligned(self):
        """Test the label is cropped with the image crop box."""
        image, label = generate_phantom(
            PhantomSpec(dims=(48, 48, 40), radii=(12.0, 9.0, 10.0), body_margin=6)
        )
        case = preprocess_case(image, label)
        assert case.image.same_geometry(case.label)
        assert case.label.voxel_count == label.voxel_count
        assert np.array_equal(case.label.data, label.data[case.crop.slices()])


class TestSliceIndices:
    """Test edge-replicated slice windows."""

    def test_interior(self):
        """Test an interior window."""
        assert slice_indices(5, 3, 10).tolist() == [4, 5, 6]

    def test_border_replication(self):
        """Test slice 0 uses slices (0, 0, 1)."""
        assert slice_indices(0, 3, 10).tolist() == [0, 0, 1]
        assert slice_indices(9, 3, 10).tolist() == [8, 9, 9]


class TestSampleTrainingPatches:
    """Test 2.5D patch sampling."""

    @pytest.fixture
    def case(self):
        """Small phantom with heatmaps."""
        image, label = generate_phantom(
            PhantomSpec(dims=(40, 40, 24), radii=(9.0, 7.0, 6.0), seed=5)
        )
        return image, label, heatmap_stack(label)

    def test_zero_patches(self, case):
        """Test n = 0 returns an empty list."""
        image, label, heatmaps = case
        assert sample_training_patches(image, label, heatmaps, 0, rng_seed=1, patch_size=16) == []

    def test_same_seed_identical(self, case):
        """Test the same seed reproduces the patch list."""
        image, label, heatmaps = case
        first = sample_training_patches(image, label, heatmaps, 6, rng_seed=11, patch_size=16)
        second = sample_training_patches(image, label, heatmaps, 6, rng_seed=11, patch_size=16)
        for a, b in zip(first, second, strict=True):
            assert a.stack.offset == b.stack.offset
            assert np.array_equal(a.stack.data, b.stack.data)

    def test_targets_match_recrop(self, case):
        """Test mask and heatmap equal the re-cropped middle slice exactly."""
        image, label, heatmaps = case
        patches = sample_training_patches(image, label, heatmaps, 20, rng_seed=2, patch_size=16)
        bbox = label.bounding_box()

        assert len(patches) == 20
        for patch in patches:
            x0, y0, z = patch.stack.offset
            assert isinstance(patch.stack, SliceStack)
            assert patch.stack.depth == 3
            assert np.array_equal(patch.mask, label.data[x0 : x0 + 16, y0 : y0 + 16, z])
            assert np.array_equal(patch.heatmap, heatmaps.data[x0 : x0 + 16, y0 : y0 + 16, z])
            assert np.array_equal(
                patch.stack.data[patch.stack.depth // 2], image.data[x0 : x0 + 16, y0 : y0 + 16, z]
            )
            assert bbox[0][0] - 8 <= x0 + 8 <= bbox[0][1] + 8
            assert bbox[1][0] - 8 <= y0 + 8 <= bbox[1][1] + 8

    def test_patch_larger_than_volume(self, case):
        """Test an oversized patch is rejected."""
        image, label, heatmaps = case
        with pytest.raises(GeometryError, match="exceeds"):
            sample_training_patches(image, label, heatmaps, 1, rng_seed=0, patch_size=64)

    def test_geometry_mismatch(self, case):
        """Test misaligned inputs are rejected."""
        image, _, heatmaps = case
        other = LabelVolume(spacing=(1.0, 1.0, 1.0), data=np.zeros((40, 40, 23), dtype=np.uint8))
        with pytest.raises(GeometryError, match="mismatch"):
            sample_training_patches(image, other, heatmaps, 1, rng_seed=0, patch_size=16)
