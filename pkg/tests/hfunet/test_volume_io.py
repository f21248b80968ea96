"""Tests for the HFV1 volume file format."""

import numpy as np
import pytest

from hfunet.errors import VolumeErrorCode, VolumeFormatError
from hfunet.models.volume import LabelVolume, Volume
from hfunet.services.volume_io import (
    HEADER,
    MAGIC,
    decode_volume,
    encode_volume,
    read_image,
    read_label,
    read_volume,
    write_volume,
)


class TestRoundTrip:
    """Test write then read."""

    def test_image_round_trip(self, tmp_path):
        """Test an image volume survives a file round trip bit-exactly."""
        rng = np.random.default_rng(0)
        volume = Volume(spacing=(0.5, 0.75, 2.5), data=rng.normal(size=(5, 4, 3)))

        path = write_volume(tmp_path / "nested" / "image.hfv", volume)
        restored = read_volume(path)

        assert not isinstance(restored, LabelVolume)
        assert restored == volume
        assert restored.dims == (5, 4, 3)

    def test_label_round_trip(self, tmp_path):
        """Test a label volume keeps its type and payload."""
        rng = np.random.default_rng(1)
        label = LabelVolume(spacing=(1.0, 1.0, 1.0), data=rng.integers(0, 2, size=(3, 6, 2)))

        restored = read_label(write_volume(tmp_path / "label.hfv", label))

        assert restored == label

    def test_spacing_not_exact_in_float32(self):
        """Test a spacing like (0.7, 0.7, 3.3) reads back equal to the written volume."""
        volume = Volume(spacing=(0.7, 0.7, 3.3), data=np.zeros((2, 2, 2)))

        restored = decode_volume(encode_volume(volume))

        assert restored == volume
        assert restored.spacing == volume.spacing
        assert volume.spacing[0] == float(np.float32(0.7))

    def test_spacing_validation_is_idempotent(self):
        """Test rebuilding a volume from its own spacing keeps the value."""
        volume = Volume(spacing=(0.1, 0.3, 1.7), data=np.ones((1, 1, 1)))
        rebuilt = Volume(spacing=volume.spacing, data=volume.data)

        assert rebuilt.spacing == volume.spacing
        assert rebuilt == volume

    def test_payload_is_x_fastest(self):
        """Test the payload is stored with x varying fastest."""
        data = np.arange(24, dtype=np.float32).reshape((2, 3, 4))
        blob = encode_volume(Volume(spacing=(1.0, 1.0, 1.0), data=data))

        payload = np.frombuffer(blob[HEADER.size :], dtype="<f4")
        assert payload[0] == data[0, 0, 0]
        assert payload[1] == data[1, 0, 0]
        assert payload[2] == data[0, 1, 0]

    def test_header_layout(self):
        """Test the header fields."""
        blob = encode_volume(Volume(spacing=(1.0, 2.0, 3.0), data=np.zeros((2, 3, 4))))
        magic, nx, ny, nz, sx, sy, sz, dtype = HEADER.unpack_from(blob)

        assert magic == MAGIC
        assert (nx, ny, nz) == (2, 3, 4)
        assert (sx, sy, sz) == (1.0, 2.0, 3.0)
        assert dtype == 0
        assert len(blob) == HEADER.size + 24 * 4


class TestMalformedFiles:
    """Test distinct failure codes."""

    def test_bad_magic(self):
        """Test a wrong magic is reported as bad magic."""
        blob = encode_volume(Volume(spacing=(1.0, 1.0, 1.0), data=np.zeros((2, 2, 2))))
        with pytest.raises(VolumeFormatError, match="bad magic") as exc_info:
            decode_volume(b"NOPE" + blob[4:])
        assert exc_info.value.error_code is VolumeErrorCode.BAD_MAGIC

    def test_short_blob_with_wrong_start_is_bad_magic(self):
        """Test a short blob that cannot be the start of the magic."""
        with pytest.raises(VolumeFormatError, match="bad magic"):
            decode_volume(b"XY")
        with pytest.raises(VolumeFormatError, match="bad magic"):
            decode_volume(b"")

    def test_truncated_header(self):
        """Test a correct magic followed by fewer bytes than the header holds."""
        blob = encode_volume(Volume(spacing=(1.0, 1.0, 1.0), data=np.zeros((2, 2, 2))))

        for cut in (2, len(MAGIC), HEADER.size - 1):
            with pytest.raises(VolumeFormatError, match="truncated header") as exc_info:
                decode_volume(blob[:cut])
            assert exc_info.value.error_code is VolumeErrorCode.TRUNCATED_HEADER

    def test_truncated_payload(self):
        """Test a header declaring 2^3 voxels with a 7-value payload."""
        blob = HEADER.pack(MAGIC, 2, 2, 2, 1.0, 1.0, 1.0, 0) + np.zeros(7, dtype="<f4").tobytes()
        with pytest.raises(VolumeFormatError, match="truncated payload") as exc_info:
            decode_volume(blob)
        assert exc_info.value.error_code is VolumeErrorCode.TRUNCATED_PAYLOAD

    def test_dim_overflow(self):
        """Test dimensions whose product exceeds the voxel limit."""
        blob = HEADER.pack(MAGIC, 65536, 65536, 2, 1.0, 1.0, 1.0, 1)
        with pytest.raises(VolumeFormatError) as exc_info:
            decode_volume(blob)
        assert exc_info.value.error_code is VolumeErrorCode.DIM_OVERFLOW

    def test_zero_dim(self):
        """Test a zero dimension is rejected as overflow."""
        blob = HEADER.pack(MAGIC, 0, 2, 2, 1.0, 1.0, 1.0, 1)
        with pytest.raises(VolumeFormatError) as exc_info:
            decode_volume(blob)
        assert exc_info.value.error_code is VolumeErrorCode.DIM_OVERFLOW

    def test_unknown_dtype(self):
        """Test an unknown dtype code."""
        blob = HEADER.pack(MAGIC, 1, 1, 1, 1.0, 1.0, 1.0, 7) + b"\x00"
        with pytest.raises(VolumeFormatError) as exc_info:
            decode_volume(blob)
        assert exc_info.value.error_code is VolumeErrorCode.BAD_DTYPE

    def test_trailing_data(self):
        """Test extra bytes after the payload."""
        blob = encode_volume(LabelVolume(spacing=(1.0, 1.0, 1.0), data=np.ones((2, 2, 2))))
        with pytest.raises(VolumeFormatError) as exc_info:
            decode_volume(blob + b"\x00")
        assert exc_info.value.error_code is VolumeErrorCode.TRAILING_DATA

    def test_typed_readers_reject_other_kind(self, tmp_path):
        """Test read_label and read_image check the stored kind."""
        image_path = write_volume(tmp_path / "image.hfv", Volume(spacing=(1.0, 1.0, 1.0), data=np.zeros((2, 2, 2))))
        label_path = write_volume(
            tmp_path / "label.hfv", LabelVolume(spacing=(1.0, 1.0, 1.0), data=np.zeros((2, 2, 2)))
        )

        with pytest.raises(VolumeFormatError, match="holds an image"):
            read_label(image_path)
        with pytest.raises(VolumeFormatError, match="holds a label"):
            read_image(label_path)
