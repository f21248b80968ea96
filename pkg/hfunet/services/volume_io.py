"""Little-endian ``HFV1`` volume file format.

Layout: magic ``b"HFV1"``, u32 nx, ny, nz, f32 sx, sy, sz, u8 dtype (0 = f32 image,
1 = u8 label), then the payload in x-fastest order.
"""

import struct
from pathlib import Path

import numpy as np

from hfunet.errors import VolumeErrorCode, VolumeFormatError
from hfunet.models.volume import LabelVolume, Volume

MAGIC = b"HFV1"
HEADER = struct.Struct("<4s3I3fB")
DTYPE_IMAGE = 0
DTYPE_LABEL = 1
MAX_VOXELS = 1 << 31

_PAYLOAD_DTYPES: dict[int, np.dtype] = {
    DTYPE_IMAGE: np.dtype("<f4"),
    DTYPE_LABEL: np.dtype("u1"),
}


def encode_volume(v: Volume) -> bytes:
    """Serialize a volume (or label volume) to bytes."""
    dtype_code = DTYPE_LABEL if isinstance(v, LabelVolume) else DTYPE_IMAGE
    nx, ny, nz = v.dims
    header = HEADER.pack(MAGIC, nx, ny, nz, *v.spacing, dtype_code)
    payload = np.asarray(v.data, dtype=_PAYLOAD_DTYPES[dtype_code]).ravel(order="F")
    return header + payload.tobytes()


def decode_volume(blob: bytes) -> Volume | LabelVolume:
    """Parse bytes produced by :func:`encode_volume`.

    Raises:
        VolumeFormatError: With a distinct code for bad magic, unknown dtype,
            dimension overflow, a short header, a truncated payload or trailing bytes
    """
    lead = blob[: len(MAGIC)]
    if not lead or lead != MAGIC[: len(lead)]:
        raise VolumeFormatError(VolumeErrorCode.BAD_MAGIC, f"expected {MAGIC!r} header")
    if len(blob) < HEADER.size:
        raise VolumeFormatError(
            VolumeErrorCode.TRUNCATED_HEADER, f"header needs {HEADER.size} bytes, got {len(blob)}"
        )
    magic, nx, ny, nz, sx, sy, sz, dtype_code = HEADER.unpack_from(blob)
    del magic

    if dtype_code not in _PAYLOAD_DTYPES:
        raise VolumeFormatError(VolumeErrorCode.BAD_DTYPE, f"unknown dtype code {dtype_code}")

    voxels = nx * ny * nz
    if min(nx, ny, nz) < 1 or voxels > MAX_VOXELS:
        raise VolumeFormatError(
            VolumeErrorCode.DIM_OVERFLOW, f"dims {(nx, ny, nz)} outside 1..{MAX_VOXELS} voxels"
        )

    dtype = _PAYLOAD_DTYPES[dtype_code]
    expected = voxels * dtype.itemsize
    available = len(blob) - HEADER.size
    if available < expected:
        raise VolumeFormatError(
            VolumeErrorCode.TRUNCATED_PAYLOAD,
            f"header declares {voxels} voxels ({expected} bytes) but payload has {available} bytes",
        )
    if available > expected:
        raise VolumeFormatError(
            VolumeErrorCode.TRAILING_DATA, f"{available - expected} bytes after payload"
        )

    data = np.frombuffer(blob, dtype=dtype, count=voxels, offset=HEADER.size)
    data = data.reshape((nx, ny, nz), order="F").copy()
    spacing = (float(sx), float(sy), float(sz))
    if dtype_code == DTYPE_LABEL:
        return LabelVolume(spacing=spacing, data=data)
    return Volume(spacing=spacing, data=data)


def write_volume(path: str | Path, v: Volume) -> Path:
    """Write a volume file, creating parent directories.

    Returns:
        The written path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(encode_volume(v))
    return target


def read_volume(path: str | Path) -> Volume | LabelVolume:
    """Read a volume file written by :func:`write_volume`."""
    return decode_volume(Path(path).read_bytes())


def read_label(path: str | Path) -> LabelVolume:
    """Read a file that must hold a label volume.

    Raises:
        VolumeFormatError: If the file stores an image payload
    """
    volume = read_volume(path)
    if not isinstance(volume, LabelVolume):
        raise VolumeFormatError(VolumeErrorCode.BAD_DTYPE, f"{path} holds an image, not a label")
    return volume


def read_image(path: str | Path) -> Volume:
    """Read a file that must hold an image volume.

    Raises:
        VolumeFormatError: If the file stores a label payload
    """
    volume = read_volume(path)
    if isinstance(volume, LabelVolume):
        raise VolumeFormatError(VolumeErrorCode.BAD_DTYPE, f"{path} holds a label, not an image")
    return volume
