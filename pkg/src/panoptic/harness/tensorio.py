"""Bit-exact tensor container files (extension ``.ptns``).

Layout, all multi-byte fields little-endian:

    bytes 0..3   magic "PTNS"
    bytes 4..7   version, u32, currently 1
    byte  8      dtype code, u8: 0 = f32, 1 = u32, 2 = u8 bool
    byte  9      rank, u8, 1 to 3
    then         rank dims, u32 each, all >= 1
    then         payload, row-major, product(dims) elements

Reads reject malformed files with an error naming the offending field, never
by returning garbage data.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PTNS"
VERSION = 1
FILE_SUFFIX = ".ptns"

_CODE_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<u4"), 2: np.dtype("u1")}
_KIND_TO_CODE = {"f4": 0, "u4": 1, "b1": 2}
MAX_RANK = 3


class TensorFormatError(ValueError):
    """Malformed container; ``field`` names the part that failed."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message

    def __reduce__(self):
        # Keeps the two-argument form picklable across worker processes.
        return (TensorFormatError, (self.field, self.message))


def write_tensor(path, array: np.ndarray) -> None:
    """Serializes a float32, uint32 or bool array of rank 1 to 3.

    Raises:
        TensorFormatError: on unsupported dtype, rank outside 1..3 or a
            zero-length dimension.
    """
    arr = np.asarray(array)
    key = arr.dtype.str.lstrip("<>|=")
    if key not in _KIND_TO_CODE:
        raise TensorFormatError("dtype", f"unsupported dtype {arr.dtype}")
    code = _KIND_TO_CODE[key]
    if not 1 <= arr.ndim <= MAX_RANK:
        raise TensorFormatError("rank", f"rank must be 1..{MAX_RANK}, got {arr.ndim}")
    if min(arr.shape) == 0:
        raise TensorFormatError("dims", f"zero-length dimension in shape {arr.shape}")
    if code == 2:
        payload = np.ascontiguousarray(arr, dtype=bool).astype(np.uint8)
    else:
        payload = np.ascontiguousarray(arr, dtype=_CODE_TO_DTYPE[code])
    header = MAGIC + struct.pack("<I", VERSION) + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + payload.tobytes())


def read_tensor(path) -> np.ndarray:
    """Reads a container back into a numpy array; inverse of write_tensor.

    Raises:
        TensorFormatError: naming the failing field on bad magic, version,
            dtype code, rank, a zero dimension or a truncated payload.
    """
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise TensorFormatError("magic", f"expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < 8:
        raise TensorFormatError("version", "file truncated before version")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise TensorFormatError("version", f"unsupported version {version}")
    if len(data) < 10:
        raise TensorFormatError("dtype", "file truncated before dtype/rank")
    code, rank = struct.unpack_from("<BB", data, 8)
    if code not in _CODE_TO_DTYPE:
        raise TensorFormatError("dtype", f"unknown dtype code {code}")
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError("rank", f"rank must be 1..{MAX_RANK}, got {rank}")
    dims_end = 10 + 4 * rank
    if len(data) < dims_end:
        raise TensorFormatError("dims", "file truncated inside dims")
    dims = struct.unpack_from(f"<{rank}I", data, 10)
    if min(dims) == 0:
        raise TensorFormatError("dims", f"zero-length dimension in {dims}")
    dtype = _CODE_TO_DTYPE[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = data[dims_end:]
    if len(payload) != expected:
        raise TensorFormatError(
            "payload", f"expected {expected} bytes, got {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    if code == 2:
        return arr.astype(bool)
    # Native byte order, writable copy.
    return arr.astype(dtype.newbyteorder("="))
