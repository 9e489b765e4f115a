"""
TNSR binary tensor files.

Layout (little-endian): magic ``TNSR``, u32 version (1), u32 ndim, ndim × u64 dims,
u8 dtype code (1 = float32, 2 = float64), then the row-major payload.
"""
from pathlib import Path
from typing import Union
import struct

import numpy as np

from drat.core.errors import DataIOError, TensorFormatError

MAGIC = b"TNSR"
VERSION = 1
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
CODE_FOR_DTYPE = {"float32": 1, "float64": 2}

PathLike = Union[str, Path]


def encode_tensor(array: np.ndarray, dtype: str = "float64") -> bytes:
    if dtype not in CODE_FOR_DTYPE:
        raise TensorFormatError(f"Unsupported dtype {dtype!r}; use float32 or float64")
    code = CODE_FOR_DTYPE[dtype]
    data = np.ascontiguousarray(array, dtype=DTYPE_CODES[code])
    header = MAGIC + struct.pack("<II", VERSION, data.ndim)
    header += struct.pack(f"<{data.ndim}Q", *data.shape) + struct.pack("<B", code)
    return header + data.tobytes(order="C")


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise TensorFormatError("Missing TNSR magic")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise TensorFormatError(f"Unsupported TNSR version {version}")
    offset = 12
    if len(blob) < offset + 8 * ndim + 1:
        raise TensorFormatError("Truncated TNSR header")
    shape = struct.unpack_from(f"<{ndim}Q", blob, offset)
    offset += 8 * ndim
    (code,) = struct.unpack_from("<B", blob, offset)
    offset += 1
    if code not in DTYPE_CODES:
        raise TensorFormatError(f"Unknown TNSR dtype code {code}")
    dtype = DTYPE_CODES[code]
    count = int(np.prod(shape)) if ndim else 1
    expected = count * dtype.itemsize
    if len(blob) - offset != expected:
        raise TensorFormatError(f"TNSR payload holds {len(blob) - offset} bytes, expected {expected}")
    return np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape).astype(np.float64)


def save_tensor(path: PathLike, array: np.ndarray, dtype: str = "float64") -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_tensor(array, dtype))
    except OSError as exc:
        raise DataIOError(f"Cannot write tensor to {path}: {exc}") from exc


def load_tensor(path: PathLike) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataIOError(f"Cannot read tensor from {path}: {exc}") from exc
    try:
        return decode_tensor(blob)
    except TensorFormatError as exc:
        raise TensorFormatError(f"{path}: {exc.detail}") from exc
