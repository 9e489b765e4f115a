import struct

import numpy as np
import pytest

from drat.core.errors import DataIOError, TensorFormatError
from drat.core.serialization import decode_tensor, encode_tensor, load_tensor, save_tensor


def test_header_layout():
    blob = encode_tensor(np.arange(6.0).reshape(2, 3), dtype="float32")
    assert blob[:4] == b"TNSR"
    assert struct.unpack_from("<II", blob, 4) == (1, 2)
    assert struct.unpack_from("<2Q", blob, 12) == (2, 3)
    assert blob[28] == 1
    assert len(blob) == 29 + 6 * 4


def test_float64_file_is_bitwise(tmp_path, rng):
    array = rng.normal(size=(3, 2, 4))
    save_tensor(tmp_path / "x.tnsr", array)
    loaded = load_tensor(tmp_path / "x.tnsr")
    assert loaded.dtype == np.float64
    assert loaded.tobytes() == array.tobytes()


def test_float32_payload_widens_on_read():
    array = np.array([[0.5, -1.25]], dtype=np.float32)
    out = decode_tensor(encode_tensor(array, dtype="float32"))
    assert out.dtype == np.float64
    np.testing.assert_array_equal(out, array.astype(np.float64))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"XXXX" + b[4:],
        lambda b: b[:4] + struct.pack("<I", 2) + b[8:],
        lambda b: b[:-1],
        lambda b: b[:28] + bytes([9]) + b[29:],
    ],
)
def test_malformed_blobs_rejected(mutate):
    blob = encode_tensor(np.ones((2, 3)))
    with pytest.raises(TensorFormatError):
        decode_tensor(mutate(blob))


def test_unsupported_dtype_rejected():
    with pytest.raises(TensorFormatError):
        encode_tensor(np.ones(2), dtype="int32")


def test_missing_file_is_data_io_error(tmp_path):
    with pytest.raises(DataIOError):
        load_tensor(tmp_path / "missing.tnsr")
