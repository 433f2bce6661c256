import struct

import numpy as np
import pytest

from ligspace.checkpoint import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_sidecar,
    save_checkpoint,
)
from ligspace.errors import FormatError, MissingInputError
from ligspace.nn import ParamDict


def _params():
    params = ParamDict()
    params.add("layer0.w", np.arange(6, dtype=float).reshape(2, 3))
    params.add("scale", np.array(0.25))
    params.add("bias", np.array([1e-300, -2.5]))
    return params


def test_layout():
    """The header spells magic, version and tensor count."""
    blob = encode_checkpoint(_params())
    assert blob[:4] == b"CKPT"
    assert struct.unpack_from("<II", blob, 4) == (1, 3)
    (name_len,) = struct.unpack_from("<H", blob, 12)
    assert blob[14:14 + name_len] == b"layer0.w"


def test_save_and_load(tmp_path):
    """Saved parameters and the config sidecar come back unchanged."""
    path = save_checkpoint(tmp_path / "m.ckpt", _params(), {"kind": "demo", "dim": 3})
    loaded = load_checkpoint(path)
    assert list(loaded) == ["layer0.w", "scale", "bias"]
    for name, p in _params().items():
        np.testing.assert_array_equal(loaded[name].data, p.data)
        assert loaded[name].shape == p.shape
    assert load_sidecar(path) == {"kind": "demo", "dim": 3}


def test_bad_magic():
    """Files without the magic are rejected."""
    with pytest.raises(FormatError, match="bad magic"):
        decode_checkpoint(b"NOPE" + bytes(8))


def test_truncated():
    """A short payload is reported."""
    blob = encode_checkpoint(_params())
    with pytest.raises(FormatError, match="truncated"):
        decode_checkpoint(blob[:-4])


def test_trailing_bytes():
    """Bytes after the last tensor are rejected."""
    with pytest.raises(FormatError, match="trailing"):
        decode_checkpoint(encode_checkpoint(_params()) + b"\0")


def test_wrong_version():
    """Only version 1 is understood."""
    blob = bytearray(encode_checkpoint(_params()))
    blob[4:8] = struct.pack("<I", 2)
    with pytest.raises(FormatError, match="version 2"):
        decode_checkpoint(bytes(blob))


def test_missing_files(tmp_path):
    """Absent checkpoints and sidecars are usage errors."""
    with pytest.raises(MissingInputError, match="checkpoint not found"):
        load_checkpoint(tmp_path / "none.ckpt")
    path = save_checkpoint(tmp_path / "bare.ckpt", _params())
    with pytest.raises(MissingInputError, match="config not found"):
        load_sidecar(path)
