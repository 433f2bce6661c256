"""Binary parameter checkpoints.

Layout (little endian): magic ``CKPT`` | version u32 | tensor count u32 |
per tensor: name length u16, UTF-8 name, rank u8, dims u32 each, f64 payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ligspace.errors import FormatError, MissingInputError
from ligspace.nn import ParamDict
from ligspace.tensor import Tensor

MAGIC = b"CKPT"
VERSION = 1


def encode_checkpoint(params: Mapping[str, Tensor]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, tensor in params.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"parameter name too long: {name[:40]}...")
        if tensor.ndim > 0xFF:
            raise FormatError(f"tensor '{name}' has too many dims")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    return b"".join(chunks)


def decode_checkpoint(blob: bytes) -> ParamDict:
    if blob[:4] != MAGIC:
        raise FormatError("not a checkpoint: bad magic")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        offset = 12
        params = ParamDict()
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if offset + 8 * size > len(blob):
                raise FormatError(f"truncated payload for tensor '{name}'")
            data = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(dims)
            offset += 8 * size
            params.add(name, data.astype(np.float64))
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from exc
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after last tensor")
    return params


def save_checkpoint(path: str | Path, params: Mapping[str, Tensor],
                    config: Mapping[str, Any] | None = None) -> Path:
    """Write *params*, and *config* as a ``.config.json`` sidecar when given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(params))
    if config is not None:
        sidecar_path(path).write_text(json.dumps(dict(config), indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path: str | Path) -> ParamDict:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def load_sidecar(path: str | Path) -> dict[str, Any]:
    side = sidecar_path(Path(path))
    if not side.exists():
        raise MissingInputError(f"checkpoint config not found: {side}")
    return json.loads(side.read_text())


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".config.json")


__all__ = [
    "MAGIC",
    "VERSION",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "load_sidecar",
    "sidecar_path",
]
