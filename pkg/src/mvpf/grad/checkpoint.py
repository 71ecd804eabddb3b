"""MVPF checkpoint files.

Layout (little-endian)::

    b"MVPF" | version:u32 | record*
    record = name_len:u32 | name:utf-8 | rank:u32 | dims:u64[rank] | values:f32[prod(dims)]

Records run to end of file. Values are stored as float32, so a float64
model loses precision on save; save -> load -> save is byte-identical.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ContractError

MAGIC = b"MVPF"
VERSION = 1


def dumps(params: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in params.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise ContractError("not an MVPF checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ContractError(f"unsupported MVPF version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(dims)) if rank else 1
            vals = np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
            pos += 4 * count
            out[name] = vals.reshape(dims).astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise ContractError(f"truncated MVPF checkpoint: {exc}") from exc
    return out


def save(path, params: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(params))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
