"""File formats: PFM depth/normal maps, 8-bit PNG images, camera rig JSON."""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError
from .geometry import Camera


def write_pfm(path, data: np.ndarray) -> None:
    """Little-endian PFM; 2-D arrays become ``Pf``, ``[H,W,3]`` arrays ``PF``."""
    data = np.asarray(data, dtype="<f4")
    if data.ndim == 2:
        header = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
    else:
        raise ContractError(f"PFM needs [H,W] or [H,W,3] data, got {data.shape}")
    H, W = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(header + b"\n" + f"{W} {H}\n".encode() + b"-1.0\n")
        fh.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind not in (b"Pf", b"PF"):
            raise ContractError(f"{path}: not a PFM file")
        dims = re.findall(rb"\d+", fh.readline())
        W, H = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        ch = 3 if kind == b"PF" else 1
        raw = np.frombuffer(fh.read(), dtype=dtype, count=W * H * ch)
    arr = raw.reshape((H, W, ch) if ch == 3 else (H, W))[::-1]
    return arr.astype(np.float32)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def quantize(img: np.ndarray) -> np.ndarray:
    """Round-trip a float image through 8 bits, as writing then reading a PNG would."""
    return to_uint8(img).astype(np.float64) / 255.0


def write_png(path, img: np.ndarray) -> None:
    arr = np.asarray(img)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    elif arr.dtype != np.uint8:
        arr = to_uint8(arr)
    Image.fromarray(arr).save(path, optimize=False)


def read_png(path) -> np.ndarray:
    """Float RGB image in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_cameras(path, cameras: list[Camera]) -> None:
    Path(path).write_text(json.dumps([c.to_dict() for c in cameras], indent=1))


def read_cameras(path) -> list[Camera]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list):
        raise ContractError(f"{path}: camera rig must be a JSON array")
    return [Camera.from_dict(d).validate() for d in data]
