"""Flat binary tensor container with a TOML manifest sidecar.

A ``.tnsr`` file is a sequence of blocks, each an 8-field little-endian
uint32 header (magic, version, w, h, channels, dtype tag, count, reserved)
followed by ``count * channels * h * w`` values. Block names, logical shapes
and any run metadata live in the ``.toml`` manifest next to the file.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import toml

MAGIC = int.from_bytes(b"TNS1", "little")
VERSION = 1

_DTYPE_TAGS = {
    np.dtype("<f4"): 1,
    np.dtype("<i8"): 2,
    np.dtype("u1"): 3,
    np.dtype("<f8"): 4,
}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


class TensorFormatError(ValueError):
    pass


def _canonical_shape(shape: tuple[int, ...]) -> tuple[int, int, int, int]:
    if len(shape) > 4:
        raise TensorFormatError(f"rank {len(shape)} > 4 not representable")
    pad = (1,) * (4 - len(shape)) + tuple(int(s) for s in shape)
    return pad  # (count, channels, h, w)


def write_block(f, arr: np.ndarray) -> None:
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    dt = np.dtype(dt)
    if dt not in _DTYPE_TAGS:
        raise TensorFormatError(f"unsupported dtype {arr.dtype}")
    count, ch, h, w = _canonical_shape(arr.shape)
    header = np.array([MAGIC, VERSION, w, h, ch, _DTYPE_TAGS[dt], count, 0], dtype="<u4")
    f.write(header.tobytes())
    f.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def read_block(f) -> np.ndarray | None:
    raw = f.read(32)
    if not raw:
        return None
    if len(raw) != 32:
        raise TensorFormatError("truncated block header")
    header = np.frombuffer(raw, dtype="<u4")
    magic, version, w, h, ch, tag, count, _ = (int(x) for x in header)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic 0x{magic:08x}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if tag not in _TAG_DTYPES:
        raise TensorFormatError(f"unknown dtype tag {tag}")
    dt = _TAG_DTYPES[tag]
    n = count * ch * h * w
    data = f.read(n * dt.itemsize)
    if len(data) != n * dt.itemsize:
        raise TensorFormatError("truncated block payload")
    return np.frombuffer(data, dtype=dt).reshape(count, ch, h, w).copy()


def save_bundle(base: str | Path, arrays: dict[str, np.ndarray], manifest: dict) -> Path:
    """Write ``<base>.tnsr`` + ``<base>.toml``; returns the tensor path.

    The manifest gains a ``tensors`` table recording block order and logical
    shapes so arrays round-trip with their exact shape.
    """
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    tnsr = base.with_suffix(".tnsr")
    meta = dict(manifest)
    meta["tensors"] = {
        "order": list(arrays.keys()),
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "dtypes": {k: str(v.dtype) for k, v in arrays.items()},
    }
    with open(tnsr, "wb") as f:
        for arr in arrays.values():
            write_block(f, arr)
    with open(base.with_suffix(".toml"), "w") as f:
        toml.dump(meta, f)
    return tnsr


def load_bundle(base: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    base = Path(base)
    if base.suffix in (".tnsr", ".toml"):
        base = base.with_suffix("")
    manifest = toml.load(base.with_suffix(".toml"))
    order = manifest["tensors"]["order"]
    shapes = manifest["tensors"]["shapes"]
    arrays: dict[str, np.ndarray] = {}
    with open(base.with_suffix(".tnsr"), "rb") as f:
        for name in order:
            block = read_block(f)
            if block is None:
                raise TensorFormatError(f"missing block for {name!r}")
            arrays[name] = block.reshape(shapes[name])
        if f.read(1):
            raise TensorFormatError("trailing bytes after final block")
    return arrays, manifest
