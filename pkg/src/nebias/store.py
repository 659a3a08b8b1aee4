"""Binary persistence: named float64 blocks and model checkpoints.

One shared on-disk encoding backs both corpus frame files and model
checkpoints: little-endian float64 blocks, each preceded by a name and an
explicit shape header. Checkpoints additionally carry a JSON config header.
All writes are byte-deterministic for fixed inputs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "StoreFormatError",
    "write_blocks",
    "read_blocks",
    "save_checkpoint",
    "load_checkpoint",
]

_BLOCK_MAGIC = b"NEBB"
_CKPT_MAGIC = b"NEBC"
FORMAT_VERSION = 1


class StoreFormatError(ValueError):
    """Corrupted, truncated, or version-mismatched store file."""


def _write_block(fh, name: str, arr: np.ndarray):
    data = np.ascontiguousarray(arr, dtype="<f8")
    name_b = name.encode("utf-8")
    fh.write(struct.pack("<I", len(name_b)))
    fh.write(name_b)
    fh.write(struct.pack("<I", data.ndim))
    fh.write(struct.pack(f"<{data.ndim}q", *data.shape))
    fh.write(data.tobytes())


def _read_exact(fh, n: int, context: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise StoreFormatError(f"truncated file while reading {context}")
    return buf


def _read_block(fh, context: str):
    head = fh.read(4)
    if not head:
        return None
    if len(head) != 4:
        raise StoreFormatError(f"truncated block header in {context}")
    (name_len,) = struct.unpack("<I", head)
    name = _read_exact(fh, name_len, f"block name in {context}").decode("utf-8")
    (ndim,) = struct.unpack("<I", _read_exact(fh, 4, f"block '{name}'"))
    shape = struct.unpack(f"<{ndim}q", _read_exact(fh, 8 * ndim, f"shape of block '{name}'"))
    count = int(np.prod(shape)) if shape else 1
    raw = _read_exact(fh, 8 * count, f"data of block '{name}'")
    arr = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    return name, arr


def write_blocks(path, blocks):
    """Write an ordered sequence of (name, array) float64 blocks."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_BLOCK_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        for name, arr in blocks:
            _write_block(fh, name, np.asarray(arr))


def read_blocks(path):
    """Yield (name, array) blocks in file order."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BLOCK_MAGIC:
            raise StoreFormatError(f"{path.name}: not a block file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise StoreFormatError(f"{path.name}: unsupported format version {version}")
        while True:
            block = _read_block(fh, path.name)
            if block is None:
                return
            yield block


def save_checkpoint(path, header: dict, tensors: dict):
    """Save named tensors plus a JSON header. Tensor order is name-sorted."""
    path = Path(path)
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    header_b = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(header_b)))
        fh.write(header_b)
        for name in sorted(tensors):
            _write_block(fh, name, np.asarray(tensors[name]))


def load_checkpoint(path):
    """Return (header, {name: array}) from a checkpoint file."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CKPT_MAGIC:
            raise StoreFormatError(f"{path.name}: not a checkpoint file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise StoreFormatError(f"{path.name}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        header = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
        tensors = {}
        while True:
            block = _read_block(fh, path.name)
            if block is None:
                break
            tensors[block[0]] = block[1]
        return header, tensors
