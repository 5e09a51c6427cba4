"""EVF1 (event frames) and PRM1 (probability maps) binary containers.

Both are little-endian: a 4-byte magic, a run of u32 header fields, then a
float32 payload in C order.

    EVF1: magic 'EVF1', K, H, W, dt_us, then K*H*W floats
    PRM1: magic 'PRM1', K, C, H, W,     then K*C*H*W floats
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .events import FrameStack

EVF_MAGIC = b"EVF1"
PRM_MAGIC = b"PRM1"
_F32 = np.dtype("<f4")


def _pack(magic: bytes, header: tuple[int, ...], payload: np.ndarray) -> bytes:
    data = np.ascontiguousarray(payload, dtype=_F32)
    return magic + struct.pack(f"<{len(header)}I", *header) + data.tobytes()


def _unpack(raw: bytes, magic: bytes, n_header: int, source) -> tuple[tuple[int, ...], np.ndarray]:
    if raw[:4] != magic:
        raise FormatError(f"{source}: bad magic {raw[:4]!r}, expected {magic!r}")
    hdr_end = 4 + 4 * n_header
    if len(raw) < hdr_end:
        raise FormatError(f"{source}: truncated header")
    header = struct.unpack(f"<{n_header}I", raw[4:hdr_end])
    count = 1
    for dim in header[:4 if magic == PRM_MAGIC else 3]:
        count *= dim
    expected = hdr_end + 4 * count
    if len(raw) < expected:
        raise FormatError(f"{source}: truncated payload ({len(raw)} of {expected} bytes)")
    if len(raw) > expected:
        raise FormatError(f"{source}: {len(raw) - expected} trailing bytes after payload")
    values = np.frombuffer(raw, dtype=_F32, count=count, offset=hdr_end).astype(np.float32)
    if count and (np.isnan(values).any() or values.min() < 0.0 or values.max() > 1.0):
        raise FormatError(f"{source}: payload value outside [0, 1]")
    return header, values


def encode_evf(stack: FrameStack) -> bytes:
    return _pack(EVF_MAGIC, (stack.k_count, stack.height, stack.width, stack.dt), stack.values)


def decode_evf(raw: bytes, source="<bytes>") -> FrameStack:
    (K, H, W, dt), values = _unpack(raw, EVF_MAGIC, 4, source)
    if dt < 1:
        raise FormatError(f"{source}: dt_us must be >= 1")
    return FrameStack(values.reshape(K, H, W), dt)


def write_evf(stack: FrameStack, path) -> None:
    Path(path).write_bytes(encode_evf(stack))


def read_evf(path) -> FrameStack:
    path = Path(path)
    return decode_evf(path.read_bytes(), source=path)


def encode_prm(values: np.ndarray) -> bytes:
    values = np.asarray(values)
    if values.ndim != 4:
        raise FormatError(f"PRM1 payload must be K x C x H x W, got shape {values.shape}")
    return _pack(PRM_MAGIC, tuple(int(s) for s in values.shape), values)


def decode_prm(raw: bytes, source="<bytes>") -> np.ndarray:
    (K, C, H, W), values = _unpack(raw, PRM_MAGIC, 4, source)
    return values.reshape(K, C, H, W)


def write_prm(values, path) -> None:
    """Write a ``K x C x H x W`` array (or anything exposing ``.values``)."""
    values = getattr(values, "values", values)
    Path(path).write_bytes(encode_prm(values))


def read_prm(path) -> np.ndarray:
    path = Path(path)
    return decode_prm(path.read_bytes(), source=path)
