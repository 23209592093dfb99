"""Raw frame container ("VSSR").

Bit-exact layout: magic ``VSSR``, version u16 LE, layout u8 (0=rgb8, 1=y8),
reserved u8, width u32 LE, height u32 LE, frame_count u32 LE, fps_num u32 LE,
fps_den u32 LE, then frames row-major, channel-interleaved, no padding.
"""
from __future__ import annotations

import struct
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import CorruptGop, FormatMismatch

MAGIC = b"VSSR"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIIIII")

LAYOUT_RGB8 = 0
LAYOUT_Y8 = 1

_CHANNELS = {LAYOUT_RGB8: 3, LAYOUT_Y8: 1}


def frame_shape(width: int, height: int, layout: int) -> tuple:
    channels = _CHANNELS[layout]
    return (height, width, channels) if channels > 1 else (height, width)


def write_raw(path: str | Path, frames: np.ndarray, fps: Fraction,
              layout: int = LAYOUT_RGB8) -> int:
    """Write a (frames, height, width[, channels]) uint8 array. Returns bytes written."""
    frames = np.ascontiguousarray(frames, dtype=np.uint8)
    if frames.ndim == 3:
        n, height, width = frames.shape
        channels = 1
    elif frames.ndim == 4:
        n, height, width, channels = frames.shape
    else:
        raise FormatMismatch(f"expected 3- or 4-d frame array, got ndim={frames.ndim}")
    if channels != _CHANNELS[layout]:
        raise FormatMismatch(f"layout {layout} expects {_CHANNELS[layout]} channels, got {channels}")
    fps = Fraction(fps)
    header = _HEADER.pack(MAGIC, VERSION, layout, 0, width, height, n,
                          fps.numerator, fps.denominator)
    payload = frames.tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return len(header) + len(payload)


def read_raw(path: str | Path) -> tuple[np.ndarray, Fraction, int]:
    """Read a raw container. Returns (frames, fps, layout)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size or blob[:4] != MAGIC:
        raise CorruptGop(f"{path}: bad raw container magic")
    magic, version, layout, _, width, height, n, fps_num, fps_den = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise CorruptGop(f"{path}: unsupported raw container version {version}")
    shape = (n,) + frame_shape(width, height, layout)
    expected = int(np.prod(shape))
    payload = blob[_HEADER.size:]
    if len(payload) != expected:
        raise CorruptGop(f"{path}: payload size {len(payload)} != expected {expected}")
    frames = np.frombuffer(payload, dtype=np.uint8).reshape(shape)
    return frames, Fraction(fps_num, fps_den), layout
