"""Reference codecs and the encoded GOP container ("VSSG").

Two lossy reference codecs are provided, both with a real dependency
structure so that decode cost depends on where a read starts:

* ``ref-intra``: every frame is independent.  Pixels are quantized by a
  rounding right-shift of ``q`` bits and entropy-coded per frame.
* ``ref-delta``: frame 0 is intra; each later frame stores the quantized
  difference from the previous *reconstructed* frame, so frame k can only
  be decoded after frames 0..k-1 (a chain dependency).

``zstd-raw`` is the lossless byte-compression layout used by deferred
compression; its ``q`` field carries the compression level in [1..19]
(mapped onto the underlying compressor's native level range).

Container layout (bit-exact): magic ``VSSG``, codec id u8, q u8,
frame_count u16 LE, width u32 LE, height u32 LE, independent bitmap
(ceil(n/8) bytes, LSB-first), per-frame u32 LE byte lengths, payloads.
The codec id byte packs the codec in its low nibble (0=ref-intra,
1=ref-delta, 2=zstd-raw) and the pixel layout in its high nibble
(0=rgb8, 1=y8).
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptGop, DimensionMismatch, EmptyInput

MAGIC = b"VSSG"
_HEADER = struct.Struct("<4sBBHII")

CODEC_INTRA = "ref-intra"
CODEC_DELTA = "ref-delta"
CODEC_LOSSLESS = "zstd-raw"

_CODEC_IDS = {CODEC_INTRA: 0, CODEC_DELTA: 1, CODEC_LOSSLESS: 2}
_CODEC_NAMES = {v: k for k, v in _CODEC_IDS.items()}

MAX_LOSSLESS_LEVEL = 19


def lossless_backend_level(level: int) -> int:
    """Map the public [1..19] level onto the entropy coder's native range."""
    level = max(1, min(MAX_LOSSLESS_LEVEL, int(level)))
    return max(1, min(9, round(level * 9 / MAX_LOSSLESS_LEVEL)))


def _quantize(values: np.ndarray, q: int) -> np.ndarray:
    if q == 0:
        return values.astype(np.int32)
    half = 1 << (q - 1)
    return (values.astype(np.int32) + half) >> q


def _dequantize(values: np.ndarray, q: int) -> np.ndarray:
    return values.astype(np.int32) << q if q else values.astype(np.int32)


@dataclass
class DecodeReport:
    """Extra frames decoded to satisfy a mid-GOP read, split for cost accounting."""
    delta: set = field(default_factory=set)   # frame indices decoded but not requested
    independent: int = 0                      # |A ∩ delta|
    dependent: int = 0                        # |delta| - independent


@dataclass
class EncodedGop:
    codec: str
    q: int
    width: int
    height: int
    channels: int
    frame_count: int
    independent: set            # frame indices with no dependencies (A)
    payloads: list              # per-frame compressed bytes
    mbpp: float

    @property
    def nbytes(self) -> int:
        return sum(len(p) for p in self.payloads)

    @property
    def frame_sizes(self) -> list:
        return [len(p) for p in self.payloads]

    def to_bytes(self) -> bytes:
        codec_id = _CODEC_IDS[self.codec] | ((0 if self.channels == 3 else 1) << 4)
        out = [_HEADER.pack(MAGIC, codec_id, self.q, self.frame_count,
                            self.width, self.height)]
        bitmap = bytearray((self.frame_count + 7) // 8)
        for i in self.independent:
            bitmap[i // 8] |= 1 << (i % 8)
        out.append(bytes(bitmap))
        out.append(struct.pack(f"<{self.frame_count}I", *self.frame_sizes))
        out.extend(self.payloads)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "EncodedGop":
        if len(blob) < _HEADER.size or blob[:4] != MAGIC:
            raise CorruptGop("bad encoded GOP magic")
        _, codec_id, q, n, width, height = _HEADER.unpack_from(blob)
        codec = _CODEC_NAMES.get(codec_id & 0x0F)
        if codec is None:
            raise CorruptGop(f"unknown codec id {codec_id}")
        channels = 3 if (codec_id >> 4) == 0 else 1
        offset = _HEADER.size
        bitmap_len = (n + 7) // 8
        bitmap = blob[offset:offset + bitmap_len]
        offset += bitmap_len
        independent = {i for i in range(n) if bitmap[i // 8] >> (i % 8) & 1}
        sizes = struct.unpack_from(f"<{n}I", blob, offset)
        offset += 4 * n
        payloads = []
        for size in sizes:
            payloads.append(blob[offset:offset + size])
            offset += size
        if offset != len(blob):
            raise CorruptGop("trailing bytes in encoded GOP")
        bits = 8 * sum(sizes)
        mbpp = bits / (width * height * n) if n else 0.0
        return cls(codec, q, width, height, channels, n, independent, payloads, mbpp)

    def save(self, path: str | Path) -> int:
        blob = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(blob)
        return len(blob)

    @classmethod
    def load(cls, path: str | Path) -> "EncodedGop":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _normalize_frames(frames: np.ndarray) -> tuple:
    frames = np.asarray(frames, dtype=np.uint8)
    if frames.ndim == 3:
        n, height, width = frames.shape
        channels = 1
    elif frames.ndim == 4:
        n, height, width, channels = frames.shape
    else:
        raise DimensionMismatch(f"expected 3- or 4-d array, got ndim={frames.ndim}")
    if n == 0:
        raise EmptyInput("cannot encode an empty GOP")
    return frames, n, height, width, channels


def encode_gop(frames: np.ndarray, codec: str = CODEC_DELTA, q: int = 0) -> EncodedGop:
    """Encode a uniform run of frames into one independently decodable GOP."""
    frames, n, height, width, channels = _normalize_frames(frames)
    payloads = []
    independent = set()

    if codec == CODEC_LOSSLESS:
        level = lossless_backend_level(q if q else 1)
        for i in range(n):
            payloads.append(zlib.compress(frames[i].tobytes(), level))
        independent = set(range(n))
    elif codec == CODEC_INTRA:
        for i in range(n):
            quant = _quantize(frames[i], q).astype(np.int16)
            payloads.append(zlib.compress(quant.tobytes(), 6))
        independent = set(range(n))
    elif codec == CODEC_DELTA:
        prev = None
        for i in range(n):
            if i == 0:
                quant = _quantize(frames[0], q).astype(np.int16)
                recon = np.clip(_dequantize(quant, q), 0, 255).astype(np.int16)
                independent.add(0)
            else:
                delta = frames[i].astype(np.int16) - prev
                quant = _quantize(delta, q).astype(np.int16)
                recon = np.clip(prev + _dequantize(quant, q), 0, 255).astype(np.int16)
            payloads.append(zlib.compress(quant.tobytes(), 6))
            prev = recon
    else:
        raise ValueError(f"unknown codec {codec!r}")

    bits = 8 * sum(len(p) for p in payloads)
    mbpp = bits / (width * height * n)
    return EncodedGop(codec, q, width, height, channels, n, independent, payloads, mbpp)


def _frame_shape(gop: EncodedGop) -> tuple:
    if gop.channels == 1:
        return (gop.height, gop.width)
    return (gop.height, gop.width, gop.channels)


def _unpack_frame(gop: EncodedGop, index: int, dtype) -> np.ndarray:
    raw = zlib.decompress(gop.payloads[index])
    shape = _frame_shape(gop)
    expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(raw) != expected:
        raise CorruptGop(f"frame {index}: payload {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype=dtype).reshape(shape)


def decode_from(gop: EncodedGop, first_needed: int = 0) -> tuple[np.ndarray, DecodeReport]:
    """Decode frames [first_needed..end]; report the extra frames decoded."""
    if not 0 <= first_needed < gop.frame_count:
        raise CorruptGop(f"first_needed {first_needed} outside [0, {gop.frame_count})")
    shape = (gop.frame_count - first_needed,) + _frame_shape(gop)
    out = np.empty(shape, dtype=np.uint8)
    report = DecodeReport()

    if gop.codec == CODEC_LOSSLESS:
        for i in range(first_needed, gop.frame_count):
            out[i - first_needed] = _unpack_frame(gop, i, np.uint8)
    elif gop.codec == CODEC_INTRA:
        for i in range(first_needed, gop.frame_count):
            quant = _unpack_frame(gop, i, np.int16)
            out[i - first_needed] = np.clip(_dequantize(quant, gop.q), 0, 255)
    elif gop.codec == CODEC_DELTA:
        prev = None
        for i in range(gop.frame_count):
            quant = _unpack_frame(gop, i, np.int16)
            if i == 0:
                recon = np.clip(_dequantize(quant, gop.q), 0, 255).astype(np.int16)
            else:
                recon = np.clip(prev + _dequantize(quant, gop.q), 0, 255).astype(np.int16)
            prev = recon
            if i >= first_needed:
                out[i - first_needed] = recon
            else:
                report.delta.add(i)
    else:
        raise CorruptGop(f"unknown codec {gop.codec!r}")

    report.independent = len(report.delta & gop.independent)
    report.dependent = len(report.delta) - report.independent
    return out, report


def decode_all(gop: EncodedGop) -> np.ndarray:
    return decode_from(gop, 0)[0]
