"""Catalog: logical/physical videos, GOP partitioning on write, temporal
index, and the durable store manifest.

On-disk layout mirrors one file per GOP:

    <store>/<logical>/<WxHrF.layout>.<pid>/<seq>

The manifest is a single UTF-8 JSON file with stable key order, rewritten
atomically (write-temp + rename) after every mutation.  GOP files are
immutable once their entry is published.  Times are rational seconds
(frame_index / fps) so GOP boundaries never drift.
"""
from __future__ import annotations

import json
import os
import shutil
import time as _time
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import codec as refcodec
from . import rawio
from .config import StoreConfig
from .errors import (DuplicateName, FormatMismatch, OutOfRange, UnknownVideo)
from .quality import CompressionCurve, QualityRecord

RAW_LAYOUTS = {"raw-rgb8": rawio.LAYOUT_RGB8, "raw-y8": rawio.LAYOUT_Y8}
ENCODED_LAYOUTS = {refcodec.CODEC_INTRA, refcodec.CODEC_DELTA, refcodec.CODEC_LOSSLESS}

MANIFEST_NAME = "manifest.json"


def _frac_to_json(value: Fraction) -> list:
    return [value.numerator, value.denominator]


def _frac_from_json(data) -> Fraction:
    return Fraction(data[0], data[1])


@dataclass
class SpatialConfig:
    width: int
    height: int
    # (x0, x1, y0, y1) in original-frame pixels; width/height are this
    # view's own raster size, which differs from the ROI extent after a
    # resample, so the ROI is only checked for being well formed here
    roi: tuple | None = None

    def __post_init__(self):
        if self.roi is not None:
            x0, x1, y0, y1 = self.roi
            if not (0 <= x0 < x1 and 0 <= y0 < y1):
                raise FormatMismatch(f"degenerate roi {self.roi}")

    @property
    def pixels(self) -> int:
        if self.roi is not None:
            x0, x1, y0, y1 = self.roi
            return (x1 - x0) * (y1 - y0)
        return self.width * self.height

    def covers(self, other: "SpatialConfig") -> bool:
        if self.roi is None:
            return True
        if other.roi is None:
            return False
        x0, x1, y0, y1 = self.roi
        ox0, ox1, oy0, oy1 = other.roi
        return x0 <= ox0 and ox1 <= x1 and y0 <= oy0 and oy1 <= y1

    def to_json(self) -> dict:
        return {"width": self.width, "height": self.height,
                "roi": list(self.roi) if self.roi else None}

    @classmethod
    def from_json(cls, data: dict) -> "SpatialConfig":
        roi = data.get("roi")
        return cls(data["width"], data["height"], tuple(roi) if roi else None)


@dataclass
class PhysicalConfig:
    layout: str
    q: int = 0
    gop_len: int = 8

    def __post_init__(self):
        if self.layout not in RAW_LAYOUTS and self.layout not in ENCODED_LAYOUTS:
            raise FormatMismatch(f"unknown layout {self.layout!r}")

    @property
    def is_raw(self) -> bool:
        return self.layout in RAW_LAYOUTS

    @property
    def channels(self) -> int:
        return 1 if self.layout == "raw-y8" else 3

    def to_json(self) -> dict:
        return {"layout": self.layout, "q": self.q, "gop_len": self.gop_len}

    @classmethod
    def from_json(cls, data: dict) -> "PhysicalConfig":
        return cls(data["layout"], data.get("q", 0), data.get("gop_len", 8))


@dataclass
class GopEntry:
    seq: int
    start: Fraction
    end: Fraction
    path: str                   # relative to store root
    nbytes: int
    frame_count: int
    independent_index: list     # frame positions with no dependencies
    lru: int = 0
    pinned: bool = False
    compressed: bool = False    # deferred lossless compression applied

    def to_json(self) -> dict:
        return {"seq": self.seq, "start": _frac_to_json(self.start),
                "end": _frac_to_json(self.end), "path": self.path,
                "nbytes": self.nbytes, "frame_count": self.frame_count,
                "independent_index": self.independent_index, "lru": self.lru,
                "pinned": self.pinned, "compressed": self.compressed}

    @classmethod
    def from_json(cls, data: dict) -> "GopEntry":
        return cls(data["seq"], _frac_from_json(data["start"]),
                   _frac_from_json(data["end"]), data["path"], data["nbytes"],
                   data["frame_count"], list(data["independent_index"]),
                   data.get("lru", 0), data.get("pinned", False),
                   data.get("compressed", False))


class PhysicalVideo:
    """One spatial/temporal/physical materialization of a logical video."""

    def __init__(self, pid: int, parent: str, spatial: SpatialConfig,
                 physical: PhysicalConfig, fps: Fraction,
                 quality: QualityRecord | None = None):
        self.id = pid
        self.parent = parent
        self.spatial = spatial
        self.physical = physical
        self.fps = Fraction(fps)
        self.gops: list[GopEntry] = []
        self.sealed = False
        self.quality = quality or QualityRecord()

    @property
    def start(self) -> Fraction:
        if not self.gops:
            raise OutOfRange(f"physical video {self.id} is empty")
        return self.gops[0].start

    @property
    def end(self) -> Fraction:
        if not self.gops:
            raise OutOfRange(f"physical video {self.id} is empty")
        return self.gops[-1].end

    @property
    def nbytes(self) -> int:
        return sum(g.nbytes for g in self.gops)

    def same_config(self, other: "PhysicalVideo") -> bool:
        return (self.spatial == other.spatial and self.physical == other.physical
                and self.fps == other.fps)

    def dirname(self) -> str:
        fps = self.fps
        rate = str(fps.numerator) if fps.denominator == 1 else f"{fps.numerator}-{fps.denominator}"
        return f"{self.spatial.width}x{self.spatial.height}r{rate}.{self.physical.layout}.{self.id}"

    # -- temporal index ---------------------------------------------------

    def lookup(self, t: Fraction) -> GopEntry:
        """Entry whose half-open interval [start, end) contains t."""
        if not self.gops or not (self.start <= t < self.end):
            raise OutOfRange(f"t={t} outside [{'' if not self.gops else self.start}, "
                             f"{'' if not self.gops else self.end})")
        starts = [g.start for g in self.gops]
        idx = bisect_right(starts, t) - 1
        return self.gops[idx]

    def entries_overlapping(self, s: Fraction, e: Fraction) -> list:
        return [g for g in self.gops if g.start < e and g.end > s]

    def frame_index(self, t: Fraction) -> int:
        """Frame index containing time t (floor of the frame offset)."""
        offset = (t - self.start) * self.fps
        return offset.numerator // offset.denominator

    def frame_ceil(self, t: Fraction) -> int:
        """First frame index at or after time t."""
        offset = (t - self.start) * self.fps
        return -((-offset.numerator) // offset.denominator)

    def check_invariants(self) -> None:
        prev_end = None
        for i, g in enumerate(self.gops):
            assert g.start < g.end, f"gop {i}: empty interval"
            if prev_end is not None:
                assert g.start == prev_end, f"gop {i}: gap or overlap at {g.start}"
            prev_end = g.end

    def to_json(self) -> dict:
        return {"id": self.id, "parent": self.parent,
                "spatial": self.spatial.to_json(),
                "physical": self.physical.to_json(),
                "fps": _frac_to_json(self.fps), "sealed": self.sealed,
                "quality": self.quality.to_json(),
                "gops": [g.to_json() for g in self.gops]}

    @classmethod
    def from_json(cls, data: dict) -> "PhysicalVideo":
        pv = cls(data["id"], data["parent"], SpatialConfig.from_json(data["spatial"]),
                 PhysicalConfig.from_json(data["physical"]),
                 _frac_from_json(data["fps"]),
                 QualityRecord.from_json(data["quality"]))
        pv.sealed = data["sealed"]
        pv.gops = [GopEntry.from_json(g) for g in data["gops"]]
        return pv


@dataclass
class LogicalVideo:
    name: str
    budget_bytes: int | None = None         # resolved absolute budget
    budget_multiple: float | None = None    # pending multiple-of-first-write
    created_at: float = field(default_factory=_time.time)
    physicals: list = field(default_factory=list)   # ordered PhysicalVideo ids
    original: int | None = None

    def to_json(self) -> dict:
        return {"name": self.name, "budget_bytes": self.budget_bytes,
                "budget_multiple": self.budget_multiple,
                "created_at": self.created_at, "physicals": self.physicals,
                "original": self.original}

    @classmethod
    def from_json(cls, data: dict) -> "LogicalVideo":
        return cls(data["name"], data["budget_bytes"], data["budget_multiple"],
                   data["created_at"], list(data["physicals"]), data["original"])


class Catalog:
    """Durable store state: logical videos, physical videos, shared curves."""

    def __init__(self, root: str | Path, config: StoreConfig | None = None):
        self.root = Path(root)
        self.config = config or StoreConfig()
        self.videos: dict[str, LogicalVideo] = {}
        self.physicals: dict[int, PhysicalVideo] = {}
        self.next_physical_id = 0
        self.lru_counter = 0
        self.eviction_count = 0
        self.curve = CompressionCurve()
        self.root.mkdir(parents=True, exist_ok=True)
        if (self.root / MANIFEST_NAME).exists():
            self._load_manifest()
        else:
            self.save()

    # -- persistence ------------------------------------------------------

    def save(self, durable: bool = True) -> None:
        """Atomically rewrite the manifest.

        ``durable=False`` skips the fsync; the rename is still atomic, so
        readers see a consistent manifest either way.  Only advisory-state
        updates (LRU stamps) take that shortcut.
        """
        data = {
            "version": 1,
            "next_physical_id": self.next_physical_id,
            "lru_counter": self.lru_counter,
            "eviction_count": self.eviction_count,
            "curve": self.curve.to_json(),
            "videos": {name: v.to_json() for name, v in sorted(self.videos.items())},
            "physicals": {str(pid): pv.to_json()
                          for pid, pv in sorted(self.physicals.items())},
        }
        tmp = self.root / (MANIFEST_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=1, sort_keys=True)
            if durable:
                fh.flush()
                os.fsync(fh.fileno())
        os.replace(tmp, self.root / MANIFEST_NAME)

    def _load_manifest(self) -> None:
        with open(self.root / MANIFEST_NAME, encoding="utf-8") as fh:
            data = json.load(fh)
        self.next_physical_id = data["next_physical_id"]
        self.lru_counter = data["lru_counter"]
        self.eviction_count = data.get("eviction_count", 0)
        self.curve = CompressionCurve.from_json(data.get("curve", []))
        self.videos = {name: LogicalVideo.from_json(v)
                       for name, v in data["videos"].items()}
        self.physicals = {int(pid): PhysicalVideo.from_json(pv)
                          for pid, pv in data["physicals"].items()}

    # -- lifecycle --------------------------------------------------------

    def create(self, name: str, budget) -> LogicalVideo:
        """Register a logical video.  ``budget`` is absolute bytes (int) or a
        multiple of the first sealed write (float, e.g. the 10x default)."""
        if name in self.videos:
            raise DuplicateName(name)
        video = LogicalVideo(name)
        if isinstance(budget, int):
            if budget <= 0:
                raise FormatMismatch(f"budget must be positive, got {budget}")
            video.budget_bytes = budget
        else:
            if budget is None:
                budget = self.config.budget_default_multiple
            if budget <= 0:
                raise FormatMismatch(f"budget multiple must be positive, got {budget}")
            video.budget_multiple = float(budget)
        self.videos[name] = video
        (self.root / name).mkdir(parents=True, exist_ok=True)
        self.save()
        return video

    def get(self, name: str) -> LogicalVideo:
        try:
            return self.videos[name]
        except KeyError:
            raise UnknownVideo(name) from None

    def physicals_of(self, name: str) -> list:
        return [self.physicals[pid] for pid in self.get(name).physicals]

    def original_of(self, name: str) -> PhysicalVideo:
        video = self.get(name)
        if video.original is None:
            raise UnknownVideo(f"{name} has no sealed original yet")
        return self.physicals[video.original]

    def delete(self, name: str) -> None:
        video = self.get(name)
        for pid in list(video.physicals):
            pv = self.physicals.pop(pid)
            shutil.rmtree(self.root / name / pv.dirname(), ignore_errors=True)
        del self.videos[name]
        shutil.rmtree(self.root / name, ignore_errors=True)
        self.save()

    def lookup(self, name: str, t) -> GopEntry:
        return self.original_of(name).lookup(Fraction(t))

    def budget_of(self, name: str) -> int | None:
        return self.get(name).budget_bytes

    def usage_of(self, name: str) -> int:
        return sum(pv.nbytes for pv in self.physicals_of(name))

    def touch(self, entries: list) -> None:
        """Stamp LRU sequence numbers on every fragment a read used."""
        for entry in entries:
            self.lru_counter += 1
            entry.lru = self.lru_counter

    # -- write path -------------------------------------------------------

    def new_physical(self, name: str, spatial: SpatialConfig,
                     physical: PhysicalConfig, fps,
                     quality: QualityRecord | None = None) -> PhysicalVideo:
        video = self.get(name)
        pid = self.next_physical_id
        self.next_physical_id += 1
        pv = PhysicalVideo(pid, name, spatial, physical, Fraction(fps), quality)
        self.physicals[pid] = pv
        video.physicals.append(pid)
        (self.root / name / pv.dirname()).mkdir(parents=True, exist_ok=True)
        return pv

    def drop_physical(self, pv: PhysicalVideo, remove_files: bool = True) -> None:
        video = self.get(pv.parent)
        if pv.id == video.original:
            raise FormatMismatch("refusing to drop the original physical video")
        video.physicals.remove(pv.id)
        del self.physicals[pv.id]
        if remove_files:
            shutil.rmtree(self.root / pv.parent / pv.dirname(), ignore_errors=True)

    def seal(self, pv: PhysicalVideo) -> None:
        pv.sealed = True
        video = self.get(pv.parent)
        if video.original is None:
            video.original = pv.id
            if video.budget_bytes is None:
                video.budget_bytes = int(pv.nbytes * video.budget_multiple)
        self.save()

    def open_write(self, name: str, spatial: SpatialConfig,
                   physical: PhysicalConfig, fps, start=0,
                   quality: QualityRecord | None = None) -> "GopWriter":
        self.get(name)
        pv = self.new_physical(name, spatial, physical, fps, quality)
        return GopWriter(self, pv, Fraction(start))

    def write(self, name: str, spatial: SpatialConfig, physical: PhysicalConfig,
              fps, frames: np.ndarray, start=0) -> int:
        """Partition frames into GOPs and persist them; returns the physical id."""
        writer = self.open_write(name, spatial, physical, fps, start)
        writer.append(frames)
        writer.close()
        return writer.pv.id

    def write_encoded_gops(self, name: str, spatial: SpatialConfig,
                           physical: PhysicalConfig, fps,
                           gops: list, start=0) -> int:
        """Ingest pre-encoded GOPs, preserving the given GOP boundaries."""
        writer = self.open_write(name, spatial, physical, fps, start)
        for gop in gops:
            writer.append_encoded(gop)
        writer.close()
        return writer.pv.id

    # -- GOP payload access -----------------------------------------------

    def gop_path(self, pv: PhysicalVideo, entry: GopEntry) -> Path:
        return self.root / entry.path

    def load_gop_frames(self, pv: PhysicalVideo, entry: GopEntry,
                        first_needed: int = 0):
        """Decode a GOP from file.  Returns (frames, DecodeReport)."""
        path = self.gop_path(pv, entry)
        with open(path, "rb") as fh:
            magic = fh.read(4)
        if magic == rawio.MAGIC:
            frames, _, _ = rawio.read_raw(path)
            return frames[first_needed:], refcodec.DecodeReport()
        gop = refcodec.EncodedGop.load(path)
        return refcodec.decode_from(gop, first_needed)

    def load_encoded_gop(self, pv: PhysicalVideo, entry: GopEntry) -> refcodec.EncodedGop:
        return refcodec.EncodedGop.load(self.gop_path(pv, entry))


class GopWriter:
    """Streaming writer: GOP files appear (and are readable) incrementally;
    the whole video is only guaranteed durable at close."""

    def __init__(self, catalog: Catalog, pv: PhysicalVideo, start: Fraction):
        self.catalog = catalog
        self.pv = pv
        self.start = start
        self.buffer: list[np.ndarray] = []
        self.frames_written = 0
        self.closed = False

    @property
    def _gop_frames(self) -> int:
        cfg = self.pv.physical
        if not cfg.is_raw:
            return max(1, cfg.gop_len)
        frame_bytes = (self.pv.spatial.width * self.pv.spatial.height
                       * cfg.channels)
        return max(1, self.catalog.config.max_raw_block_bytes // frame_bytes)

    def _check_frame(self, frame: np.ndarray) -> None:
        spatial = self.pv.spatial
        expected = (spatial.height, spatial.width)
        if self.pv.physical.channels > 1:
            expected = expected + (self.pv.physical.channels,)
        if frame.shape != expected:
            raise FormatMismatch(f"frame shape {frame.shape} != configured {expected}")

    def append(self, frames: np.ndarray) -> None:
        if frames.ndim in (2, 3) and frames.shape[:2] == (self.pv.spatial.height,
                                                          self.pv.spatial.width):
            frames = frames[None]
        for frame in frames:
            self._check_frame(frame)
            self.buffer.append(np.asarray(frame, dtype=np.uint8))
        limit = self._gop_frames
        while len(self.buffer) >= limit:
            self._flush(self.buffer[:limit])
            self.buffer = self.buffer[limit:]

    def append_encoded(self, gop: refcodec.EncodedGop) -> None:
        if self.buffer:
            raise FormatMismatch("cannot mix raw and pre-encoded appends")
        entry = self._publish_bytes(gop.to_bytes(), gop.frame_count,
                                    sorted(gop.independent))
        assert entry is not None

    def _flush(self, frames: list) -> None:
        frames = np.stack(frames)
        cfg = self.pv.physical
        if cfg.is_raw:
            seq = len(self.pv.gops)
            path = self.catalog.root / self.pv.parent / self.pv.dirname() / str(seq)
            nbytes = rawio.write_raw(path, frames, self.pv.fps,
                                     RAW_LAYOUTS[cfg.layout])
            self._publish_entry(seq, path, nbytes, len(frames),
                                list(range(len(frames))))
        else:
            gop = refcodec.encode_gop(frames, cfg.layout, cfg.q)
            self._publish_bytes(gop.to_bytes(), gop.frame_count,
                                sorted(gop.independent))

    def _publish_bytes(self, blob: bytes, frame_count: int,
                       independent: list) -> GopEntry:
        seq = len(self.pv.gops)
        path = self.catalog.root / self.pv.parent / self.pv.dirname() / str(seq)
        with open(path, "wb") as fh:
            fh.write(blob)
        return self._publish_entry(seq, path, len(blob), frame_count, independent)

    def _publish_entry(self, seq: int, path: Path, nbytes: int,
                       frame_count: int, independent: list) -> GopEntry:
        fps = self.pv.fps
        gop_start = self.start + Fraction(self.frames_written) / fps
        gop_end = gop_start + Fraction(frame_count) / fps
        entry = GopEntry(seq, gop_start, gop_end,
                         str(path.relative_to(self.catalog.root)), nbytes,
                         frame_count, independent)
        self.pv.gops.append(entry)
        self.frames_written += frame_count
        self.catalog.save()  # publish: readers may now see the sealed prefix
        return entry

    def close(self) -> None:
        if self.closed:
            return
        if self.buffer:
            self._flush(self.buffer)
            self.buffer = []
        self.closed = True
        self.catalog.seal(self.pv)
