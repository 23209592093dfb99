"""Store facade: logical video lifecycle, planned reads, and result caching.

A read is planned over every cached view of the video, executed fragment by
fragment (decode, crop, resample, decimate), and its result is optionally
re-admitted to the cache as a new sealed view carrying a derived quality
record.  Reads whose requested configuration matches a cached view verbatim
skip the pixel pipeline entirely.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import codec as refcodec
from .alpha import AlphaTable
from .cache import CacheManager
from .catalog import Catalog, PhysicalConfig, PhysicalVideo, SpatialConfig
from .config import StoreConfig
from .errors import FormatMismatch, OutOfRange
from .planner import (Plan, ReadRequest, plan_exact, plan_greedy, validate_range)
from .quality import QualityRecord, mse, psnr
from .warp import Homography, transform

ALPHA_FILE = "alpha.json"


@dataclass
class ReadResult:
    frames: np.ndarray | None
    encoded: list | None
    plan: Plan
    quality: QualityRecord
    fps: Fraction
    cached_id: int | None = None


class VideoStore:
    def __init__(self, root: str | Path, config: StoreConfig | None = None,
                 alpha: AlphaTable | None = None):
        self.root = Path(root)
        self.config = config or StoreConfig()
        self.catalog = Catalog(self.root, self.config)
        self.cache = CacheManager(self.catalog, self.config)
        if alpha is not None:
            self.alpha = alpha
        elif (self.root / ALPHA_FILE).exists():
            self.alpha = AlphaTable.load(self.root / ALPHA_FILE)
        else:
            self.alpha = AlphaTable.default()

    # -- lifecycle ---------------------------------------------------------

    def create(self, name: str, budget=None):
        return self.catalog.create(name, budget)

    def delete(self, name: str) -> None:
        self.catalog.delete(name)

    def names(self) -> list:
        return sorted(self.catalog.videos)

    def stats(self, name: str) -> dict:
        out = self.cache.stats(name)
        original = self.catalog.original_of(name)
        out["duration"] = [
            (original.end - original.start).numerator,
            (original.end - original.start).denominator,
        ]
        return out

    # -- write -------------------------------------------------------------

    def write(self, name: str, frames: np.ndarray, fps,
              layout: str = "raw-rgb8", q: int = 0, gop_len: int = 8,
              start=0) -> int:
        """Ingest frames as the video's content; creates the video lazily."""
        frames = np.asarray(frames, dtype=np.uint8)
        if name not in self.catalog.videos:
            self.catalog.create(name, None)
        if frames.ndim == 3:
            height, width = frames.shape[1:3]
        elif frames.ndim == 4:
            height, width = frames.shape[1:3]
        else:
            raise FormatMismatch(f"expected a frame stack, got ndim={frames.ndim}")
        spatial = SpatialConfig(width, height)
        physical = PhysicalConfig(layout, q, gop_len)
        return self.catalog.write(name, spatial, physical, fps, frames, start)

    def open_write(self, name: str, width: int, height: int, fps,
                   layout: str = "raw-rgb8", q: int = 0, gop_len: int = 8,
                   start=0):
        if name not in self.catalog.videos:
            self.catalog.create(name, None)
        return self.catalog.open_write(name, SpatialConfig(width, height),
                                       PhysicalConfig(layout, q, gop_len),
                                       fps, start)

    # -- read --------------------------------------------------------------

    def read(self, name: str, start, end, width: int | None = None,
             height: int | None = None, roi: tuple | None = None,
             fps=None, layout: str | None = None, q: int | None = None,
             gop_len: int | None = None, quality_cutoff_db: float | None = None,
             cache_result: bool = True, decode: bool = True,
             planner: str = "exact") -> ReadResult:
        """Read a configured view of [start, end).

        ``roi`` is (x0, x1, y0, y1) in original-frame pixels; ``width`` and
        ``height`` give the output resolution (defaults: the ROI size, or
        the original resolution).  ``fps`` decimates by sample-and-hold.
        With ``decode=False`` and a verbatim-matching cached view the result
        is the stored encoded GOPs, byte for byte.
        """
        original = self.catalog.original_of(name)
        start, end = Fraction(start), Fraction(end)
        validate_range(original, start, end)

        out_fps = Fraction(fps) if fps is not None else original.fps
        if out_fps <= 0 or out_fps > original.fps:
            raise OutOfRange(f"requested fps {out_fps} outside (0, {original.fps}]")
        src_spatial = original.spatial
        if roi is not None:
            x0, x1, y0, y1 = roi
            if x1 > src_spatial.width or y1 > src_spatial.height:
                raise OutOfRange(f"roi {roi} outside the original "
                                 f"{src_spatial.width}x{src_spatial.height} frame")
            req_spatial = SpatialConfig(src_spatial.width, src_spatial.height,
                                        tuple(roi))
            out_w = width if width is not None else x1 - x0
            out_h = height if height is not None else y1 - y0
        else:
            out_w = width if width is not None else src_spatial.width
            out_h = height if height is not None else src_spatial.height
            req_spatial = SpatialConfig(src_spatial.width, src_spatial.height)
        out_layout = layout or original.physical.layout
        out_q = original.physical.q if q is None else q
        out_gop = gop_len or original.physical.gop_len
        request = ReadRequest(
            req_spatial, start, end, out_fps,
            PhysicalConfig(out_layout, out_q, out_gop),
            self.config.quality_cutoff_db if quality_cutoff_db is None
            else quality_cutoff_db, out_width=out_w, out_height=out_h)

        views = self.catalog.physicals_of(name)
        if planner == "greedy":
            plan = plan_greedy(views, request, self.alpha, self.config.eta)
        else:
            plan = plan_exact(views, request, self.alpha, self.config.eta,
                              self.config.max_exact_intervals)

        verbatim = self._verbatim_view(plan, request, out_w, out_h)
        if verbatim is not None:
            return self._read_verbatim(verbatim, request, decode)

        frames, quality = self._execute(plan, request, out_w, out_h, original)
        result = ReadResult(frames if decode else None, None, plan, quality,
                            out_fps)
        if not decode or cache_result:
            encoded = self._encode_result(frames, request)
            quality = self._with_compression_estimate(encoded, quality, frames)
            result.quality = quality
            if not decode:
                result.encoded = encoded
        if cache_result:
            result.cached_id = self._cache_result(name, request, out_w, out_h,
                                                  encoded, quality)
        return result

    # -- verbatim fast path ------------------------------------------------

    def _verbatim_view(self, plan: Plan, request: ReadRequest,
                       out_w: int, out_h: int) -> PhysicalVideo | None:
        """The single source serving the whole read in its stored form."""
        if len(plan.fragments) != 1:
            return None
        view = plan.fragments[0].source
        if (view.spatial.roi != request.spatial.roi
                or view.spatial.width != out_w or view.spatial.height != out_h
                or view.physical.layout != request.physical.layout
                or view.physical.q != request.physical.q
                or view.fps != request.fps):
            return None
        if view.spatial.roi is None and (out_w, out_h) != (view.spatial.width,
                                                           view.spatial.height):
            return None
        # GOP-aligned byte copy only
        first = view.lookup(request.start)
        if first.start != request.start:
            return None
        if request.end != view.end and view.lookup(request.end).start != request.end:
            return None
        return view

    def _read_verbatim(self, view: PhysicalVideo, request: ReadRequest,
                       decode: bool) -> ReadResult:
        entries = view.entries_overlapping(request.start, request.end)
        self.catalog.touch(entries)
        self.catalog.save(durable=False)  # LRU stamps only
        plan = Plan([], 0.0, exact=True)
        if view.physical.is_raw or decode:
            parts = []
            for entry in entries:
                frames, _ = self.catalog.load_gop_frames(view, entry)
                parts.append(frames)
            stacked = np.concatenate(parts)
            return ReadResult(stacked, None, plan, view.quality, view.fps)
        encoded = [self.catalog.load_encoded_gop(view, e) for e in entries]
        return ReadResult(None, encoded, plan, view.quality, view.fps)

    # -- pixel pipeline ----------------------------------------------------

    def _execute(self, plan: Plan, request: ReadRequest, out_w: int,
                 out_h: int, original: PhysicalVideo) -> tuple:
        count_frac = (request.end - request.start) * request.fps
        count = -((-count_frac.numerator) // count_frac.denominator)
        times = [request.start + Fraction(i, 1) / request.fps
                 for i in range(count)]

        frag_starts = [f.start for f in plan.fragments]
        by_fragment: dict[int, list] = {}
        for i, t in enumerate(times):
            idx = bisect_right(frag_starts, t) - 1
            by_fragment.setdefault(idx, []).append(i)

        out = None
        worst_quality: QualityRecord | None = None
        touched = []
        for idx, time_indices in sorted(by_fragment.items()):
            view = plan.fragments[idx].source
            needed: dict[int, list] = {}
            for i in time_indices:
                entry = view.lookup(times[i])
                fi = view.frame_index(times[i]) - view.frame_index(entry.start)
                needed.setdefault(entry.seq, []).append((fi, i))
            entries = {e.seq: e for e in view.gops}
            for seq, pairs in needed.items():
                entry = entries[seq]
                touched.append(entry)
                first = min(fi for fi, _ in pairs)
                frames, _ = self.catalog.load_gop_frames(view, entry, first)
                # resampling straight from the original is the requested
                # transformation itself, not an extra quality hop; only a
                # second-generation resample accrues chain error
                primary = (view.id == original.id
                           or (view.spatial == original.spatial
                               and view.fps == original.fps))
                for fi, i in pairs:
                    frame = frames[fi - first]
                    processed, hop_mse = self._process_frame(
                        frame, view, request, out_w, out_h,
                        measure_hop=not primary)
                    if out is None:
                        out = np.empty((len(times),) + processed.shape,
                                       dtype=np.uint8)
                    out[i] = processed
                    if worst_quality is None:
                        worst_quality = view.quality.extended(hop_mse) \
                            if hop_mse is not None else view.quality
                    elif hop_mse is not None:
                        candidate = view.quality.extended(hop_mse)
                        if candidate.combined_psnr() < worst_quality.combined_psnr():
                            worst_quality = candidate
        self.catalog.touch(touched)
        self.catalog.save(durable=False)  # LRU stamps only
        return out, worst_quality or QualityRecord()

    def _process_frame(self, frame: np.ndarray, view: PhysicalVideo,
                       request: ReadRequest, out_w: int, out_h: int,
                       measure_hop: bool = True) -> tuple:
        """Crop to the ROI and resample to the output resolution.

        Returns (frame, hop_mse): the measured resample-hop MSE, or None
        when untouched or when the caller does not need the measurement.
        """
        src_w, src_h = view.spatial.width, view.spatial.height
        if request.spatial.roi is not None:
            # ROI coordinates are in original-frame pixels; map into this
            # view's raster, which may itself be a resampled crop
            x0, x1, y0, y1 = request.spatial.roi
            if view.spatial.roi is not None:
                vx0, vx1, vy0, vy1 = view.spatial.roi
            else:
                vx0, vx1 = 0, request.spatial.width
                vy0, vy1 = 0, request.spatial.height
            sx = src_w / (vx1 - vx0)
            sy = src_h / (vy1 - vy0)
            cx0, cx1 = int(round((x0 - vx0) * sx)), int(round((x1 - vx0) * sx))
            cy0, cy1 = int(round((y0 - vy0) * sy)), int(round((y1 - vy0) * sy))
        else:
            cx0, cx1, cy0, cy1 = 0, src_w, 0, src_h
        crop = frame[cy0:cy1, cx0:cx1]
        if crop.shape[1] == out_w and crop.shape[0] == out_h:
            return np.ascontiguousarray(crop), None
        scale = Homography(np.array([
            [crop.shape[1] / out_w, 0.0, 0.0],
            [0.0, crop.shape[0] / out_h, 0.0],
            [0.0, 0.0, 1.0]]))
        resampled = transform(crop, scale, out_height=out_h, out_width=out_w)
        if not measure_hop:
            return resampled, None
        back = Homography(np.array([
            [out_w / crop.shape[1], 0.0, 0.0],
            [0.0, out_h / crop.shape[0], 0.0],
            [0.0, 0.0, 1.0]]))
        roundtrip = transform(resampled, back, out_height=crop.shape[0],
                              out_width=crop.shape[1])
        return resampled, mse(roundtrip, crop)

    # -- result encoding and caching ---------------------------------------

    def _encode_result(self, frames: np.ndarray, request: ReadRequest) -> list:
        cfg = request.physical
        if cfg.is_raw:
            return []
        gops = []
        step = max(1, cfg.gop_len)
        for i in range(0, len(frames), step):
            gops.append(refcodec.encode_gop(frames[i:i + step], cfg.layout, cfg.q))
        return gops

    def _cache_result(self, name: str, request: ReadRequest, out_w: int,
                      out_h: int, encoded: list, quality: QualityRecord):
        spatial = SpatialConfig(out_w, out_h, request.spatial.roi)
        writer = self.catalog.open_write(name, spatial, request.physical,
                                         request.fps, request.start, quality)
        if encoded:
            for gop in encoded:
                writer.append_encoded(gop)
            writer.close()
        else:
            return None  # raw results are returned, not cached
        staged = writer.pv
        if self.cache.admit(name, staged):
            return staged.id
        return None

    def _with_compression_estimate(self, encoded: list, quality: QualityRecord,
                                   reference: np.ndarray) -> QualityRecord:
        if not encoded:
            return quality
        gop = encoded[0]
        if gop.codec == refcodec.CODEC_LOSSLESS or gop.q == 0:
            return quality
        # sample the first GOP exactly, refine the shared bitrate curve
        sampled = psnr(refcodec.decode_all(gop), reference[:gop.frame_count])
        est = self.catalog.curve.update(gop.mbpp, sampled) \
            if self.catalog.curve.points else sampled
        if math.isinf(est):
            est = sampled
        return QualityRecord(list(quality.resample_mse_chain), est,
                             sampled_exact=None if math.isinf(sampled) else sampled)

    # -- pinning -----------------------------------------------------------

    def pin(self, name: str, start, end, width: int | None = None,
            height: int | None = None, roi: tuple | None = None,
            fps=None, layout: str | None = None, q: int | None = None) -> int:
        """Pin a configured range; materializes it through a read first."""
        result = self.read(name, start, end, width, height, roi, fps,
                           layout, q, cache_result=True)
        original = self.catalog.original_of(name)
        spatial, physical = self._pin_target(original, width, height, roi,
                                             layout, q)
        count = self.cache.pin(name, spatial, Fraction(start), Fraction(end),
                               physical)
        if count == 0 and result.cached_id is not None:
            pv = self.catalog.physicals[result.cached_id]
            for entry in pv.entries_overlapping(Fraction(start), Fraction(end)):
                entry.pinned = True
                count += 1
            self.catalog.save()
        return count

    def unpin(self, name: str, start, end, width: int | None = None,
              height: int | None = None, roi: tuple | None = None,
              fps=None, layout: str | None = None, q: int | None = None) -> int:
        original = self.catalog.original_of(name)
        spatial, physical = self._pin_target(original, width, height, roi,
                                             layout, q)
        return self.cache.unpin(name, spatial, Fraction(start), Fraction(end),
                                physical)

    def _pin_target(self, original: PhysicalVideo, width, height, roi,
                    layout, q) -> tuple:
        out_w = width if width is not None else (
            roi[1] - roi[0] if roi else original.spatial.width)
        out_h = height if height is not None else (
            roi[3] - roi[2] if roi else original.spatial.height)
        spatial = SpatialConfig(out_w, out_h, tuple(roi) if roi else None)
        physical = PhysicalConfig(layout or original.physical.layout,
                                  original.physical.q if q is None else q,
                                  original.physical.gop_len)
        return spatial, physical
