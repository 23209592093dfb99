"""Synthetic workload benchmarks.

Scenes are deterministic given a seed: a slowly drifting gradient backdrop
with a moving rectangle, textured so corner features are plentiful.
Overlapping-pair generators shift the same scene horizontally to a target
overlap fraction.  Each workload prints one CSV row; nothing here touches
wall-clock state except the timing calls themselves.
"""
from __future__ import annotations

import csv
import io
import shutil
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import codec as refcodec
from . import jointc
from .config import StoreConfig
from .store import VideoStore

CSV_FIELDS = ("workload", "metric", "value", "unit", "seed")


def make_scene(n_frames: int, height: int = 120, width: int = 160,
               seed: int = 0, dx_per_frame: float = 1.0,
               box_anchor: int | None = None) -> np.ndarray:
    """Deterministic test footage: textured gradient plus a moving box."""
    rng = np.random.default_rng(seed)
    base = np.zeros((height, width, 3), dtype=np.float64)
    ys = np.linspace(0, 255, height)
    # per-seed tint plus a vertical-only gradient: distinct scenes get
    # distinct color statistics while horizontal crops of one scene stay
    # alike; texture and the box provide the horizontal structure
    gains = rng.uniform(0.1, 0.4, 3)
    offsets = rng.uniform(10, 160, 3)
    for c in range(3):
        base[..., c] = gains[c] * ys[:, None] + offsets[c]
    texture = rng.integers(0, 40, (height, width, 3)).astype(np.float64)

    frames = np.empty((n_frames, height, width, 3), dtype=np.uint8)
    box_h, box_w = height // 4, width // 5
    for i in range(n_frames):
        frame = base + texture
        shift = int(round(i * dx_per_frame))
        frame = np.roll(frame, shift, axis=1)
        bx = ((10 if box_anchor is None else box_anchor) + i) % (width - box_w)
        by = (8 + i) % (height - box_h)
        frame[by:by + box_h, bx:bx + box_w] = (230, 40 + (i * 5) % 100, 90)
        frames[i] = np.clip(frame, 0, 255).astype(np.uint8)
    return frames


def make_overlapping_pair(overlap_fraction: float, n_frames: int = 4,
                          height: int = 120, width: int = 160,
                          seed: int = 0) -> tuple:
    """Two views of one wider scene, sharing the given fraction of columns."""
    shift = int(round(width * (1.0 - overlap_fraction)))
    wide_w = width + shift
    # keep the box inside the shared region so both crops see it
    anchor = max(0, (wide_w - wide_w // 5) // 2)
    wide = make_scene(n_frames, height, wide_w, seed, dx_per_frame=0.0,
                      box_anchor=anchor)
    left = wide[:, :, :width].copy()
    right = wide[:, :, shift:shift + width].copy()
    return left, right, shift


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def _store(tmp: Path, seed: int, tag: str = "") -> VideoStore:
    cfg = StoreConfig()
    return VideoStore(tmp / f"store-{tag}{seed}", cfg)


def bench_write(tmp: Path, seed: int) -> list:
    frames = make_scene(120, seed=seed)
    store = _store(tmp, seed, "write-")
    with _Timer() as t:
        store.write("bench", frames, 24, layout="ref-delta", gop_len=8)
    fps = len(frames) / t.seconds
    return [("write", "throughput", f"{fps:.1f}", "frames/s", seed)]


def bench_long_read(tmp: Path, seed: int) -> list:
    frames = make_scene(120, seed=seed)
    store = _store(tmp, seed, "long-")
    store.write("bench", frames, 24, layout="ref-delta", gop_len=8)
    with _Timer() as t:
        result = store.read("bench", 0, 5, cache_result=False)
    assert result.frames is not None
    return [("long-read", "latency", f"{t.seconds * 1e3:.1f}", "ms", seed)]


def bench_short_read(tmp: Path, seed: int) -> list:
    frames = make_scene(120, seed=seed)
    store = _store(tmp, seed, "short-")
    store.write("bench", frames, 24, layout="ref-delta", gop_len=8)
    with _Timer() as t:
        for i in range(5):
            store.read("bench", i, i + Fraction(1, 3), cache_result=False)
    return [("short-read", "latency", f"{t.seconds * 1e3 / 5:.1f}", "ms", seed)]


def bench_cache_eviction(tmp: Path, seed: int) -> list:
    frames = make_scene(96, seed=seed)
    store = _store(tmp, seed, "evict-")
    store.catalog.create("bench", 2.0)  # tight budget: 2x the original
    store.write("bench", frames, 24, layout="ref-delta", gop_len=8)
    for w in (120, 100, 80, 60):
        store.read("bench", 0, 4, width=w, height=90, layout="ref-delta")
    stats = store.stats("bench")
    over = stats["usage_bytes"] <= stats["budget_bytes"]
    return [("cache-eviction", "within_budget", str(int(over)), "bool", seed),
            ("cache-eviction", "evictions", str(stats["evictions"]), "count", seed)]


def bench_jointc_size(tmp: Path, seed: int) -> list:
    rows = []
    for frac in (0.30, 0.50, 0.75):
        left, right, _ = make_overlapping_pair(frac, n_frames=16, seed=seed)
        separate = (refcodec.encode_gop(left, refcodec.CODEC_DELTA, 0).nbytes
                    + refcodec.encode_gop(right, refcodec.CODEC_DELTA, 0).nbytes)
        pair = jointc.joint_compress(left, right)
        joint = pair.nbytes if pair is not None else separate
        rows.append(("jointc-size", f"ratio_overlap_{int(frac * 100)}",
                     f"{joint / separate:.3f}", "joint/separate", seed))
    return rows


def bench_selection_recall(tmp: Path, seed: int) -> list:
    rng = np.random.default_rng(seed)
    gops = []
    planted = []
    for k in range(10):
        left, right, _ = make_overlapping_pair(0.5, n_frames=2,
                                               seed=seed + 100 + k)
        planted.append((len(gops), len(gops) + 1))
        gops.append(left)
        gops.append(right)
    for k in range(30):
        gops.append(make_scene(2, seed=seed + 1000 + k,
                               dx_per_frame=float(rng.integers(0, 4))))
    candidates, evaluated = jointc.select_candidates(gops)
    found = {tuple(sorted(c)) for c in candidates}
    hits = sum(1 for p in planted if tuple(sorted(p)) in found)
    total_pairs = len(gops) * (len(gops) - 1) // 2
    return [("selection-recall", "recall", f"{hits / len(planted):.2f}",
             "fraction", seed),
            ("selection-recall", "evaluated_fraction",
             f"{evaluated / total_pairs:.3f}", "fraction", seed)]


WORKLOADS = {
    "write": bench_write,
    "long-read": bench_long_read,
    "short-read": bench_short_read,
    "cache-eviction": bench_cache_eviction,
    "jointc-size": bench_jointc_size,
    "selection-recall": bench_selection_recall,
}


def run(workloads: list | None = None, seed: int = 0,
        out=None) -> str:
    """Run the named workloads (default: all) and return CSV text."""
    names = workloads or list(WORKLOADS)
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(CSV_FIELDS)
    tmp = Path(tempfile.mkdtemp(prefix="gopstore-bench-"))
    try:
        for name in names:
            for row in WORKLOADS[name](tmp, seed):
                writer.writerow(row)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    text = buffer.getvalue()
    if out is not None:
        out.write(text)
    return text
