"""Background upkeep: deferred compression and compaction.

Deferred compression trades CPU for space as a video approaches its budget:
once occupancy crosses the activation threshold, cached fragments still
stored raw are recompressed losslessly, one GOP per tick, at a level that
scales with occupancy.  Compaction folds contiguous same-configuration
cached views back into single views via hard links, so no pixel data is
copied and the source entries keep working until dropped.
"""
from __future__ import annotations

import math
import os

from . import codec as refcodec
from .cache import CacheManager
from .catalog import Catalog, GopEntry
from .config import StoreConfig


def occupancy(catalog: Catalog, name: str) -> float:
    budget = catalog.budget_of(name)
    if not budget:
        return 0.0
    return catalog.usage_of(name) / budget


def deferred_level(rho: float, threshold: float = 0.25) -> int:
    """Compression level ramping linearly with occupancy.

    Inactive (0) below the activation threshold; from there the level runs
    1..19 as occupancy goes from the threshold to 1.0, saturating above.
    """
    if rho < threshold:
        return 0
    level = round(1 + 18 * (rho - threshold) / (1 - threshold))
    return max(1, min(19, level))


def deferred_tick(catalog: Catalog, cache: CacheManager, name: str) -> bool:
    """Recompress one uncompressed cached GOP, if occupancy warrants it.

    The highest-scored (most retained) uncompressed fragment is converted
    first: it is the one expected to stay cached longest, so its space
    saving pays off the most.  Returns True when a GOP was recompressed.
    """
    cfg = catalog.config
    level = deferred_level(occupancy(catalog, name), cfg.deferred_threshold)
    if level == 0:
        return False
    video = catalog.get(name)
    best = None
    for pv in catalog.physicals_of(name):
        if pv.id == video.original or not pv.sealed:
            continue
        for entry in pv.gops:
            if entry.compressed or not pv.physical.is_raw:
                continue
            score = cache.score(pv, entry)
            if math.isinf(score):
                continue
            if best is None or score > best[0]:
                best = (score, pv, entry)
    if best is None:
        return False
    _, pv, entry = best
    frames, _ = catalog.load_gop_frames(pv, entry)
    gop = refcodec.encode_gop(frames, refcodec.CODEC_LOSSLESS, level)
    path = catalog.gop_path(pv, entry)
    tmp = path.with_suffix(".tmp")
    nbytes = gop.save(tmp)
    os.replace(tmp, path)
    entry.nbytes = nbytes
    entry.compressed = True
    entry.independent_index = sorted(gop.independent)
    catalog.save()
    return True


def _contiguous_runs(pvs: list) -> list:
    """Group same-configuration sealed views into temporally contiguous runs."""
    groups: dict = {}
    for pv in pvs:
        if not pv.sealed or not pv.gops:
            continue
        key = (pv.spatial.width, pv.spatial.height, pv.spatial.roi,
               pv.physical.layout, pv.physical.q, pv.physical.gop_len, pv.fps)
        groups.setdefault(key, []).append(pv)
    runs = []
    for members in groups.values():
        # overlapping duplicates may share a start time, so chain views by
        # end-to-start adjacency instead of scanning a single sorted pass
        members.sort(key=lambda pv: (pv.start, pv.end))
        by_start: dict = {}
        for pv in members:
            by_start.setdefault(pv.start, []).append(pv)
        used: set = set()
        for pv in members:
            if pv.id in used:
                continue
            run = [pv]
            used.add(pv.id)
            while True:
                successor = next((c for c in by_start.get(run[-1].end, ())
                                  if c.id not in used), None)
                if successor is None:
                    break
                run.append(successor)
                used.add(successor.id)
            if len(run) >= 2:
                runs.append(run)
    return runs


def compact(catalog: Catalog, name: str) -> int:
    """Merge contiguous same-configuration cached views, to a fixpoint.

    The merged view hard-links every GOP file from its sources, then the
    sources are dropped; the original physical video never participates.
    Returns the number of merges performed.
    """
    video = catalog.get(name)
    merges = 0
    while True:
        pvs = [pv for pv in catalog.physicals_of(name) if pv.id != video.original]
        runs = _contiguous_runs(pvs)
        if not runs:
            break
        for run in runs:
            merged = catalog.new_physical(name, run[0].spatial, run[0].physical,
                                          run[0].fps, run[0].quality)
            merged_dir = catalog.root / name / merged.dirname()
            seq = 0
            for pv in run:
                for entry in pv.gops:
                    src = catalog.gop_path(pv, entry)
                    dst = merged_dir / str(seq)
                    os.link(src, dst)
                    merged.gops.append(GopEntry(
                        seq, entry.start, entry.end,
                        str(dst.relative_to(catalog.root)), entry.nbytes,
                        entry.frame_count, list(entry.independent_index),
                        entry.lru, entry.pinned, entry.compressed))
                    seq += 1
            merged.sealed = True
            for pv in run:
                catalog.drop_physical(pv)
            merges += 1
        catalog.save()
    if merges:
        catalog.save()
    return merges


def maintenance_pass(catalog: Catalog, cache: CacheManager,
                     config: StoreConfig | None = None) -> dict:
    """One background sweep over every logical video."""
    compressed = 0
    merges = 0
    for name in list(catalog.videos):
        if deferred_tick(catalog, cache, name):
            compressed += 1
        merges += compact(catalog, name)
    return {"compressed": compressed, "merges": merges}
