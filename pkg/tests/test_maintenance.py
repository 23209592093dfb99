"""Deferred compression and compaction."""
from fractions import Fraction

import numpy as np
import pytest

from gopstore.cache import CacheManager
from gopstore.catalog import Catalog, PhysicalConfig, SpatialConfig
from gopstore.maintenance import (compact, deferred_level, deferred_tick,
                                  maintenance_pass, occupancy)
from gopstore.quality import QualityRecord


def _frames(n, h=8, w=8, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, (n, h, w, 3)).astype(np.uint8)


def _setup(tmp_path, budget=10.0):
    catalog = Catalog(tmp_path)
    catalog.create("clip", budget)
    catalog.write("clip", SpatialConfig(8, 8),
                  PhysicalConfig("ref-delta", gop_len=8), 10, _frames(24))
    return catalog, CacheManager(catalog)


def _add_raw_view(catalog, n=16, start=0, seed=1):
    catalog.config.max_raw_block_bytes = 8 * 8 * 3 * 8   # 8 frames/block
    # smooth content so lossless recompression actually shrinks it
    rng = np.random.default_rng(seed)
    ramp = np.linspace(0, 255, 8, dtype=np.uint8)
    frames = np.broadcast_to(ramp, (n, 8, 8)).copy()
    frames = np.repeat(frames[..., None], 3, axis=-1)
    frames += rng.integers(0, 4, frames.shape, dtype=np.uint8)
    pid = catalog.write("clip", SpatialConfig(8, 8), PhysicalConfig("raw-rgb8"),
                        10, frames, start=Fraction(start))
    pv = catalog.physicals[pid]
    pv.quality = QualityRecord([1e-6])
    return pv


class TestDeferredLevel:
    def test_inactive_below_threshold(self):
        assert deferred_level(0.0) == 0
        assert deferred_level(0.2499) == 0

    def test_endpoints_exact(self):
        assert deferred_level(0.25) == 1
        assert deferred_level(1.0) == 19

    def test_saturates_above_one(self):
        assert deferred_level(1.5) == 19

    def test_monotone_ramp(self):
        levels = [deferred_level(0.25 + i * 0.75 / 100) for i in range(101)]
        assert levels[0] == 1 and levels[-1] == 19
        assert all(a <= b for a, b in zip(levels, levels[1:]))


class TestDeferredTick:
    def test_noop_when_under_threshold(self, tmp_path):
        catalog, cache = _setup(tmp_path, budget=10 ** 9)
        _add_raw_view(catalog)
        assert occupancy(catalog, "clip") < 0.25
        assert not deferred_tick(catalog, cache, "clip")

    def test_compresses_and_preserves_bytes(self, tmp_path):
        catalog, cache = _setup(tmp_path)
        pv = _add_raw_view(catalog)
        before = np.concatenate([catalog.load_gop_frames(pv, g)[0]
                                 for g in pv.gops])
        catalog.get("clip").budget_bytes = int(catalog.usage_of("clip") / 0.9)
        assert occupancy(catalog, "clip") > 0.25
        raw_bytes = pv.nbytes
        assert deferred_tick(catalog, cache, "clip")
        assert sum(g.compressed for g in pv.gops) == 1
        assert pv.nbytes < raw_bytes
        after = np.concatenate([catalog.load_gop_frames(pv, g)[0]
                                for g in pv.gops])
        assert np.array_equal(after, before)

    def test_one_gop_per_tick_until_done(self, tmp_path):
        catalog, cache = _setup(tmp_path)
        pv = _add_raw_view(catalog)
        catalog.get("clip").budget_bytes = int(catalog.usage_of("clip") / 0.9)
        ticks = 0
        while deferred_tick(catalog, cache, "clip"):
            ticks += 1
        assert ticks == 2
        assert all(g.compressed for g in pv.gops)

    def test_never_touches_original(self, tmp_path):
        catalog, cache = _setup(tmp_path)
        catalog.get("clip").budget_bytes = catalog.usage_of("clip")
        assert not deferred_tick(catalog, cache, "clip")
        original = catalog.original_of("clip")
        assert not any(g.compressed for g in original.gops)

    def test_survives_reload(self, tmp_path):
        catalog, cache = _setup(tmp_path)
        pv = _add_raw_view(catalog)
        before = np.concatenate([catalog.load_gop_frames(pv, g)[0]
                                 for g in pv.gops])
        catalog.get("clip").budget_bytes = int(catalog.usage_of("clip") / 0.9)
        deferred_tick(catalog, cache, "clip")
        again = Catalog(tmp_path)
        pv2 = again.physicals[pv.id]
        after = np.concatenate([again.load_gop_frames(pv2, g)[0]
                                for g in pv2.gops])
        assert np.array_equal(after, before)


class TestCompact:
    def _split_views(self, catalog, seeds=(1, 2), starts=(0, Fraction(8, 10))):
        pvs = []
        for seed, start, n in zip(seeds, starts, (8, 8)):
            pid = catalog.write("clip", SpatialConfig(8, 8),
                                PhysicalConfig("ref-delta", gop_len=8), 10,
                                _frames(n, seed=seed), start=Fraction(start))
            pv = catalog.physicals[pid]
            pv.quality = QualityRecord([1e-6])
            pvs.append(pv)
        return pvs

    def test_merges_contiguous_same_config(self, tmp_path):
        catalog, _ = _setup(tmp_path)
        a, b = self._split_views(catalog)
        frames = np.concatenate(
            [catalog.load_gop_frames(pv, g)[0] for pv in (a, b) for g in pv.gops])
        assert compact(catalog, "clip") == 1
        views = [pv for pv in catalog.physicals_of("clip")
                 if pv.id != catalog.get("clip").original]
        assert len(views) == 1
        merged = views[0]
        assert merged.start == 0 and merged.end == Fraction(16, 10)
        merged.check_invariants()
        out = np.concatenate([catalog.load_gop_frames(merged, g)[0]
                              for g in merged.gops])
        assert np.array_equal(out, frames)

    def test_fixpoint_leaves_no_adjacent_pair(self, tmp_path):
        catalog, _ = _setup(tmp_path)
        self._split_views(catalog, seeds=(1, 2, 3),
                          starts=(0, Fraction(8, 10), Fraction(16, 10)))
        compact(catalog, "clip")
        views = [pv for pv in catalog.physicals_of("clip")
                 if pv.id != catalog.get("clip").original]
        for x in views:
            for y in views:
                if x is y or not x.same_config(y):
                    continue
                assert x.end != y.start   # nothing contiguous remains

    def test_gap_prevents_merge(self, tmp_path):
        catalog, _ = _setup(tmp_path)
        self._split_views(catalog, starts=(0, Fraction(16, 10)))
        assert compact(catalog, "clip") == 0

    def test_config_mismatch_prevents_merge(self, tmp_path):
        catalog, _ = _setup(tmp_path)
        a, b = self._split_views(catalog)
        b.physical = PhysicalConfig("ref-intra", gop_len=8)
        assert compact(catalog, "clip") == 0

    def test_idempotent(self, tmp_path):
        catalog, _ = _setup(tmp_path)
        self._split_views(catalog)
        assert compact(catalog, "clip") == 1
        assert compact(catalog, "clip") == 0


def test_maintenance_pass_reports(tmp_path):
    catalog, cache = _setup(tmp_path)
    _add_raw_view(catalog)
    catalog.get("clip").budget_bytes = int(catalog.usage_of("clip") / 0.9)
    report = maintenance_pass(catalog, cache)
    assert report["compressed"] == 1
    assert report["merges"] == 0
