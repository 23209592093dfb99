"""Budget pressure in action: cached views accumulate, the budget forces
evictions, deferred compression shrinks raw leftovers, and compaction glues
fragmented views back together.

Usage: python3 demos/budget_maintenance.py
"""
import tempfile
from fractions import Fraction

from gopstore.bench import make_scene
from gopstore.maintenance import compact, deferred_level, occupancy
from gopstore.quality import psnr
from gopstore.store import VideoStore


def main():
    with tempfile.TemporaryDirectory() as tmp:
        store = VideoStore(tmp)
        frames = make_scene(24, height=48, width=64, seed=1)
        store.write("cam", frames, 8, layout="ref-delta", gop_len=8)

        # a tight budget: 1.8x the original footprint
        original_bytes = store.catalog.usage_of("cam")
        store.catalog.get("cam").budget_bytes = int(original_bytes * 1.8)
        print(f"original {original_bytes} B, "
              f"budget {store.catalog.budget_of('cam')} B")

        # every cached read competes for the same budget
        for w, h in ((32, 24), (48, 36), (16, 12), (24, 18)):
            store.read("cam", 0, 3, width=w, height=h)
            stats = store.stats("cam")
            rho = occupancy(store.catalog, "cam")
            print(f"after {w}x{h} read: {stats['fragments']} fragments, "
                  f"occupancy {rho:.2f} "
                  f"(deferred level {deferred_level(rho)}), "
                  f"{stats['evictions']} evictions so far")

        # the original never degrades, whatever the cache does
        check = store.read("cam", 0, 3, cache_result=False)
        print(f"original readback: {psnr(check.frames, frames)} dB")

        # pinned ranges survive pressure
        pinned = store.pin("cam", 0, 1, width=32, height=24)
        print(f"pinned {pinned} fragments of the 32x24 view")
        store.cache.prune("cam")
        print(f"after prune: {store.stats('cam')['pinned']} still pinned, "
              f"usage {store.catalog.usage_of('cam')} B")
        store.unpin("cam", 0, 3, width=32, height=24)

        # fragment the cache on purpose, then compact it; the budget gets
        # headroom first so the piecewise reads are all admitted
        store.catalog.get("cam").budget_bytes = original_bytes * 10
        store.read("cam", 0, Fraction(1), width=40, height=30)
        store.read("cam", Fraction(1), Fraction(2), width=40, height=30)
        store.read("cam", Fraction(2), Fraction(3), width=40, height=30)
        views_before = store.stats("cam")["physical_videos"]
        merges = compact(store.catalog, "cam")
        views_after = store.stats("cam")["physical_videos"]
        print(f"compaction: {merges} merges, "
              f"{views_before} -> {views_after} physical videos")


if __name__ == "__main__":
    main()
