"""Budgeted caching of read results.

Cached physical videos are paged at GOP granularity: the eviction unit is a
single GOP entry.  Victim choice uses an LRU score offset by position
(edges of a view evict before the middle, to limit fragmentation),
redundancy (fragments with higher-quality covering variants evict sooner),
and a baseline-quality guard that makes the last lossless cover of any
interval unevictable.  The original physical video is never pruned.
"""
from __future__ import annotations

import math
import os
from fractions import Fraction

from .catalog import Catalog, GopEntry, PhysicalVideo, SpatialConfig, PhysicalConfig
from .config import StoreConfig
from .errors import BudgetUnsatisfiable
from .quality import estimate_u


class CacheManager:
    def __init__(self, catalog: Catalog, config: StoreConfig | None = None):
        self.catalog = catalog
        self.config = config or catalog.config

    # -- scoring ----------------------------------------------------------

    def score(self, pv: PhysicalVideo, entry: GopEntry) -> float:
        """LRU_VSS sequence number; the lowest-scored fragment is evicted first."""
        if entry.pinned:
            return math.inf
        n = len(pv.gops)
        i = pv.gops.index(entry)
        p = min(i, n - i)
        r = self._redundancy_rank(pv, entry)
        b = self._baseline_guard(pv, entry)
        return entry.lru + self.config.gamma * p - self.config.zeta * r + b

    def _redundancy_rank(self, pv: PhysicalVideo, entry: GopEntry) -> int:
        """Count of strictly-higher-quality variants covering this fragment."""
        own_quality = pv.quality.combined_psnr()
        rank = 0
        for other in self.catalog.physicals_of(pv.parent):
            if other.id == pv.id or not other.sealed or not other.gops:
                continue
            if not (other.start <= entry.start and other.end >= entry.end):
                continue
            if not other.spatial.covers(pv.spatial):
                continue
            if other.quality.combined_psnr() > own_quality:
                rank += 1
        return rank

    def _baseline_guard(self, pv: PhysicalVideo, entry: GopEntry) -> float:
        """+inf iff no *other* fragment with lossless quality covers this interval."""
        _, own_ok = estimate_u(pv.quality, self.config.tau_db)
        if not own_ok:
            return 0.0
        for other in self.catalog.physicals_of(pv.parent):
            if other.id == pv.id or not other.sealed or not other.gops:
                continue
            if not (other.start <= entry.start and other.end >= entry.end):
                continue
            _, ok = estimate_u(other.quality, self.config.tau_db)
            if ok:
                return 0.0
        return math.inf

    # -- victim selection and pruning -------------------------------------

    def _candidates(self, name: str, extra: PhysicalVideo | None = None) -> list:
        video = self.catalog.get(name)
        pvs = [pv for pv in self.catalog.physicals_of(name)
               if pv.id != video.original and pv.sealed]
        if extra is not None:
            pvs.append(extra)
        out = []
        for pv in pvs:
            for entry in pv.gops:
                if not entry.pinned:
                    out.append((pv, entry))
        return out

    def victim(self, name: str, extra: PhysicalVideo | None = None):
        """Lowest-scored unpinned fragment, or None if nothing is evictable."""
        candidates = self._candidates(name, extra)
        scored = [(self.score(pv, entry), pv.id, entry.seq, pv, entry)
                  for pv, entry in candidates]
        scored = [item for item in scored if not math.isinf(item[0])]
        if not scored:
            return None
        return min(scored, key=lambda item: item[:3])[3:]

    def evict(self, pv: PhysicalVideo, entry: GopEntry) -> None:
        """Delete one GOP page; interior eviction splits the view in two."""
        idx = pv.gops.index(entry)
        path = self.catalog.gop_path(pv, entry)
        try:
            os.unlink(path)
        except FileNotFoundError:
            pass
        tail = pv.gops[idx + 1:]
        pv.gops = pv.gops[:idx]
        self.catalog.eviction_count += 1
        if tail and pv.gops:
            split = self.catalog.new_physical(pv.parent, pv.spatial, pv.physical,
                                              pv.fps, pv.quality)
            split.sealed = True
            split_dir = self.catalog.root / pv.parent / split.dirname()
            for seq, moved in enumerate(tail):
                src = self.catalog.root / moved.path
                dst = split_dir / str(seq)
                os.rename(src, dst)
                moved.seq = seq
                moved.path = str(dst.relative_to(self.catalog.root))
                split.gops.append(moved)
        elif tail:
            pv.gops = tail
            for seq, moved in enumerate(pv.gops):
                moved.seq = seq
        if not pv.gops:
            self.catalog.drop_physical(pv)

    def prune(self, name: str) -> int:
        """Evict lowest-scored fragments (never the original) until within
        budget.  Returns the number of evictions."""
        budget = self.catalog.budget_of(name)
        if budget is None:
            return 0
        evicted = 0
        while self.catalog.usage_of(name) > budget:
            choice = self.victim(name)
            if choice is None:
                raise BudgetUnsatisfiable(
                    f"{name}: over budget but everything evictable is pinned or protected")
            self.evict(*choice)
            evicted += 1
        if evicted:
            self.catalog.save()
        return evicted

    # -- admission ---------------------------------------------------------

    def admit(self, name: str, staged: PhysicalVideo) -> bool:
        """Admit a fully materialized candidate under the budget.

        Makes room by evicting victims chosen over existing pages and the
        candidate's own pages; if the candidate itself is ever the victim it
        is rejected and its files discarded.
        """
        budget = self.catalog.budget_of(name)
        size = staged.nbytes
        while budget is not None and size + self._usage_excluding(name, staged) > budget:
            choice = self.victim(name, extra=staged)
            if choice is None or choice[0].id == staged.id:
                self._discard(staged)
                return False
            self.evict(*choice)
        self.catalog.save()
        return True

    def _usage_excluding(self, name: str, staged: PhysicalVideo) -> int:
        return sum(pv.nbytes for pv in self.catalog.physicals_of(name)
                   if pv.id != staged.id)

    def _discard(self, staged: PhysicalVideo) -> None:
        self.catalog.drop_physical(staged)
        self.catalog.save()

    # -- pinning -----------------------------------------------------------

    def _matching_entries(self, name: str, spatial: SpatialConfig,
                          start: Fraction, end: Fraction,
                          physical: PhysicalConfig) -> list:
        out = []
        for pv in self.catalog.physicals_of(name):
            if pv.spatial != spatial or pv.physical != physical:
                continue
            out.extend(pv.entries_overlapping(start, end))
        return out

    def pin(self, name: str, spatial: SpatialConfig, start, end,
            physical: PhysicalConfig) -> int:
        entries = self._matching_entries(name, spatial, Fraction(start),
                                         Fraction(end), physical)
        for entry in entries:
            entry.pinned = True
        self.catalog.save()
        return len(entries)

    def unpin(self, name: str, spatial: SpatialConfig, start, end,
              physical: PhysicalConfig) -> int:
        entries = self._matching_entries(name, spatial, Fraction(start),
                                         Fraction(end), physical)
        for entry in entries:
            entry.pinned = False
        self.catalog.save()
        return len(entries)

    # -- stats -------------------------------------------------------------

    def stats(self, name: str) -> dict:
        video = self.catalog.get(name)
        pvs = self.catalog.physicals_of(name)
        return {
            "name": name,
            "budget_bytes": video.budget_bytes,
            "usage_bytes": self.catalog.usage_of(name),
            "physical_videos": len(pvs),
            "fragments": sum(len(pv.gops) for pv in pvs),
            "pinned": sum(1 for pv in pvs for g in pv.gops if g.pinned),
            "evictions": self.catalog.eviction_count,
        }
