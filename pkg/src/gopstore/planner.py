"""Read planning: transition points, fragment enumeration, quality
filtering, and minimum-cost cover selection.

A read over [s, e] is partitioned at every cached-view endpoint strictly
inside the query range.  Between consecutive transition points exactly one
quality-passing view fragment must be chosen.  Fragment cost is the
transcode cost (per-pixel alpha times pixel count) plus the look-back cost
of decoding dependency frames not already decoded by earlier choices.

The exact solver is an interval DP whose state tracks, per source, how far
into the current GOP decoding has already progressed.  With chain-structured
dependencies the decoded frames of a source within one GOP always form a
prefix, so this marker captures the Omega interaction exactly; the DP is
optimal and is checked against a brute-force enumerator in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import codec as refcodec
from .alpha import AlphaTable
from .catalog import PhysicalVideo, SpatialConfig, PhysicalConfig
from .errors import NoQualifyingCover, OutOfRange
from .quality import estimate_u


@dataclass
class ReadRequest:
    spatial: SpatialConfig       # reference frame geometry plus optional ROI
    start: Fraction
    end: Fraction
    fps: Fraction
    physical: PhysicalConfig
    quality_cutoff_db: float = 40.0
    out_width: int | None = None   # output raster; defaults to the reference
    out_height: int | None = None

    def __post_init__(self):
        if self.out_width is None:
            self.out_width = self.spatial.width
        if self.out_height is None:
            self.out_height = self.spatial.height


@dataclass
class Fragment:
    source: PhysicalVideo
    start: Fraction
    end: Fraction
    transcode_cost: float = 0.0
    lookback_cost: float = 0.0

    @property
    def cost(self) -> float:
        return self.transcode_cost + self.lookback_cost


@dataclass
class Plan:
    fragments: list
    total_cost: float
    exact: bool = True

    def to_json(self) -> dict:
        return {
            "exact": self.exact,
            "total_cost": self.total_cost,
            "fragments": [
                {"source": f.source.id, "start": [f.start.numerator, f.start.denominator],
                 "end": [f.end.numerator, f.end.denominator],
                 "transcode_cost": f.transcode_cost, "lookback_cost": f.lookback_cost}
                for f in self.fragments
            ],
        }


def transition_points(views: list, start: Fraction, end: Fraction) -> list:
    """Sorted unique times: query endpoints plus view endpoints strictly inside."""
    points = {start, end}
    for view in views:
        for t in (view.start, view.end):
            if start < t < end:
                points.add(t)
    return sorted(points)


def eligible_views(views: list, request: ReadRequest) -> list:
    """Views that can contribute fragments: sealed, temporally overlapping,
    spatially covering, and passing the quality cutoff."""
    out = []
    for view in views:
        if not view.sealed or not view.gops:
            continue
        if view.end <= request.start or view.start >= request.end:
            continue
        if not view.spatial.covers(request.spatial):
            continue
        _, ok = estimate_u(view.quality, request.quality_cutoff_db)
        if ok:
            out.append(view)
    return out


def fragment_pixels(view: PhysicalVideo, request: ReadRequest,
                    duration: Fraction) -> float:
    """ROI-cropped pixel count of a fragment at the source's resolution."""
    per_frame = view.spatial.width * view.spatial.height
    if request.spatial.roi is not None:
        frac = request.spatial.pixels / (request.spatial.width * request.spatial.height)
        per_frame *= frac
    return per_frame * float(duration * view.fps)


def transcode_cost(view: PhysicalVideo, request: ReadRequest,
                   duration: Fraction, alpha: AlphaTable) -> float:
    same_config = (view.physical.layout == request.physical.layout
                   and view.physical.q == request.physical.q
                   and view.spatial.width == request.out_width
                   and view.spatial.height == request.out_height
                   and view.spatial.roi == request.spatial.roi
                   and view.fps == request.fps)
    per_pixel = alpha.alpha(view.physical.layout, request.physical.layout,
                            same_config, view.spatial.width * view.spatial.height)
    return per_pixel * fragment_pixels(view, request, duration)


def entry_dependencies(view: PhysicalVideo, t: Fraction) -> tuple:
    """(gop_start_frame, frame_offset_in_gop) for a fragment starting at t.

    With the chain-dependency codec the dependency set of a fragment that
    starts k frames into a GOP is exactly the first k frames of that GOP.
    """
    entry = view.lookup(t)
    gop_start_frame = view.frame_index(entry.start)
    offset = view.frame_index(t) - gop_start_frame
    return gop_start_frame, offset


def lookback_cost(view: PhysicalVideo, t: Fraction, decoded_end: int | None,
                  eta: float) -> float:
    """Cost of decoding the dependency frames not already decoded.

    ``decoded_end`` is the global index of the last frame of this source
    already decoded within the GOP containing t (None if no frames of that
    GOP were decoded).
    """
    if view.physical.layout != refcodec.CODEC_DELTA:
        return 0.0
    gop_start, offset = entry_dependencies(view, t)
    if offset == 0:
        return 0.0
    first_missing = 0 if decoded_end is None else decoded_end - gop_start + 1
    missing = max(0, offset - first_missing)
    if missing == 0:
        return 0.0
    independent = 1 if first_missing == 0 else 0  # frame 0 is the only intra frame
    dependent = missing - independent
    return independent + eta * dependent


class _DepIndex:
    """Per-plan cache of every (view, transition point) frame computation.

    The DP revisits the same points for every frontier state, and the
    rational-time arithmetic behind ``lookup``/``frame_index`` is expensive
    enough to dominate planning; one pass per view amortizes it.
    """

    def __init__(self, views: list, points: list):
        self.delta = {v.id: v.physical.layout == refcodec.CODEC_DELTA
                      for v in views}
        self.dep: dict = {}       # (pid, t) -> (gop_start_frame, offset)
        self.last_frame: dict = {}  # (pid, t) -> frame_ceil(t) - 1
        for view in views:
            for t in points:
                if view.start <= t < view.end:
                    gop_start, offset = entry_dependencies(view, t)
                    self.dep[(view.id, t)] = (gop_start, offset)
                else:
                    self.dep[(view.id, t)] = None
                if view.start <= t <= view.end:
                    self.last_frame[(view.id, t)] = view.frame_ceil(t) - 1

    def lookback(self, pid: int, t: Fraction, decoded_end: int | None,
                 eta: float) -> float:
        if not self.delta[pid]:
            return 0.0
        dep = self.dep[(pid, t)]
        if dep is None:
            return 0.0
        gop_start, offset = dep
        if offset == 0:
            return 0.0
        first_missing = 0 if decoded_end is None else decoded_end - gop_start + 1
        missing = max(0, offset - first_missing)
        if missing == 0:
            return 0.0
        independent = 1 if first_missing == 0 else 0
        return independent + eta * (missing - independent)

    def canonical(self, state: tuple, t: Fraction) -> tuple:
        """Drop decoded-suffix markers that can no longer matter at time t."""
        keep = []
        for pid, decoded_end in state:
            dep = self.dep.get((pid, t))
            if dep is not None and decoded_end >= dep[0]:
                keep.append((pid, decoded_end))
        return tuple(sorted(keep))


def plan_exact(views: list, request: ReadRequest, alpha: AlphaTable,
               eta: float = 1.45, max_exact_intervals: int = 24) -> Plan:
    """Minimum-cost non-overlapping cover of the query interval.

    Falls back to the greedy planner (flagged on the plan) past the exact
    instance size limit.
    """
    usable = eligible_views(views, request)
    if not usable:
        raise NoQualifyingCover(
            "no quality-passing view covers the query (corrupted metadata?)")
    points = transition_points(usable, request.start, request.end)
    intervals = list(zip(points[:-1], points[1:]))
    if len(intervals) > max_exact_intervals:
        plan = plan_greedy(views, request, alpha, eta)
        plan.exact = False
        return plan

    index = _DepIndex(usable, points)
    candidates = _interval_candidates(usable, request, intervals, alpha)

    # DP over intervals; state = per-source decoded-suffix markers
    start_state = ()
    # value: (cost, tie, fragments)
    frontier = {start_state: (0.0, (0, ()), [])}
    for idx, (ts, te) in enumerate(intervals):
        next_frontier: dict = {}
        for state, (cost, tie, frags) in frontier.items():
            decoded = dict(state)
            for view, tcost in candidates[idx]:
                lcost = index.lookback(view.id, ts, decoded.get(view.id), eta)
                frag = Fragment(view, ts, te, tcost, lcost)
                new_decoded = dict(decoded)
                if index.delta[view.id]:
                    new_decoded[view.id] = index.last_frame[(view.id, te)]
                if idx + 1 < len(intervals):
                    new_state = index.canonical(tuple(new_decoded.items()), te)
                else:
                    new_state = ()
                switches = tie[0] + (0 if frags and frags[-1].source.id == view.id else 1)
                new_tie = (switches, tie[1] + (view.id,))
                new_cost = cost + frag.cost
                prev = next_frontier.get(new_state)
                if prev is None or (new_cost, new_tie) < (prev[0], prev[1]):
                    next_frontier[new_state] = (new_cost, new_tie, frags + [frag])
        if not next_frontier:
            raise NoQualifyingCover("no view covers one of the query intervals")
        frontier = next_frontier

    cost, _, frags = min(frontier.values(), key=lambda v: (v[0], v[1]))
    return Plan(_merge_adjacent(frags), cost, exact=True)


def plan_greedy(views: list, request: ReadRequest, alpha: AlphaTable,
                eta: float = 1.45) -> Plan:
    """Dependency-naive baseline: per-interval argmin with no Omega sharing."""
    usable = eligible_views(views, request)
    if not usable:
        raise NoQualifyingCover(
            "no quality-passing view covers the query (corrupted metadata?)")
    points = transition_points(usable, request.start, request.end)
    intervals = list(zip(points[:-1], points[1:]))
    candidates = _interval_candidates(usable, request, intervals, alpha)
    frags = []
    total = 0.0
    for idx, (ts, te) in enumerate(intervals):
        best = None
        for view, tcost in candidates[idx]:
            lcost = lookback_cost(view, ts, None, eta)
            frag = Fragment(view, ts, te, tcost, lcost)
            key = (frag.cost, view.id)
            if best is None or key < best[0]:
                best = (key, frag)
        if best is None:
            raise NoQualifyingCover("no view covers one of the query intervals")
        frags.append(best[1])
        total += best[1].cost
    return Plan(_merge_adjacent(frags), total, exact=True)


def _interval_candidates(usable: list, request: ReadRequest,
                         intervals: list, alpha: AlphaTable) -> list:
    candidates = []
    for ts, te in intervals:
        here = []
        for view in usable:
            if view.start <= ts and view.end >= te:
                here.append((view, transcode_cost(view, request, te - ts, alpha)))
        candidates.append(here)
    return candidates


def _merge_adjacent(frags: list) -> list:
    """Coalesce consecutive fragments drawn from the same source."""
    merged: list[Fragment] = []
    for frag in frags:
        if merged and merged[-1].source.id == frag.source.id \
                and merged[-1].end == frag.start:
            prev = merged[-1]
            merged[-1] = Fragment(prev.source, prev.start, frag.end,
                                  prev.transcode_cost + frag.transcode_cost,
                                  prev.lookback_cost + frag.lookback_cost)
        else:
            merged.append(frag)
    return merged


def validate_range(original: PhysicalVideo, start: Fraction, end: Fraction) -> None:
    if start >= end:
        raise OutOfRange(f"empty query interval [{start}, {end}]")
    if start < original.start or end > original.end:
        raise OutOfRange(
            f"query [{start}, {end}] outside original [{original.start}, {original.end}]")
