"""Command-line front end.

Frames enter and leave the CLI as raw container files, so pipelines can be
scripted without Python.  Every command takes the store root via --store;
mutating commands hold an exclusive lock file for their duration.  Errors
print one JSON object to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import bench as benchmod
from . import jointc, rawio
from .alpha import calibrate
from .config import StoreConfig
from .errors import StoreError
from .maintenance import compact, maintenance_pass
from .store import VideoStore

LOCK_NAME = ".lock"


@contextlib.contextmanager
def store_lock(root: Path):
    root.mkdir(parents=True, exist_ok=True)
    path = root / LOCK_NAME
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StoreError(f"store is locked by another process ({path})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(path)


def _frac(text: str) -> Fraction:
    return Fraction(text)


def _open_store(args) -> VideoStore:
    config = StoreConfig()
    if args.config:
        config = StoreConfig.from_file(args.config)
    return VideoStore(args.store, config)


def cmd_create(args) -> dict:
    store = _open_store(args)
    budget = args.budget if args.budget is not None else args.budget_multiple
    store.create(args.name, budget)
    return {"created": args.name}


def cmd_delete(args) -> dict:
    _open_store(args).delete(args.name)
    return {"deleted": args.name}


def cmd_write(args) -> dict:
    store = _open_store(args)
    frames, fps, _ = rawio.read_raw(args.input)
    pid = store.write(args.name, frames, fps, layout=args.layout, q=args.q,
                      gop_len=args.gop_len, start=_frac(args.start))
    return {"written": args.name, "physical_id": pid, "frames": len(frames)}


def cmd_read(args) -> dict:
    store = _open_store(args)
    roi = tuple(args.roi) if args.roi else None
    result = store.read(args.name, _frac(args.start), _frac(args.end),
                        width=args.width, height=args.height, roi=roi,
                        fps=_frac(args.fps) if args.fps else None,
                        layout=args.layout, q=args.q,
                        cache_result=not args.no_cache,
                        planner=args.planner)
    frames = result.frames
    layout = rawio.LAYOUT_Y8 if frames.ndim == 3 else rawio.LAYOUT_RGB8
    rawio.write_raw(args.output, frames, result.fps, layout)
    quality = result.quality.combined_psnr()
    return {"read": args.name, "frames": len(frames),
            "plan": result.plan.to_json(),
            "quality_db": "inf" if math.isinf(quality) else quality,
            "cached_id": result.cached_id}


def cmd_pin(args) -> dict:
    store = _open_store(args)
    roi = tuple(args.roi) if args.roi else None
    count = store.pin(args.name, _frac(args.start), _frac(args.end),
                      width=args.width, height=args.height, roi=roi,
                      layout=args.layout, q=args.q)
    return {"pinned": count}


def cmd_unpin(args) -> dict:
    store = _open_store(args)
    roi = tuple(args.roi) if args.roi else None
    count = store.unpin(args.name, _frac(args.start), _frac(args.end),
                        width=args.width, height=args.height, roi=roi,
                        layout=args.layout, q=args.q)
    return {"unpinned": count}


def cmd_stats(args) -> dict:
    return _open_store(args).stats(args.name)


def cmd_compact(args) -> dict:
    store = _open_store(args)
    if args.name:
        merges = compact(store.catalog, args.name)
        return {"merges": merges}
    return maintenance_pass(store.catalog, store.cache, store.config)


def cmd_jointc_scan(args) -> dict:
    """Find overlapping GOP pairs in a video and report joint savings."""
    store = _open_store(args)
    original = store.catalog.original_of(args.name)
    gop_frames = []
    for entry in original.gops:
        frames, _ = store.catalog.load_gop_frames(original, entry)
        gop_frames.append(frames)
    candidates, evaluated = jointc.select_candidates(gop_frames, store.config)
    out_dir = store.root / args.name / "joint"
    out_dir.mkdir(exist_ok=True)
    pairs = []
    for i, j in candidates:
        a, b = gop_frames[i], gop_frames[j]
        if len(a) != len(b):
            continue
        pair = jointc.joint_compress(a, b, merge=args.merge, config=store.config)
        if pair is None:
            continue
        path = out_dir / f"{i}-{j}.pair"
        pair.save(path)
        pairs.append({"gops": [i, j], "bytes": pair.nbytes,
                      "variant": "duplicate" if pair.variant else "regions",
                      "path": str(path.relative_to(store.root))})
    return {"candidates": len(candidates), "evaluated": evaluated,
            "compressed": pairs}


def cmd_calibrate(args) -> dict:
    table = calibrate()
    out = Path(args.out) if args.out else Path(args.store) / "alpha.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    table.save(out)
    return {"calibrated": str(out), "entries": len(table.entries)}


def cmd_bench(args) -> dict:
    text = benchmod.run(args.workloads or None, seed=args.seed)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return {"workloads": args.workloads or list(benchmod.WORKLOADS)}


def _add_read_config(sub):
    sub.add_argument("--width", type=int)
    sub.add_argument("--height", type=int)
    sub.add_argument("--roi", type=int, nargs=4, metavar=("X0", "X1", "Y0", "Y1"))
    sub.add_argument("--layout")
    sub.add_argument("--q", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gopstore")
    parser.add_argument("--store", default=".", help="store root directory")
    parser.add_argument("--config", help="INI configuration file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("create", help="register a logical video")
    p.add_argument("name")
    p.add_argument("--budget", type=int, help="absolute byte budget")
    p.add_argument("--budget-multiple", type=float,
                   help="budget as a multiple of the first write")
    p.set_defaults(fn=cmd_create, locking=True)

    p = sub.add_parser("delete", help="remove a logical video and its files")
    p.add_argument("name")
    p.set_defaults(fn=cmd_delete, locking=True)

    p = sub.add_parser("write", help="ingest a raw container file")
    p.add_argument("name")
    p.add_argument("input")
    p.add_argument("--layout", default="ref-delta")
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--gop-len", type=int, default=8)
    p.add_argument("--start", default="0")
    p.set_defaults(fn=cmd_write, locking=True)

    p = sub.add_parser("read", help="read a configured range to a raw file")
    p.add_argument("name")
    p.add_argument("start")
    p.add_argument("end")
    p.add_argument("output")
    p.add_argument("--fps")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--planner", choices=("exact", "greedy"), default="exact")
    _add_read_config(p)
    p.set_defaults(fn=cmd_read, locking=True)

    for verb, fn in (("pin", cmd_pin), ("unpin", cmd_unpin)):
        p = sub.add_parser(verb, help=f"{verb} a configured range")
        p.add_argument("name")
        p.add_argument("start")
        p.add_argument("end")
        _add_read_config(p)
        p.set_defaults(fn=fn, locking=True)

    p = sub.add_parser("stats", help="print video statistics as JSON")
    p.add_argument("name")
    p.set_defaults(fn=cmd_stats, locking=False)

    p = sub.add_parser("compact", help="run maintenance (compaction and "
                                       "deferred compression)")
    p.add_argument("name", nargs="?")
    p.set_defaults(fn=cmd_compact, locking=True)

    p = sub.add_parser("jointc", help="joint compression tools")
    joint_sub = p.add_subparsers(dest="jointc_command", required=True)
    scan = joint_sub.add_parser("scan", help="find and compress overlapping "
                                             "GOP pairs")
    scan.add_argument("name")
    scan.add_argument("--merge", choices=(jointc.MERGE_UNPROJECTED,
                                          jointc.MERGE_MEAN),
                      default=jointc.MERGE_UNPROJECTED)
    scan.set_defaults(fn=cmd_jointc_scan, locking=True)

    p = sub.add_parser("calibrate", help="measure per-pixel conversion costs")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_calibrate, locking=False)

    p = sub.add_parser("bench", help="run synthetic benchmarks")
    p.add_argument("--workloads", nargs="*", choices=list(benchmod.WORKLOADS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_bench, locking=False)
    return parser


def main(argv: list | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "locking", False):
            with store_lock(Path(args.store)):
                out = args.fn(args)
        else:
            out = args.fn(args)
    except StoreError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr)
        sys.stderr.write("\n")
        return 1
    if args.command != "bench" or args.out:
        json.dump(out, sys.stdout, default=str)
        sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
