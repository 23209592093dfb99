"""Command-line interface: lifecycle subcommands, raw-container I/O,
JSON output, error reporting, and the store lock."""
import json

import numpy as np
import pytest

from gopstore import cli, rawio
from gopstore.bench import make_scene
from gopstore.errors import StoreError


def _run(capsys, *args):
    code = cli.main([str(a) for a in args])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _ingest(tmp_path, capsys, n=16, name="clip"):
    frames = make_scene(n, height=48, width=64)
    src = tmp_path / "in.vssr"
    rawio.write_raw(src, frames, 8, rawio.LAYOUT_RGB8)
    code, out, _ = _run(capsys, "--store", tmp_path / "store", "write",
                        name, src, "--gop-len", "8")
    assert code == 0
    return frames, json.loads(out)


def test_write_then_read_roundtrip(tmp_path, capsys):
    frames, written = _ingest(tmp_path, capsys)
    assert written["frames"] == 16
    dst = tmp_path / "out.vssr"
    code, out, _ = _run(capsys, "--store", tmp_path / "store", "read",
                        "clip", "0", "2", dst)
    assert code == 0
    report = json.loads(out)
    assert report["frames"] == 16
    assert report["quality_db"] == "inf"
    back, fps, layout = rawio.read_raw(dst)
    assert np.array_equal(back, frames)
    assert fps == 8 and layout == rawio.LAYOUT_RGB8


def test_configured_read_and_cache_reuse(tmp_path, capsys):
    _ingest(tmp_path, capsys)
    dst = tmp_path / "small.vssr"
    args = ("--store", tmp_path / "store", "read", "clip", "0", "1", dst,
            "--width", "32", "--height", "24")
    code, out, _ = _run(capsys, *args)
    assert code == 0
    first = json.loads(out)
    assert first["cached_id"] is not None
    back, _, _ = rawio.read_raw(dst)
    assert back.shape == (8, 24, 32, 3)
    # the repeat read plans zero fragments: served from the cached view
    code, out, _ = _run(capsys, *args)
    assert code == 0
    assert json.loads(out)["plan"]["fragments"] == []


def test_create_delete_stats(tmp_path, capsys):
    store = tmp_path / "store"
    code, out, _ = _run(capsys, "--store", store, "create", "clip",
                        "--budget", "100000")
    assert code == 0 and json.loads(out) == {"created": "clip"}
    _ingest(tmp_path, capsys)
    code, out, _ = _run(capsys, "--store", store, "stats", "clip")
    stats = json.loads(out)
    assert stats["budget_bytes"] == 100000
    assert stats["duration"] == [2, 1]
    code, out, _ = _run(capsys, "--store", store, "delete", "clip")
    assert code == 0
    code, _, err = _run(capsys, "--store", store, "stats", "clip")
    assert code == 1
    assert json.loads(err)["error"] == "UnknownVideo"


def test_pin_and_unpin(tmp_path, capsys):
    _ingest(tmp_path, capsys)
    code, out, _ = _run(capsys, "--store", tmp_path / "store", "pin",
                        "clip", "0", "1", "--width", "32", "--height", "24")
    assert code == 0
    assert json.loads(out)["pinned"] > 0
    code, out, _ = _run(capsys, "--store", tmp_path / "store", "unpin",
                        "clip", "0", "1", "--width", "32", "--height", "24")
    assert json.loads(out)["unpinned"] > 0


def test_compact_subcommand(tmp_path, capsys):
    _ingest(tmp_path, capsys)
    code, out, _ = _run(capsys, "--store", tmp_path / "store", "compact",
                        "clip")
    assert code == 0
    assert json.loads(out) == {"merges": 0}


def test_error_is_json_on_stderr(tmp_path, capsys):
    code, out, err = _run(capsys, "--store", tmp_path / "store", "read",
                          "ghost", "0", "1", tmp_path / "x.vssr")
    assert code == 1
    assert out == ""
    payload = json.loads(err)
    assert payload["error"] == "UnknownVideo"
    assert "ghost" in payload["message"]


def test_store_lock_blocks_second_holder(tmp_path):
    with cli.store_lock(tmp_path):
        with pytest.raises(StoreError):
            with cli.store_lock(tmp_path):
                pass
    # released on exit
    with cli.store_lock(tmp_path):
        pass


def test_lock_removed_after_error(tmp_path, capsys):
    code, _, _ = _run(capsys, "--store", tmp_path, "delete", "missing")
    assert code == 1
    assert not (tmp_path / cli.LOCK_NAME).exists()
