"""Store-wide tunables, loadable from an INI file.

All defaults match the engine's shipped policy constants; every key can be
overridden via ``StoreConfig.from_file`` or keyword arguments.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, asdict
from pathlib import Path


@dataclass
class StoreConfig:
    # quality model
    tau_db: float = 40.0            # lossless threshold (dB)
    quality_cutoff_db: float = 40.0  # default read cutoff (dB)

    # cost model
    eta: float = 1.45               # dependent-frame decode weight
    max_exact_intervals: int = 24   # exact planner limit before greedy fallback

    # cache policy
    gamma: float = 2.0              # position weight
    zeta: float = 1.0               # redundancy weight
    budget_default_multiple: float = 10.0

    # joint compression
    dup_epsilon: float = 0.1        # ||H - I|| duplicate threshold
    jointc_gate_db: float = 24.0    # per-frame reconstruction gate (dB)
    match_min: int = 20             # minimum unambiguous feature matches
    match_d: float = 400.0          # feature distance ceiling
    lowe_ratio: float = 0.75
    birch_threshold: float = 0.05   # CF-tree split radius on normalized histograms
    selection_budget_fraction: float = 0.2  # cap on pair evaluations vs all-pairs

    # deferred compression / maintenance
    deferred_threshold: float = 0.25
    maintenance_interval_ms: int = 1000

    # ingest
    max_raw_block_bytes: int = 25 * 1000 * 1000

    @classmethod
    def from_file(cls, path: str | Path, section: str = "gopstore") -> "StoreConfig":
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        cfg = cls()
        if not parser.has_section(section):
            return cfg
        for key, value in parser.items(section):
            if not hasattr(cfg, key):
                raise KeyError(f"unknown config key: {key}")
            kind = type(getattr(cfg, key))
            setattr(cfg, key, kind(value))
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)
