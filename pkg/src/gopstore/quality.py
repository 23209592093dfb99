"""Quality model: PSNR/MSE, the chained-resample MSE bound, and the
bitrate-based compression-quality estimate.

Quality is tracked per cached view without pixel access: each resample hop
stores one scalar MSE aggregate, and compression error is estimated from
mean bits per pixel (MBPP) through a monotone lookup curve that is refined
whenever an exact sampled PSNR becomes available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NegativeInput

PEAK = 255.0
INF_DB = math.inf


def mse(f: np.ndarray, f0: np.ndarray) -> float:
    """Mean squared error over all pixels and channels jointly."""
    f = np.asarray(f)
    f0 = np.asarray(f0)
    if f.shape != f0.shape:
        raise DimensionMismatch(f"shape {f.shape} vs {f0.shape}")
    diff = f.astype(np.float64) - f0.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr_from_mse(value: float, peak: float = PEAK) -> float:
    if value < 0:
        raise NegativeInput(f"negative MSE {value}")
    if value == 0:
        return INF_DB
    return 10.0 * math.log10(peak * peak / value)


def mse_from_psnr(db: float, peak: float = PEAK) -> float:
    if math.isinf(db):
        return 0.0
    return peak * peak / (10.0 ** (db / 10.0))


def psnr(f: np.ndarray, f0: np.ndarray, peak: float = PEAK) -> float:
    return psnr_from_mse(mse(f, f0), peak)


def chain_mse_bound(pairwise: list) -> float:
    """Upper bound on MSE(f0, fk) from the per-hop aggregates.

    A single hop is exact; each additional hop folds in as
    bound = 2 * (bound_so_far + next_hop).
    """
    if not pairwise:
        raise NegativeInput("empty MSE chain")
    for value in pairwise:
        if value < 0:
            raise NegativeInput(f"negative MSE {value}")
    bound = float(pairwise[0])
    for hop in pairwise[1:]:
        bound = 2.0 * (bound + float(hop))
    return bound


@dataclass
class QualityRecord:
    """Per-view quality metadata; recomputable without pixel access."""
    resample_mse_chain: list = field(default_factory=list)
    est_compression_psnr: float = INF_DB
    sampled_exact: float | None = None
    peak: float = PEAK

    def resample_bound_mse(self) -> float:
        if not self.resample_mse_chain:
            return 0.0
        return chain_mse_bound(self.resample_mse_chain)

    def combined_psnr(self) -> float:
        # error sources combine at the MSE level
        total = self.resample_bound_mse() + mse_from_psnr(self.est_compression_psnr, self.peak)
        return psnr_from_mse(total, self.peak)

    def extended(self, hop_mse: float, est_compression_psnr: float | None = None) -> "QualityRecord":
        """Record for a view derived from this one by one more resample hop."""
        chain = list(self.resample_mse_chain)
        if hop_mse > 0 or chain:
            chain.append(float(hop_mse))
        est = self.est_compression_psnr if est_compression_psnr is None else est_compression_psnr
        return QualityRecord(chain, est, None, self.peak)

    def to_json(self) -> dict:
        return {
            "resample_mse_chain": self.resample_mse_chain,
            "est_compression_psnr": "inf" if math.isinf(self.est_compression_psnr)
                                    else self.est_compression_psnr,
            "sampled_exact": self.sampled_exact,
        }

    @classmethod
    def from_json(cls, data: dict) -> "QualityRecord":
        est = data.get("est_compression_psnr", "inf")
        return cls(list(data.get("resample_mse_chain", [])),
                   INF_DB if est == "inf" else float(est),
                   data.get("sampled_exact"))


def estimate_u(record: QualityRecord, cutoff_db: float = 40.0) -> tuple[float, bool]:
    """Expected quality (dB) of using a view, and whether it clears the cutoff."""
    quality = record.combined_psnr()
    return quality, quality >= cutoff_db


class CompressionCurve:
    """Monotone non-decreasing MBPP -> PSNR lookup with sampled refinement.

    Breakpoints are (mbpp, dB) pairs sorted by mbpp.  Queries interpolate
    linearly and clamp at the ends.  A sampled exact PSNR blends into the
    nearest breakpoint with exponential weighting; monotonicity is repaired
    after every update.
    """

    def __init__(self, breakpoints: list | None = None, blend_weight: float = 0.25):
        self.blend_weight = blend_weight
        self.points = sorted(breakpoints or [], key=lambda p: p[0])

    def seed(self, pairs: list) -> None:
        self.points = sorted(((float(m), float(d)) for m, d in pairs), key=lambda p: p[0])
        self._repair()

    def estimate(self, mbpp: float) -> float:
        if mbpp <= 0:
            raise NegativeInput(f"mbpp must be positive, got {mbpp}")
        if not self.points:
            return INF_DB
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        if mbpp <= xs[0]:
            return ys[0]
        if mbpp >= xs[-1]:
            return ys[-1]
        return float(np.interp(mbpp, xs, ys))

    def update(self, mbpp: float, sampled_psnr: float, weight: float | None = None) -> float:
        """Blend an exact sampled PSNR into the curve; returns the new estimate."""
        w = self.blend_weight if weight is None else weight
        if not self.points:
            self.points = [(mbpp, sampled_psnr)]
            return sampled_psnr
        idx = min(range(len(self.points)), key=lambda i: abs(self.points[i][0] - mbpp))
        x, y = self.points[idx]
        self.points[idx] = (x, (1.0 - w) * y + w * sampled_psnr)
        self._repair()
        return self.estimate(mbpp)

    def _repair(self) -> None:
        # enforce non-decreasing dB in mbpp by forward max
        best = -math.inf
        fixed = []
        for x, y in self.points:
            best = max(best, y)
            fixed.append((x, best))
        self.points = fixed

    def to_json(self) -> list:
        return [[x, y] for x, y in self.points]

    @classmethod
    def from_json(cls, data: list) -> "CompressionCurve":
        return cls([(float(x), float(y)) for x, y in data])
