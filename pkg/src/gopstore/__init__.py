"""Granular video storage: GOP-level files, planned reads, budgeted caching."""

from .alpha import AlphaTable, calibrate
from .cache import CacheManager
from .catalog import (Catalog, GopEntry, LogicalVideo, PhysicalConfig,
                      PhysicalVideo, SpatialConfig)
from .codec import (CODEC_DELTA, CODEC_INTRA, CODEC_LOSSLESS, EncodedGop,
                    decode_all, decode_from, encode_gop)
from .config import StoreConfig
from .errors import (BudgetUnsatisfiable, CorruptGop, CorruptPair,
                     DimensionMismatch, DuplicateName, EmptyInput,
                     FormatMismatch, NoQualifyingCover, OutOfRange,
                     StoreError, UnknownVideo)
from .jointc import JointGopPair, joint_compress, reconstruct, select_candidates
from .planner import Plan, ReadRequest, plan_exact, plan_greedy
from .quality import CompressionCurve, QualityRecord, mse, psnr
from .store import ReadResult, VideoStore
from .warp import Homography, estimate_homography, transform

__version__ = "0.1.0"

__all__ = [
    "AlphaTable", "BudgetUnsatisfiable", "CODEC_DELTA", "CODEC_INTRA",
    "CODEC_LOSSLESS", "CacheManager", "Catalog", "CompressionCurve",
    "CorruptGop", "CorruptPair", "DimensionMismatch", "DuplicateName",
    "EmptyInput", "EncodedGop", "FormatMismatch", "GopEntry", "Homography",
    "JointGopPair", "LogicalVideo", "NoQualifyingCover", "OutOfRange",
    "PhysicalConfig", "PhysicalVideo", "Plan", "QualityRecord", "ReadRequest",
    "ReadResult", "SpatialConfig", "StoreConfig", "StoreError", "UnknownVideo",
    "VideoStore", "calibrate", "decode_all", "decode_from", "encode_gop",
    "estimate_homography", "joint_compress", "mse", "plan_exact",
    "plan_greedy", "psnr", "reconstruct", "select_candidates", "transform",
]
