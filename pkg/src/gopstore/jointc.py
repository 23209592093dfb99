"""Joint compression of overlapping GOP pairs.

Two overlapping GOPs are stored as three separately encoded regions (left,
shared overlap, right) plus the homography that registers the right frames
into the left frame space.  Near-identical pairs collapse to a pointer for
the right GOP.  Candidate pairs come from incremental histogram clustering
followed by feature-fingerprint matching, so only a small fraction of all
pairs is ever evaluated.

Joint pair container (bit-exact): magic ``VSSJ``, variant u8 (0=regions,
1=duplicate), H as 9 f64 LE, merge kind u8, then either three embedded
encoded-GOP blocks (u32 LE length prefixed) or a u16 LE length-prefixed
pointer path string.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import codec as refcodec
from . import features
from .config import StoreConfig
from .errors import CorruptPair, LengthMismatch
from .quality import psnr
from .warp import Homography, estimate_homography, transform

MAGIC = b"VSSJ"
VARIANT_REGIONS = 0
VARIANT_DUPLICATE = 1
MERGE_UNPROJECTED = "unprojected"
MERGE_MEAN = "mean"
_MERGE_IDS = {MERGE_UNPROJECTED: 0, MERGE_MEAN: 1}
_MERGE_NAMES = {v: k for k, v in _MERGE_IDS.items()}


@dataclass
class JointGopPair:
    variant: int
    h: Homography
    merge: str
    left_gop: refcodec.EncodedGop | None = None
    overlap_gop: refcodec.EncodedGop | None = None
    right_gop: refcodec.EncodedGop | None = None
    pointer: str = ""            # duplicate variant: path of the left GOP
    left_width: int = 0
    right_width: int = 0
    x_f: int = 0                 # overlap start column in the left frame
    x_g: int = 0                 # overlap end column in the right frame
    min_quality_db: float = float("inf")  # recorded reconstruction gate

    @property
    def nbytes(self) -> int:
        return len(self.to_bytes())

    @property
    def right_payload_bytes(self) -> int:
        """Pixel payload attributable to the right GOP (0 for duplicates)."""
        if self.variant == VARIANT_DUPLICATE:
            return 0
        return self.right_gop.nbytes

    def to_bytes(self) -> bytes:
        head = MAGIC + struct.pack("<B", self.variant)
        head += struct.pack("<9d", *self.h.matrix.ravel())
        head += struct.pack("<B", _MERGE_IDS[self.merge])
        if self.variant == VARIANT_DUPLICATE:
            encoded = self.pointer.encode("utf-8")
            return head + struct.pack("<H", len(encoded)) + encoded
        blocks = b""
        for gop in (self.left_gop, self.overlap_gop, self.right_gop):
            blob = gop.to_bytes()
            blocks += struct.pack("<I", len(blob)) + blob
        return head + blocks

    @classmethod
    def from_bytes(cls, blob: bytes) -> "JointGopPair":
        if blob[:4] != MAGIC:
            raise CorruptPair("bad joint pair magic")
        variant = blob[4]
        matrix = np.array(struct.unpack_from("<9d", blob, 5)).reshape(3, 3)
        merge = _MERGE_NAMES[blob[5 + 72]]
        offset = 5 + 72 + 1
        h = Homography(matrix)
        if variant == VARIANT_DUPLICATE:
            (length,) = struct.unpack_from("<H", blob, offset)
            pointer = blob[offset + 2:offset + 2 + length].decode("utf-8")
            return cls(variant, h, merge, pointer=pointer)
        gops = []
        for _ in range(3):
            (length,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            gops.append(refcodec.EncodedGop.from_bytes(blob[offset:offset + length]))
            offset += length
        left, overlap, right = gops
        x_f = left.width
        n_left = left.width + overlap.width
        # overlap end column in the right frame follows from H and the widths
        x_g = int(round(h.apply(np.array([[float(n_left), 0.0]]))[0, 0]))
        pair = cls(variant, h, merge, left, overlap, right,
                   left_width=n_left, right_width=x_g + right.width,
                   x_f=x_f, x_g=x_g)
        return pair

    def save(self, path: str | Path) -> int:
        blob = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(blob)
        return len(blob)

    @classmethod
    def load(cls, path: str | Path) -> "JointGopPair":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def overlap_columns(h: Homography, n_left: int, n_right: int) -> tuple | None:
    """(x_f, x_g): overlap start column in the left frame and overlap end
    column in the right frame.  None when the geometry gives no usable
    overlap."""
    x_f = h.inverse().apply(np.array([[0.0, 0.0]]))[0, 0]
    x_g = h.apply(np.array([[float(n_left), 0.0]]))[0, 0]
    x_f = int(round(x_f))
    x_g = int(round(x_g))
    if not 0 < x_f < n_left or not 0 < x_g <= n_right:
        return None
    return x_f, x_g


def partition(f: np.ndarray, g: np.ndarray, h: Homography,
              merge: str = MERGE_UNPROJECTED) -> tuple | None:
    """Split a frame pair into (left, overlap, right) regions, or None.

    ``overlap`` lives in the left frame's coordinate space starting at
    column x_f; the right frame is registered into that space before the
    merge function combines the two.
    """
    cols = overlap_columns(h, f.shape[1], g.shape[1])
    if cols is None:
        return None
    x_f, x_g = cols
    left = f[:, :x_f]
    right = g[:, x_g:]
    if merge == MERGE_UNPROJECTED:
        overlap = f[:, x_f:].copy()
    elif merge == MERGE_MEAN:
        warped = transform(g, h, out_height=f.shape[0],
                           out_width=f.shape[1] - x_f, x_offset=x_f)
        mask_src = np.full(g.shape[:2], 255, dtype=np.uint8)
        mask = transform(mask_src, h, out_height=f.shape[0],
                         out_width=f.shape[1] - x_f, x_offset=x_f) > 127
        if warped.ndim == 3:
            mask = mask[..., None] & np.ones_like(warped, dtype=bool)
        own = f[:, x_f:].astype(np.uint16)
        overlap = own.copy()
        overlap[mask] = (own[mask] + warped.astype(np.uint16)[mask] + 1) // 2
        overlap = overlap.astype(np.uint8)
    else:
        raise ValueError(f"unknown merge function {merge!r}")
    return left, overlap, right, x_f, x_g


def _reconstruct_pixels(left: np.ndarray, overlap: np.ndarray,
                        right: np.ndarray, h: Homography, x_f: int, x_g: int,
                        side: str) -> np.ndarray:
    if side == "left":
        return np.concatenate([left, overlap], axis=1)
    warped_back = transform(overlap, h.inverse(), out_height=overlap.shape[0],
                            out_width=x_g, src_x_offset=x_f)
    return np.concatenate([warped_back, right], axis=1)


def joint_compress(frames_f: np.ndarray, frames_g: np.ndarray,
                   merge: str = MERGE_UNPROJECTED,
                   config: StoreConfig | None = None,
                   codec: str = refcodec.CODEC_DELTA, q: int = 0,
                   _swapped: bool = False) -> JointGopPair | None:
    """Jointly compress two equal-length GOPs, or None when not worthwhile.

    Follows the admission protocol: estimate the homography from the first
    frame pair, swap operands if the overlap runs the other way, collapse
    near-identity pairs to a duplicate pointer, and gate every frame on
    reconstruction quality with a single re-estimation before aborting.
    Static content reuses the homography for the whole GOP.
    """
    cfg = config or StoreConfig()
    if len(frames_f) != len(frames_g):
        raise LengthMismatch(f"{len(frames_f)} vs {len(frames_g)} frames")
    if len(frames_f) == 0:
        return None
    frames_f = np.asarray(frames_f)
    frames_g = np.asarray(frames_g)

    h = estimate_homography(frames_f[0], frames_g[0],
                            cfg.match_d, cfg.lowe_ratio)
    if h is None:
        return None
    if h.deviation_from_identity() <= cfg.dup_epsilon:
        pair = JointGopPair(VARIANT_DUPLICATE, Homography.identity(), merge)
        pair.min_quality_db = psnr(frames_g, frames_f)
        if pair.min_quality_db < cfg.jointc_gate_db:
            return None
        return pair
    if overlap_columns(h, frames_f.shape[2], frames_g.shape[2]) is None and not _swapped:
        # overlap runs right-to-left: reverse the transform direction
        return joint_compress(frames_g, frames_f, merge, cfg, codec, q,
                              _swapped=True)

    for attempt in range(2):
        regions = _compress_with_h(frames_f, frames_g, h, merge, cfg)
        if regions is not None:
            lefts, overlaps, rights, x_f, x_g, worst = regions
            pair = JointGopPair(
                VARIANT_REGIONS, h, merge,
                refcodec.encode_gop(np.stack(lefts), codec, q),
                refcodec.encode_gop(np.stack(overlaps), codec, q),
                refcodec.encode_gop(np.stack(rights), codec, q),
                left_width=frames_f.shape[2], right_width=frames_g.shape[2],
                x_f=x_f, x_g=x_g, min_quality_db=worst)
            return pair
        if attempt == 0:
            # quality gate tripped: re-estimate once from the failing content
            h = estimate_homography(frames_f[0], frames_g[0],
                                    cfg.match_d, cfg.lowe_ratio,
                                    ransac_iters=600, inlier_tol=1.0)
            if h is None:
                return None
    return None


def _compress_with_h(frames_f, frames_g, h, merge, cfg):
    lefts, overlaps, rights = [], [], []
    x_f = x_g = None
    worst = float("inf")
    for f, g in zip(frames_f, frames_g):
        parts = partition(f, g, h, merge)
        if parts is None:
            return None
        left, overlap, right, x_f, x_g = parts
        left_recon = _reconstruct_pixels(left, overlap, right, h, x_f, x_g, "left")
        right_recon = _reconstruct_pixels(left, overlap, right, h, x_f, x_g, "right")
        quality = min(psnr(left_recon, f), psnr(right_recon, g))
        if quality < cfg.jointc_gate_db:
            return None
        worst = min(worst, quality)
        lefts.append(left)
        overlaps.append(overlap)
        rights.append(right)
    return lefts, overlaps, rights, x_f, x_g, worst


def reconstruct(pair: JointGopPair, side: str,
                duplicate_frames: np.ndarray | None = None) -> np.ndarray:
    """Recover one side's frames from a joint pair.

    For the duplicate variant the caller supplies the left GOP's decoded
    frames (the pointer target); both sides resolve to them.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if pair.variant == VARIANT_DUPLICATE:
        if duplicate_frames is None:
            raise CorruptPair("duplicate pair needs the pointer target's frames")
        return np.asarray(duplicate_frames)
    lefts = refcodec.decode_all(pair.left_gop)
    overlaps = refcodec.decode_all(pair.overlap_gop)
    rights = refcodec.decode_all(pair.right_gop)
    out = []
    for left, overlap, right in zip(lefts, overlaps, rights):
        out.append(_reconstruct_pixels(left, overlap, right, pair.h,
                                       pair.x_f, pair.x_g, side))
    return np.stack(out)


def upscale(frames: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear upscale of a frame stack (mixed-resolution pairs upscale the
    smaller side before estimation)."""
    scale_x = frames.shape[2] / width
    scale_y = frames.shape[1] / height
    h = Homography(np.diag([scale_x, scale_y, 1.0]))
    return np.stack([transform(f, h, out_height=height, out_width=width)
                     for f in frames])


# -- candidate selection ----------------------------------------------------

def histogram_fingerprint(frames: np.ndarray, bins: int = 32) -> np.ndarray:
    """L1-normalized per-channel color histogram of a GOP's first frame."""
    frame = np.asarray(frames[0] if frames.ndim == 4 else frames)
    if frame.ndim == 2:
        frame = frame[..., None]
    hists = [np.histogram(frame[..., c], bins=bins, range=(0, 256))[0]
             for c in range(frame.shape[-1])]
    fp = np.concatenate(hists).astype(np.float64)
    total = fp.sum()
    return fp / total if total else fp


def select_candidates(gop_frames: list, config: StoreConfig | None = None,
                      max_corners: int = 150) -> tuple[list, int]:
    """Find likely-overlapping GOP pairs without evaluating all pairs.

    GOP fingerprints are clustered incrementally on their color histograms
    (CF-tree); clusters are visited smallest-radius first and, within one,
    pairs with at least ``match_min`` unambiguous feature matches become
    candidates.  Evaluation stops at a fixed fraction of the all-pairs
    count.  Returns (candidate index pairs, pairs evaluated).
    """
    from sklearn.cluster import Birch

    cfg = config or StoreConfig()
    n = len(gop_frames)
    if n < 2:
        return [], 0
    fingerprints = np.stack([histogram_fingerprint(np.asarray(f))
                             for f in gop_frames])
    birch = Birch(threshold=cfg.birch_threshold, n_clusters=None)
    labels = birch.fit_predict(fingerprints)

    clusters: dict[int, list] = {}
    for idx, label in enumerate(labels):
        clusters.setdefault(int(label), []).append(idx)

    def radius(members):
        pts = fingerprints[members]
        centroid = pts.mean(axis=0)
        return float(np.sqrt(((pts - centroid) ** 2).sum(axis=1)).max())

    ordered = sorted((radius(m), label) for label, m in clusters.items()
                     if len(m) >= 2)
    budget = max(1, int(cfg.selection_budget_fraction * n * (n - 1) / 2))
    keypoints: dict[int, features.Keypoints] = {}

    def kp(idx):
        if idx not in keypoints:
            frames = np.asarray(gop_frames[idx])
            frame = frames[0] if frames.ndim == 4 else frames
            keypoints[idx] = features.extract(frame, max_corners)
        return keypoints[idx]

    candidates = []
    evaluated = 0
    for _, label in ordered:
        members = clusters[label]
        # closest fingerprints first: near-duplicates surface before the
        # budget runs out even inside one big cluster
        pairs = sorted(
            ((float(np.linalg.norm(fingerprints[members[a]]
                                   - fingerprints[members[b]])),
              members[a], members[b])
             for a in range(len(members)) for b in range(a + 1, len(members))))
        for _, i, j in pairs:
            if evaluated >= budget:
                return candidates, evaluated
            evaluated += 1
            matches = features.match(kp(i), kp(j), cfg.match_d,
                                     cfg.lowe_ratio)
            if len(matches) >= cfg.match_min:
                candidates.append((i, j))
    return candidates, evaluated
