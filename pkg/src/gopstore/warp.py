"""Projective transforms: homography fitting and inverse-mapped bilinear warps.

Convention: a homography ``H`` maps left-frame (destination) coordinates to
right-frame (source) coordinates, column-major points ``[x, y, 1]``.  The
warp samples the source at ``H @ [x, y, 1]`` for every destination pixel,
so ``transform(g, H)`` renders ``g`` registered into the left frame's space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import features
from .errors import DimensionMismatch

MIN_DET = 1e-9


@dataclass
class Homography:
    matrix: np.ndarray  # 3x3, normalized so H[2, 2] == 1

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise DimensionMismatch(f"homography must be 3x3, got {m.shape}")
        if abs(np.linalg.det(m)) <= MIN_DET:
            raise DimensionMismatch("degenerate homography")
        self.matrix = m / m[2, 2]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (n, 2) points through the homography."""
        pts = np.asarray(points, dtype=np.float64)
        ones = np.ones((len(pts), 1))
        mapped = (self.matrix @ np.hstack([pts, ones]).T).T
        return mapped[:, :2] / mapped[:, 2:3]

    def deviation_from_identity(self) -> float:
        return float(np.linalg.norm(self.matrix - np.eye(3), 2))

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float = 0.0) -> "Homography":
        m = np.eye(3)
        m[0, 2] = dx
        m[1, 2] = dy
        return cls(m)


def transform(src: np.ndarray, h: Homography, out_height: int | None = None,
              out_width: int | None = None, x_offset: float = 0.0,
              src_x_offset: float = 0.0) -> np.ndarray:
    """Inverse-mapped bilinear warp of ``src`` into destination space.

    Destination pixel (x + x_offset, y) samples ``src`` at the homogeneous
    image of that point; ``src_x_offset`` shifts the sample when ``src`` is
    a crop whose first column sits at that x in source space.  Out-of-bounds
    samples keep the fill value 0.
    """
    src = np.asarray(src)
    height = out_height if out_height is not None else src.shape[0]
    width = out_width if out_width is not None else src.shape[1]
    ys, xs = np.mgrid[0:height, 0:width]
    pts = np.stack([xs.ravel() + x_offset, ys.ravel(), np.ones(xs.size)])
    mapped = h.matrix @ pts
    mx = mapped[0] / mapped[2] - src_x_offset
    my = mapped[1] / mapped[2]

    sh, sw = src.shape[:2]
    # tolerate float drift at the frame edges, then clamp the sample cell
    # so boundary samples (fractional part 0) stay in range
    eps = 1e-6
    valid = (mx >= -eps) & (mx <= sw - 1 + eps) & (my >= -eps) & (my <= sh - 1 + eps)
    mx = np.clip(mx, 0.0, float(sw - 1))
    my = np.clip(my, 0.0, float(sh - 1))
    x0 = np.clip(np.floor(mx).astype(np.int64), 0, max(sw - 2, 0))
    y0 = np.clip(np.floor(my).astype(np.int64), 0, max(sh - 2, 0))
    fx = mx - x0
    fy = my - y0

    flat_src = src.reshape(sh, sw, -1).astype(np.float64)
    out = np.zeros((height * width, flat_src.shape[2]))
    xv, yv = x0[valid], y0[valid]
    fxv = fx[valid][:, None]
    fyv = fy[valid][:, None]
    p00 = flat_src[yv, xv]
    p01 = flat_src[yv, xv + 1]
    p10 = flat_src[yv + 1, xv]
    p11 = flat_src[yv + 1, xv + 1]
    out[valid] = ((1 - fy[valid])[:, None] * ((1 - fxv) * p00 + fxv * p01)
                  + fy[valid][:, None] * ((1 - fxv) * p10 + fxv * p11))
    out = out.reshape(height, width, -1)
    if src.ndim == 2:
        out = out[..., 0]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def fit_homography(src_pts: np.ndarray, dst_pts: np.ndarray) -> Homography | None:
    """Normalized DLT fit mapping src_pts -> dst_pts (needs >= 4 pairs)."""
    src_pts = np.asarray(src_pts, dtype=np.float64)
    dst_pts = np.asarray(dst_pts, dtype=np.float64)
    if len(src_pts) < 4:
        return None

    def normalizer(pts):
        centroid = pts.mean(axis=0)
        dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
        if dist < 1e-12:
            return None
        scale = np.sqrt(2.0) / dist
        t = np.array([[scale, 0, -scale * centroid[0]],
                      [0, scale, -scale * centroid[1]],
                      [0, 0, 1]])
        return t

    ts, td = normalizer(src_pts), normalizer(dst_pts)
    if ts is None or td is None:
        return None
    ones = np.ones((len(src_pts), 1))
    sn = (ts @ np.hstack([src_pts, ones]).T).T
    dn = (td @ np.hstack([dst_pts, ones]).T).T

    rows = []
    for (sx, sy, _), (dx, dy, _) in zip(sn, dn):
        rows.append([0, 0, 0, -sx, -sy, -1, dy * sx, dy * sy, dy])
        rows.append([sx, sy, 1, 0, 0, 0, -dx * sx, -dx * sy, -dx])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    h = vt[-1].reshape(3, 3)
    try:
        return Homography(np.linalg.inv(td) @ h @ ts)
    except (DimensionMismatch, np.linalg.LinAlgError):
        return None


def estimate_homography(f: np.ndarray, g: np.ndarray,
                        max_distance: float = 400.0, lowe_ratio: float = 0.75,
                        ransac_iters: int = 300, inlier_tol: float = 2.0,
                        min_inliers: int = 4,
                        rng: np.random.Generator | None = None) -> Homography | None:
    """Estimate H mapping f-coordinates to g-coordinates, or None.

    Corner keypoints with patch descriptors are matched by ratio test, and
    H is fit by normalized DLT inside a RANSAC loop; absence of a consistent
    model is a value, not an error.
    """
    rng = rng or np.random.default_rng(0)
    kf = features.extract(f)
    kg = features.extract(g)
    matches = features.match(kf, kg, max_distance, lowe_ratio)
    if len(matches) < min_inliers:
        return None
    src = kf.xy[[m[0] for m in matches]]
    dst = kg.xy[[m[1] for m in matches]]

    best_inliers: np.ndarray | None = None
    for _ in range(ransac_iters):
        sample = rng.choice(len(src), 4, replace=False)
        model = fit_homography(src[sample], dst[sample])
        if model is None:
            continue
        err = np.sqrt(((model.apply(src) - dst) ** 2).sum(axis=1))
        inliers = err <= inlier_tol
        if best_inliers is None or inliers.sum() > best_inliers.sum():
            best_inliers = inliers
    if best_inliers is None or best_inliers.sum() < min_inliers:
        return None
    refined = fit_homography(src[best_inliers], dst[best_inliers])
    if refined is None:
        return None
    # tighten: refit on progressively stricter inlier sets
    for tol in (inlier_tol, inlier_tol / 2, inlier_tol / 4):
        err = np.sqrt(((refined.apply(src) - dst) ** 2).sum(axis=1))
        inliers = err <= tol
        if inliers.sum() < min_inliers:
            break
        again = fit_homography(src[inliers], dst[inliers])
        if again is None:
            break
        refined = again
    err = np.sqrt(((refined.apply(src) - dst) ** 2).sum(axis=1))
    if (err <= inlier_tol).sum() < min_inliers:
        return None
    return refined
