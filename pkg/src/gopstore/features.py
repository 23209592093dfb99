"""Corner keypoints, patch descriptors, and ratio-test matching.

The detector is Harris corners over a smoothed gradient tensor; each
keypoint carries a zero-mean 16x16 intensity patch flattened to a 256-dim
descriptor.  Matching accepts the nearest neighbour when it is both within
an absolute distance ceiling and unambiguous under Lowe's ratio test.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PATCH = 16
_HALF = PATCH // 2


def to_gray(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3:
        return frame @ np.array([0.299, 0.587, 0.114])
    return frame


def _box_blur(img: np.ndarray, radius: int = 2) -> np.ndarray:
    size = 2 * radius + 1
    kernel = np.ones(size) / size
    out = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="same"), 1, img)
    return np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="same"), 0, out)


def harris_response(gray: np.ndarray, k: float = 0.05) -> np.ndarray:
    gy, gx = np.gradient(gray)
    sxx = _box_blur(gx * gx)
    syy = _box_blur(gy * gy)
    sxy = _box_blur(gx * gy)
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - k * trace * trace


def detect_corners(gray: np.ndarray, max_corners: int = 200,
                   min_distance: int = 8) -> np.ndarray:
    """Corner locations as (x, y) pairs, strongest first."""
    response = harris_response(gray)
    margin = _HALF + 1
    response[:margin] = response[-margin:] = -np.inf
    response[:, :margin] = response[:, -margin:] = -np.inf
    order = np.argsort(response, axis=None)[::-1]
    height, width = gray.shape
    taken = np.zeros_like(gray, dtype=bool)
    corners = []
    for flat in order:
        y, x = divmod(int(flat), width)
        if not np.isfinite(response[y, x]) or response[y, x] <= 0:
            break
        if taken[y, x]:
            continue
        corners.append((x, y))
        if len(corners) >= max_corners:
            break
        y0, y1 = max(0, y - min_distance), min(height, y + min_distance + 1)
        x0, x1 = max(0, x - min_distance), min(width, x + min_distance + 1)
        taken[y0:y1, x0:x1] = True
    return np.array(corners, dtype=np.float64).reshape(-1, 2)


def describe(gray: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Zero-mean 16x16 intensity patches, one 256-dim row per corner."""
    descriptors = np.empty((len(corners), PATCH * PATCH))
    for i, (x, y) in enumerate(corners):
        xi, yi = int(round(x)), int(round(y))
        patch = gray[yi - _HALF:yi + _HALF, xi - _HALF:xi + _HALF]
        descriptors[i] = (patch - patch.mean()).ravel()
    return descriptors


@dataclass
class Keypoints:
    xy: np.ndarray          # (n, 2) corner coordinates
    descriptors: np.ndarray  # (n, 256)


def extract(frame: np.ndarray, max_corners: int = 200) -> Keypoints:
    gray = to_gray(frame)
    corners = detect_corners(gray, max_corners)
    return Keypoints(corners, describe(gray, corners))


def match(a: Keypoints, b: Keypoints, max_distance: float = 400.0,
          lowe_ratio: float = 0.75) -> list:
    """Unambiguous nearest-neighbour matches as (index_a, index_b, distance)."""
    if len(a.xy) == 0 or len(b.xy) == 0:
        return []
    # pairwise Euclidean distances between descriptor rows
    aa = np.sum(a.descriptors ** 2, axis=1)[:, None]
    bb = np.sum(b.descriptors ** 2, axis=1)[None, :]
    d2 = np.maximum(aa + bb - 2.0 * (a.descriptors @ b.descriptors.T), 0.0)
    dist = np.sqrt(d2)
    matches = []
    for i in range(len(a.xy)):
        row = dist[i]
        if len(row) < 2:
            j = int(np.argmin(row))
            if row[j] <= max_distance:
                matches.append((i, j, float(row[j])))
            continue
        j, j2 = np.argpartition(row, 1)[:2]
        if row[j] > row[j2]:
            j, j2 = j2, j
        best, second = row[j], row[j2]
        if best > max_distance:
            continue
        if second > 0 and best / second > lowe_ratio:
            continue  # ambiguous correspondence
        matches.append((i, int(j), float(best)))
    return matches
