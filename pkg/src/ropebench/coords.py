"""Shared world<->pixel coordinate mapping.

World coordinates are (x, y) points in the unit square; images are indexed
(row, col) with row 0 at y=0.  Every module uses these helpers, so rendered
pixels, keypoints, and stored actions stay aligned bit-for-bit.
"""

import numpy as np


def world_to_pixel(points, h, w):
    """Map world (x, y) points to integer (row, col) pixels.

    row = floor(y*h), col = floor(x*w), clamped to the image bounds.
    Accepts a single point or an (N, 2) array; always returns (N, 2).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    rows = np.clip(np.floor(pts[:, 1] * h).astype(np.int64), 0, h - 1)
    cols = np.clip(np.floor(pts[:, 0] * w).astype(np.int64), 0, w - 1)
    return np.stack([rows, cols], axis=1)


def pixel_to_world(pixels, h, w):
    """Map (row, col) pixels to the world (x, y) coordinates of their centers."""
    px = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    x = (px[:, 1] + 0.5) / w
    y = (px[:, 0] + 0.5) / h
    return np.stack([x, y], axis=1)


def pixel_space(points, h, w):
    """Continuous pixel-space (row, col) coordinates of world points, no rounding."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return np.stack([pts[:, 1] * h, pts[:, 0] * w], axis=1)


def image_diagonal(h, w):
    return float(np.hypot(h, w))
