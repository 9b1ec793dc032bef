"""Keypoint extraction and graph construction from rope images.

Keypoints are pixel coordinates chosen deterministically by farthest-point
sampling over the foreground, or subsampled directly from simulator unit
positions.  A set of keypoints becomes a sparse graph (each vertex linked to
its two nearest peers, symmetrized, with self-loops) and a Gaussian mask
image concentrating attention around the keypoints.
"""

from dataclasses import dataclass

import numpy as np

from .coords import world_to_pixel
from .errors import DegenerateGraph, InsufficientForeground, InsufficientUnits


@dataclass(frozen=True)
class RepGraph:
    """Vertex features (K, 2) of normalized (row, col) in [0, 1] and a binary
    symmetric (K, K) adjacency with unit diagonal."""

    vertex_features: np.ndarray
    adjacency: np.ndarray


def extract_keypoints(image, k, intensity_threshold=0.5):
    """Select k foreground pixels by farthest-point sampling.

    The first point is the lexicographically smallest foreground (row, col);
    each next point maximizes the minimum distance to those already chosen,
    ties resolved lexicographically.  Returns (k, 2) int64 pixel coordinates.
    """
    foreground = np.argwhere(image > intensity_threshold)  # row-major: lexicographic
    if len(foreground) < k:
        raise InsufficientForeground(
            f"need {k} pixels above {intensity_threshold}, found {len(foreground)}"
        )
    pts = foreground.astype(np.float64)
    chosen = np.empty((k, 2), dtype=np.int64)
    chosen[0] = foreground[0]
    min_d2 = np.sum((pts - pts[0]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(min_d2))  # first max = lexicographically smallest tie
        chosen[i] = foreground[nxt]
        min_d2 = np.minimum(min_d2, np.sum((pts - pts[nxt]) ** 2, axis=1))
    return chosen


def keypoints_from_state(state, k, h, w):
    """Subsample k units at uniform index spacing and map them to pixels."""
    n = state.n_units
    if n < k:
        raise InsufficientUnits(f"need at least {k} units, got {n}")
    idx = np.floor(np.arange(k) * n / k + 0.5).astype(np.int64)
    return world_to_pixel(state.units[idx], h, w)


def align_keypoints(reference, other):
    """Reorder `other` so entry i is the unmatched point nearest reference i.

    Greedy in reference order with ties to the lower index; the result is a
    permutation of `other`.  Gives two keypoint sets from related images a
    shared node order.
    """
    reference = np.asarray(reference, dtype=np.float64)
    other = np.asarray(other)
    if reference.shape != other.shape:
        raise InsufficientUnits(
            f"cannot align {len(other)} keypoints to {len(reference)} references"
        )
    d2 = np.sum((reference[:, None, :] - other[None, :, :].astype(np.float64)) ** 2, axis=2)
    taken = np.zeros(len(other), dtype=bool)
    order = np.empty(len(other), dtype=np.int64)
    for i in range(len(reference)):
        row = np.where(taken, np.inf, d2[i])
        j = int(np.argmin(row))
        order[i] = j
        taken[j] = True
    return other[order]


def build_graph(kps, h, w):
    """Graph over keypoints: features are coordinates normalized by the image
    size; each vertex is joined to its two nearest others (ties to the lower
    index), edges symmetrized, self-loops on."""
    kps = np.asarray(kps)
    k = len(kps)
    if k < 3:
        raise DegenerateGraph(f"need at least 3 keypoints, got {k}")
    features = kps.astype(np.float64) / np.array([h, w], dtype=np.float64)
    diff = kps[:, None, :].astype(np.float64) - kps[None, :, :].astype(np.float64)
    d2 = np.einsum("ijc,ijc->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    adjacency = np.zeros((k, k), dtype=np.int64)
    rows = np.arange(k)
    adjacency[rows, order[:, 0]] = 1
    adjacency[rows, order[:, 1]] = 1
    adjacency = adjacency | adjacency.T
    np.fill_diagonal(adjacency, 1)
    return RepGraph(features, adjacency)


def gaussian_mask(kps, sigma, h, w):
    """Pixel map in [0, 1]: at each pixel the max over keypoints of a unit
    Gaussian in distance to that keypoint."""
    kps = np.asarray(kps, dtype=np.float64)
    rr = np.arange(h, dtype=np.float64)[:, None]
    cc = np.arange(w, dtype=np.float64)[None, :]
    mask = np.zeros((h, w), dtype=np.float64)
    for kr, kc in kps:
        d2 = (rr - kr) ** 2 + (cc - kc) ** 2
        np.maximum(mask, np.exp(-d2 / (2.0 * sigma * sigma)), out=mask)
    return mask
