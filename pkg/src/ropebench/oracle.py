"""Scripted demonstration policy for rope rearranging.

Current and goal unit positions are aligned by searching a small family of
index correspondences (cyclic shifts for rings, identity or reversal for
chains) for the one with minimum mean squared distance.  The demonstrated
action then picks the worst-matched unit at its current position and places
it at its goal position.  The same alignment defines the completion distance
used to decide when a task is solved.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .sim import Topology


@dataclass(frozen=True)
class Correspondence:
    """Index remap aligning current to goal units, with its alignment error.

    `remap[j]` is the current-state index matched to goal index j; `mse` is
    the mean squared Euclidean distance under that matching.
    """

    remap: np.ndarray
    mse: float


def _check_inputs(p_current, p_goal):
    p_current = np.asarray(p_current, dtype=np.float64)
    p_goal = np.asarray(p_goal, dtype=np.float64)
    if p_current.shape != p_goal.shape or p_current.ndim != 2 or p_current.shape[1] != 2:
        raise ShapeMismatch(
            f"expected matching (N, 2) position arrays, got {p_current.shape} and {p_goal.shape}"
        )
    return p_current, p_goal


def _candidate_remaps(n, topology, include_reversals):
    """Rows are candidate remaps, in tie-break order: for rings the cyclic
    shifts 0..N-1 (then reversed traversals if enabled); for chains identity
    then reversal."""
    idx = np.arange(n)
    if topology is Topology.RING:
        shifts = (idx[:, None] + idx[None, :]) % n
        if include_reversals:
            return np.vstack([shifts, (idx[:, None] - idx[None, :]) % n])
        return shifts
    return np.vstack([idx, idx[::-1]])


def best_correspondence(p_current, p_goal, topology, include_reversals=False):
    """Minimum mean-squared-distance correspondence over the allowed family.

    Ties go to the earliest candidate: lowest shift for rings, identity
    before reversal for chains.  `include_reversals` widens the ring family
    to reversed traversals as well.
    """
    p_current, p_goal = _check_inputs(p_current, p_goal)
    remaps = _candidate_remaps(len(p_current), topology, include_reversals)
    diffs = p_current[remaps] - p_goal[None, :, :]
    mses = np.einsum("mjc,mjc->m", diffs, diffs) / len(p_goal)
    best = int(np.argmin(mses))
    return Correspondence(remaps[best], float(mses[best]))


def oracle_action(p_current, p_goal, topology, include_reversals=False):
    """One greedy demonstration step: (pick point, place point) in world
    coordinates.

    Under the best correspondence, the unit with the largest squared distance
    to its goal is picked at its current position and placed at its goal
    position.  Ties go to the lowest goal index.  Callers should stop when
    the completion distance is already below their threshold; on identical
    inputs this degenerates to pick equal to place.
    """
    p_current, p_goal = _check_inputs(p_current, p_goal)
    corr = best_correspondence(p_current, p_goal, topology, include_reversals)
    diffs = p_current[corr.remap] - p_goal
    j = int(np.argmax(np.einsum("jc,jc->j", diffs, diffs)))
    return p_current[corr.remap[j]].copy(), p_goal[j].copy()


def completion_distance(p_current, p_goal, topology, include_reversals=False):
    """Mean Euclidean unit-to-goal distance under the best correspondence,
    in world units."""
    p_current, p_goal = _check_inputs(p_current, p_goal)
    corr = best_correspondence(p_current, p_goal, topology, include_reversals)
    return float(np.linalg.norm(p_current[corr.remap] - p_goal, axis=1).mean())


def completion_distance_pixels(p_current, p_goal, topology, h, w, include_reversals=False):
    """Completion distance measured in continuous pixel space (x scaled by
    image width, y by height)."""
    p_current, p_goal = _check_inputs(p_current, p_goal)
    scale = np.array([w, h], dtype=np.float64)
    return completion_distance(p_current * scale, p_goal * scale, topology, include_reversals)
