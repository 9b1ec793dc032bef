"""2D rope simulation: chains and rings of rigid units under pick-and-place.

The rope lives in the unit-square workspace and is discretized into N point
units joined by fixed-length links.  A pick-and-place action grabs the unit
nearest the pick point (within the grasp radius) and drags it to the place
point in small increments; after each increment the link-length constraints
are re-projected with the grasped unit held fixed, position-based-dynamics
style.  Everything is a pure function of its inputs, so repeated calls agree
bitwise.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidGeometry, OutOfWorkspace

# Relative link-length deviation tolerated after relaxation.
LINK_TOLERANCE = 1e-3

# Hard cap on extra projection sweeps used to polish the final state.
_MAX_POLISH_SWEEPS = 4000

# Over-relaxation factor for polish sweeps; 1 < omega < 2 keeps the iteration
# contractive while roughly tripling the convergence rate on long chains.
_POLISH_OMEGA = 1.5

# Inset from the workspace border used when sampling random place points.
SCRAMBLE_MARGIN = 0.1


class Topology(Enum):
    CHAIN = "chain"
    RING = "ring"


@dataclass(frozen=True)
class RopeState:
    """Ordered unit positions plus topology; treated as an immutable value."""

    topology: Topology
    units: np.ndarray  # (N, 2) world positions, columns (x, y)
    link_length: float

    @property
    def n_units(self):
        return len(self.units)

    def link_lengths(self):
        """Current length of every link (N-1 for chains, N for rings)."""
        d = np.linalg.norm(np.diff(self.units, axis=0), axis=1)
        if self.topology is Topology.RING:
            d = np.append(d, np.linalg.norm(self.units[0] - self.units[-1]))
        return d

    def max_link_deviation(self):
        """Largest |length - rest length| over all links, in world units."""
        return float(np.abs(self.link_lengths() - self.link_length).max())


@dataclass(frozen=True)
class SimConfig:
    grasp_radius: float = 0.04
    pbd_iterations: int = 40
    drag_substeps: int = 8
    render_thickness: int = 3
    image_h: int = 64
    image_w: int = 64


@dataclass(frozen=True)
class PickPlaceAction:
    """One manipulation primitive: grasp at `pick`, release at `place` (pixels)."""

    pick: tuple  # (row, col)
    place: tuple  # (row, col)


def init_state(topology, n_units, link_length, seed=0):
    """Canonical configuration: a centered horizontal line (chain) or a
    regular polygon with the given side length (ring).

    The layout is deterministic; `seed` is accepted for interface uniformity
    but does not influence the result.
    """
    del seed
    if n_units < 3:
        raise InvalidGeometry(f"need at least 3 units, got {n_units}")
    if link_length <= 0:
        raise InvalidGeometry("link_length must be positive")
    if topology is Topology.CHAIN:
        xs = 0.5 + (np.arange(n_units) - (n_units - 1) / 2.0) * link_length
        units = np.stack([xs, np.full(n_units, 0.5)], axis=1)
    elif topology is Topology.RING:
        radius = link_length / (2.0 * np.sin(np.pi / n_units))
        ang = 2.0 * np.pi * np.arange(n_units) / n_units
        units = np.stack([0.5 + radius * np.cos(ang), 0.5 + radius * np.sin(ang)], axis=1)
    else:
        raise InvalidGeometry(f"unknown topology {topology!r}")
    if units.min() < 0.0 or units.max() > 1.0:
        raise InvalidGeometry(
            f"{topology.value} of {n_units} units with link {link_length} does not fit the workspace"
        )
    return RopeState(topology, units, float(link_length))


def _link_pairs(n, topology):
    pairs = [(i, i + 1) for i in range(n - 1)]
    if topology is Topology.RING:
        pairs.append((n - 1, 0))
    return pairs


def _constraint_sets(n, topology):
    """Partition links into sets with no shared units, so each set can be
    projected in one vectorized pass while preserving Gauss-Seidel semantics."""
    pairs = _link_pairs(n, topology)
    even = [p for i, p in enumerate(pairs) if i % 2 == 0]
    odd = [p for i, p in enumerate(pairs) if i % 2 == 1]
    if topology is Topology.RING and n % 2 == 1:
        # Odd ring: the wrap link shares unit 0 with link 0; give it its own pass.
        even = even[:-1]
        blocks = [even, odd, [pairs[-1]]]
    else:
        blocks = [even, odd]
    return [np.array(b) for b in blocks if b]


def _compile_blocks(n, topology, fixed_index):
    """Turn the constraint sets into (a, b, wa, wb) tuples where wa/wb are the
    correction fractions each endpoint absorbs (a fixed unit absorbs none)."""
    inv_mass = np.ones(n)
    if fixed_index is not None:
        inv_mass[fixed_index] = 0.0
    blocks = []
    for pairs in _constraint_sets(n, topology):
        a = pairs[:, 0]
        b = pairs[:, 1]
        wa = inv_mass[a]
        wb = inv_mass[b]
        wsum = wa + wb
        blocks.append((a, b, (wa / wsum)[:, None], (wb / wsum)[:, None]))
    return blocks


def _sweep(units, blocks, link_length, omega):
    for a, b, wa, wb in blocks:
        delta = units[b] - units[a]
        dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        # Coincident units have no defined direction; push apart along +x.
        degenerate = dist < 1e-12
        if degenerate.any():
            delta[degenerate] = (1.0, 0.0)
            dist[degenerate] = 1.0
        corr = (omega * (dist - link_length) / dist)[:, None] * delta
        units[a] += wa * corr
        units[b] -= wb * corr
    np.clip(units, 0.0, 1.0, out=units)


def relax(units, topology, link_length, fixed_index=None, sweeps=40, tol=None, polish=True):
    """Project link-length constraints by alternating Gauss-Seidel sweeps.

    Runs `sweeps` sweeps; with polish=True it then keeps sweeping until the
    largest deviation is within `tol` (default LINK_TOLERANCE * link_length),
    up to a hard cap.  Polish sweeps over-relax the corrections, which speeds
    up convergence without changing the fixed point.  Positions are clamped
    to the workspace after every sweep.  Mutates and returns `units`.
    """
    n = len(units)
    if tol is None:
        tol = LINK_TOLERANCE * link_length
    blocks = _compile_blocks(n, topology, fixed_index)

    def deviation():
        d = np.linalg.norm(np.diff(units, axis=0), axis=1)
        if topology is Topology.RING:
            d = np.append(d, np.linalg.norm(units[0] - units[-1]))
        return float(np.abs(d - link_length).max())

    for _ in range(sweeps):
        _sweep(units, blocks, link_length, 1.0)
    if polish:
        for _ in range(_MAX_POLISH_SWEEPS):
            if deviation() <= tol:
                break
            _sweep(units, blocks, link_length, _POLISH_OMEGA)
    return units


def apply_pick_place(state, pick_world, place_world, config=None):
    """Apply one pick-and-place action given as two world points.

    If a unit lies within the grasp radius of the pick point, the nearest such
    unit is dragged to the place point in `drag_substeps` increments with the
    constraint network re-relaxed after each one, and (new_state, True) is
    returned.  If nothing is in reach the input state is returned unchanged
    with grasped=False: a signaled no-op so policy rollouts can continue.
    """
    if config is None:
        config = SimConfig()
    pick = np.asarray(pick_world, dtype=np.float64).reshape(2)
    place = np.asarray(place_world, dtype=np.float64).reshape(2)
    for p in (pick, place):
        if p.min() < 0.0 or p.max() > 1.0:
            raise OutOfWorkspace(f"point {tuple(p)} outside the unit workspace")

    dist = np.linalg.norm(state.units - pick, axis=1)
    grasped_idx = int(np.argmin(dist))
    if dist[grasped_idx] > config.grasp_radius:
        return state, False

    units = state.units.copy()
    start = units[grasped_idx].copy()
    for s in range(1, config.drag_substeps + 1):
        units[grasped_idx] = start + (place - start) * (s / config.drag_substeps)
        # Intermediate substeps run a fixed number of sweeps; the final one
        # also polishes so the returned state meets the link tolerance.
        relax(
            units,
            state.topology,
            state.link_length,
            fixed_index=grasped_idx,
            sweeps=config.pbd_iterations,
            polish=s == config.drag_substeps,
        )
    return RopeState(state.topology, units, state.link_length), True


def scramble(state, k_actions, rng_seed, config=None, margin=SCRAMBLE_MARGIN):
    """Apply `k_actions` random pick-and-place actions.

    Picks are sampled uniformly among units; places uniformly in the
    margin-inset workspace.  Actions that fail to grasp are resampled.
    Deterministic for a fixed seed; k_actions=0 returns the state unchanged.
    """
    if config is None:
        config = SimConfig()
    rng = np.random.default_rng(rng_seed)
    cur = state
    for _ in range(k_actions):
        while True:
            idx = int(rng.integers(cur.n_units))
            place = rng.uniform(margin, 1.0 - margin, size=2)
            nxt, grasped = apply_pick_place(cur, cur.units[idx], place, config)
            if grasped:
                break
        cur = nxt
    return cur


def _stroke_segment(img, a, b, radius):
    """Mark pixels whose center lies within `radius` (pixel units) of segment a-b."""
    h, w = img.shape
    r0 = max(int(np.floor(min(a[0], b[0]) - radius - 0.5)), 0)
    r1 = min(int(np.ceil(max(a[0], b[0]) + radius + 0.5)), h - 1)
    c0 = max(int(np.floor(min(a[1], b[1]) - radius - 0.5)), 0)
    c1 = min(int(np.ceil(max(a[1], b[1]) + radius + 0.5)), w - 1)
    if r1 < r0 or c1 < c0:
        return
    rows = np.arange(r0, r1 + 1, dtype=np.float64) + 0.5
    cols = np.arange(c0, c1 + 1, dtype=np.float64) + 0.5
    pr, pc = np.meshgrid(rows, cols, indexing="ij")
    ab = (b[0] - a[0], b[1] - a[1])
    ab2 = ab[0] * ab[0] + ab[1] * ab[1]
    if ab2 < 1e-12:
        t = np.zeros_like(pr)
    else:
        t = np.clip(((pr - a[0]) * ab[0] + (pc - a[1]) * ab[1]) / ab2, 0.0, 1.0)
    dr = pr - (a[0] + t * ab[0])
    dc = pc - (a[1] + t * ab[1])
    hit = dr * dr + dc * dc <= radius * radius
    img[r0 : r1 + 1, c0 : c1 + 1][hit] = 1.0


def render(state, h=64, w=64, thickness=3):
    """Rasterize the rope: each link drawn as a stroked line of the given
    pixel thickness, foreground 1.0 on background 0.0."""
    img = np.zeros((h, w), dtype=np.float64)
    # Continuous pixel-space endpoints (row, col) of every unit.
    pts = np.stack([state.units[:, 1] * h, state.units[:, 0] * w], axis=1)
    radius = thickness / 2.0
    for i, j in _link_pairs(state.n_units, state.topology):
        _stroke_segment(img, pts[i], pts[j], radius)
    return img
