"""Task generation, oracle demonstrations, and the on-disk dataset.

A task is a pair of rope configurations made by scrambling the canonical
layout twice with a few random pick-and-place actions.  The scripted oracle
solves each task in the simulator while every step is recorded; completed
demonstrations are serialized to a small binary episode format ("GTEP"),
8-bit images plus float64 positions, with a plain-text manifest assigning
episodes to train/val/test splits per topology.  Everything is a pure
function of the seed, so regenerating a dataset reproduces it byte for byte.

Episode file layout (all little-endian):

    bytes 0-3   magic "GTEP"
    int32       format version (1)
    uint8       topology: 0 = chain, 1 = ring
    int32       n_units, image height, image width, step count
    float64     link length
    h*w uint8   goal image, row-major, 0..255
    n*2 float64 goal unit positions (x, y per unit)
    per step:
        h*w uint8    current image
        n*2 float64  current unit positions
        4x uint16    action: pick row, pick col, place row, place col
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, ShapeMismatch, TruncatedFile, VersionMismatch
from .oracle import completion_distance_pixels
from .rollout import OraclePolicy, SuccessCriterion, rollout
from .sim import PickPlaceAction, RopeState, SimConfig, Topology, init_state, render, scramble

EPISODE_MAGIC = b"GTEP"
EPISODE_VERSION = 1

DEFAULT_N_UNITS = 32
DEFAULT_LINK_LENGTH = 0.02
SCRAMBLE_ACTIONS = (4, 12)  # inclusive range of scramble counts per configuration

_TOPOLOGY_CODE = {Topology.CHAIN: 0, Topology.RING: 1}
_CODE_TOPOLOGY = {0: Topology.CHAIN, 1: Topology.RING}

SPLIT_FRACTIONS = {"train": 0.8, "val": 0.1}  # remainder goes to test


@dataclass(frozen=True)
class Task:
    task_id: int
    topology: Topology
    initial: RopeState
    goal: RopeState
    seed: int


@dataclass(frozen=True)
class EpisodeStep:
    image: np.ndarray  # (h, w) float64 in [0, 1]
    positions: np.ndarray  # (n, 2) float64 world coordinates
    action: PickPlaceAction


@dataclass(frozen=True)
class Episode:
    topology: Topology
    link_length: float
    goal_image: np.ndarray
    goal_positions: np.ndarray
    steps: list


@dataclass(frozen=True)
class ManifestEntry:
    episode_id: int
    topology: Topology
    split: str
    length: int


@dataclass(frozen=True)
class Transition:
    """One imitation sample: an observed image pair, the oracle action, and
    the ground-truth positions kept for metrics."""

    image_current: np.ndarray
    image_goal: np.ndarray
    action: PickPlaceAction
    positions_current: np.ndarray
    positions_goal: np.ndarray
    topology: Topology
    link_length: float


def task_seed(global_seed, task_id):
    """Stable per-task seed derived from the dataset seed and task id."""
    return int(np.random.SeedSequence([global_seed, task_id]).generate_state(1)[0])


def build_task(
    task_id,
    topology,
    seed,
    attempt=0,
    n_units=DEFAULT_N_UNITS,
    link_length=DEFAULT_LINK_LENGTH,
    sim_config=None,
    criterion=None,
):
    """One random task: scramble the canonical state twice, rejecting pairs
    already within the completion threshold.  `attempt` varies the draw for
    the same task id, used when a demonstration must be regenerated.
    """
    if sim_config is None:
        sim_config = SimConfig()
    if criterion is None:
        criterion = SuccessCriterion()
    h, w = sim_config.image_h, sim_config.image_w
    threshold = criterion.threshold_pixels(h, w)
    base = init_state(topology, n_units, link_length)
    rng = np.random.default_rng([seed, attempt])
    lo, hi = SCRAMBLE_ACTIONS
    while True:
        k_initial = int(rng.integers(lo, hi + 1))
        k_goal = int(rng.integers(lo, hi + 1))
        initial = scramble(base, k_initial, int(rng.integers(2**63)), sim_config)
        goal = scramble(base, k_goal, int(rng.integers(2**63)), sim_config)
        apart = completion_distance_pixels(initial.units, goal.units, topology, h, w)
        if apart > threshold:
            return Task(task_id, topology, initial, goal, seed)


def generate_tasks(
    n_tasks,
    topology_mix=0.5,
    seed=0,
    n_units=DEFAULT_N_UNITS,
    link_length=DEFAULT_LINK_LENGTH,
    sim_config=None,
    criterion=None,
):
    """Deterministic task list: the first round(n * mix) tasks are chains,
    the rest rings."""
    n_chain = int(round(n_tasks * topology_mix))
    tasks = []
    for i in range(n_tasks):
        topology = Topology.CHAIN if i < n_chain else Topology.RING
        tasks.append(
            build_task(
                i, topology, task_seed(seed, i), 0, n_units, link_length, sim_config, criterion
            )
        )
    return tasks


def episode_from_rollout(task, result, goal_image):
    steps = [
        EpisodeStep(step.image, step.state.units.copy(), step.action) for step in result.steps
    ]
    return Episode(
        topology=task.topology,
        link_length=task.goal.link_length,
        goal_image=goal_image,
        goal_positions=task.goal.units.copy(),
        steps=steps,
    )


def generate_demonstrations(
    tasks,
    out_dir,
    sim_config=None,
    criterion=None,
    include_reversals=False,
    max_attempts=100,
):
    """Record one completed oracle demonstration per task.

    Tasks the oracle cannot finish within the action budget are re-scrambled
    (same task id, next attempt) until a demonstration completes.  Episodes
    are written to out_dir as episode_<id>.gtep plus a manifest assigning
    train/val/test splits per topology.  Returns (manifest entries, log lines).
    """
    if sim_config is None:
        sim_config = SimConfig()
    if criterion is None:
        criterion = SuccessCriterion()
    os.makedirs(out_dir, exist_ok=True)
    policy = OraclePolicy(include_reversals)
    h, w = sim_config.image_h, sim_config.image_w
    log = []
    records = []
    for task in tasks:
        current = task
        for attempt in range(1, max_attempts + 1):
            result = rollout(policy, current, criterion, sim_config, record=True)
            if result.success:
                break
            log.append(
                f"task {task.task_id}: demonstration incomplete after "
                f"{result.actions_used} actions, re-scrambling (attempt {attempt})"
            )
            current = build_task(
                task.task_id,
                task.topology,
                task.seed,
                attempt,
                task.initial.n_units,
                task.initial.link_length,
                sim_config,
                criterion,
            )
        else:
            raise RuntimeError(f"task {task.task_id}: no demonstration after {max_attempts} attempts")
        goal_image = render(current.goal, h, w, sim_config.render_thickness)
        episode = episode_from_rollout(current, result, goal_image)
        write_episode(episode, episode_path(out_dir, task.task_id))
        records.append((task.task_id, task.topology, len(episode.steps)))

    entries = _assign_splits(records)
    write_manifest(entries, out_dir)
    return entries, log


def _assign_splits(records):
    """80/10/10 by id order within each topology; remainder goes to test."""
    entries = []
    for topology in (Topology.CHAIN, Topology.RING):
        ids = [r for r in records if r[1] is topology]
        n = len(ids)
        n_train = int(SPLIT_FRACTIONS["train"] * n)
        n_val = int(SPLIT_FRACTIONS["val"] * n)
        for rank, (episode_id, _, length) in enumerate(ids):
            if rank < n_train:
                split = "train"
            elif rank < n_train + n_val:
                split = "val"
            else:
                split = "test"
            entries.append(ManifestEntry(episode_id, topology, split, length))
    entries.sort(key=lambda e: e.episode_id)
    return entries


def episode_path(out_dir, episode_id):
    return os.path.join(out_dir, f"episode_{episode_id:05d}.gtep")


def write_manifest(entries, out_dir):
    lines = [f"{e.episode_id} {e.topology.value} {e.split} {e.length}\n" for e in entries]
    with open(os.path.join(out_dir, "manifest.txt"), "w") as f:
        f.writelines(lines)


def read_manifest(out_dir):
    entries = []
    with open(os.path.join(out_dir, "manifest.txt")) as f:
        for line in f:
            episode_id, topology, split, length = line.split()
            entries.append(
                ManifestEntry(int(episode_id), Topology(topology), split, int(length))
            )
    return entries


# ---- binary episode io ----


def _encode_image(image):
    return np.round(np.asarray(image) * 255.0).astype(np.uint8)


def _decode_image(raw, h, w):
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


def write_episode(episode, path):
    h, w = episode.goal_image.shape
    n = len(episode.goal_positions)
    with open(path, "wb") as f:
        f.write(EPISODE_MAGIC)
        f.write(struct.pack("<iB4id", EPISODE_VERSION, _TOPOLOGY_CODE[episode.topology],
                            n, h, w, len(episode.steps), episode.link_length))
        f.write(_encode_image(episode.goal_image).tobytes())
        f.write(np.ascontiguousarray(episode.goal_positions, dtype="<f8").tobytes())
        for step in episode.steps:
            if step.image.shape != (h, w) or step.positions.shape != (n, 2):
                raise ShapeMismatch(f"step arrays do not match episode header in {path}")
            f.write(_encode_image(step.image).tobytes())
            f.write(np.ascontiguousarray(step.positions, dtype="<f8").tobytes())
            f.write(struct.pack("<4H", *step.action.pick, *step.action.place))


def _read_exact(f, count, what):
    blob = f.read(count)
    if len(blob) != count:
        raise TruncatedFile(f"episode ended while reading {what}")
    return blob


def read_episode(path):
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != EPISODE_MAGIC:
            raise BadMagic(f"{path} is not an episode file")
        header = _read_exact(f, struct.calcsize("<iB4id"), "header")
        version, topo_code, n, h, w, n_steps, link_length = struct.unpack("<iB4id", header)
        if version != EPISODE_VERSION:
            raise VersionMismatch(f"episode version {version}, expected {EPISODE_VERSION}")
        if topo_code not in _CODE_TOPOLOGY:
            raise BadMagic(f"unknown topology code {topo_code} in {path}")
        goal_image = _decode_image(_read_exact(f, h * w, "goal image"), h, w)
        goal_positions = np.frombuffer(
            _read_exact(f, n * 16, "goal positions"), dtype="<f8"
        ).astype(np.float64).reshape(n, 2)
        steps = []
        for i in range(n_steps):
            image = _decode_image(_read_exact(f, h * w, f"step {i} image"), h, w)
            positions = np.frombuffer(
                _read_exact(f, n * 16, f"step {i} positions"), dtype="<f8"
            ).astype(np.float64).reshape(n, 2)
            pr, pc, qr, qc = struct.unpack("<4H", _read_exact(f, 8, f"step {i} action"))
            if pr >= h or pc >= w or qr >= h or qc >= w:
                raise ShapeMismatch(f"step {i} action outside {h}x{w} image in {path}")
            steps.append(EpisodeStep(image, positions, PickPlaceAction((pr, pc), (qr, qc))))
        if f.read(1):
            raise TruncatedFile(f"{path} has trailing bytes after step {n_steps - 1}")
    return Episode(_CODE_TOPOLOGY[topo_code], link_length, goal_image, goal_positions, steps)


# ---- views over a stored dataset ----


def load_split(out_dir, split, topology=None):
    """Episodes assigned to a split, optionally restricted to one topology,
    in id order."""
    episodes = []
    for entry in read_manifest(out_dir):
        if entry.split != split:
            continue
        if topology is not None and entry.topology is not topology:
            continue
        episodes.append(read_episode(episode_path(out_dir, entry.episode_id)))
    return episodes


def transitions_from_episodes(episodes):
    """Flatten episodes into imitation samples, preserving order."""
    out = []
    for ep in episodes:
        for step in ep.steps:
            out.append(
                Transition(
                    image_current=step.image,
                    image_goal=ep.goal_image,
                    action=step.action,
                    positions_current=step.positions,
                    positions_goal=ep.goal_positions,
                    topology=ep.topology,
                    link_length=ep.link_length,
                )
            )
    return out


def task_from_episode(episode, task_id=0):
    """Reconstruct the rearranging task an episode demonstrates."""
    initial = RopeState(episode.topology, episode.steps[0].positions.copy(), episode.link_length)
    goal = RopeState(episode.topology, episode.goal_positions.copy(), episode.link_length)
    return Task(task_id, episode.topology, initial, goal, seed=0)
