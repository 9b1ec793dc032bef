"""Closed-loop evaluation: run a policy in the simulator until the rope
matches the goal or the action budget runs out.

A policy is any callable taking an Observation (rendered current and goal
images plus ground-truth states, which image-based policies ignore) and
returning a PickPlaceAction in pixels.  Success means the mean
corresponding-unit distance falls below a pixel threshold, 10 px by default,
within the allowed number of actions.
"""

from dataclasses import dataclass, field

import numpy as np

from .coords import image_diagonal, pixel_to_world, world_to_pixel
from .model import act
from .oracle import completion_distance_pixels, oracle_action
from .sim import PickPlaceAction, SimConfig, apply_pick_place, render


@dataclass(frozen=True)
class SuccessCriterion:
    """Task completion rule: alpha is a fraction of the image diagonal; the
    default None means 10 pixels at whatever resolution is in use."""

    max_actions: int = 20
    alpha: float = None

    def threshold_pixels(self, h, w):
        if self.alpha is None:
            return 10.0
        return self.alpha * image_diagonal(h, w)


@dataclass(frozen=True)
class Observation:
    image_current: np.ndarray
    image_goal: np.ndarray
    state_current: object
    state_goal: object


@dataclass(frozen=True)
class RolloutStep:
    """State and rendering before an action, and the action taken."""

    state: object
    image: np.ndarray
    action: PickPlaceAction


@dataclass(frozen=True)
class RolloutResult:
    success: bool
    actions_used: int
    distances: list  # completion distance in pixels, before each action and after the last
    final_state: object
    steps: list = field(default=None)


class OraclePolicy:
    """Scripted demonstrator: reads ground-truth states, returns the greedy
    corrective action quantized to pixels."""

    def __init__(self, include_reversals=False):
        self.include_reversals = include_reversals

    def __call__(self, obs):
        h, w = obs.image_current.shape
        pick_w, place_w = oracle_action(
            obs.state_current.units,
            obs.state_goal.units,
            obs.state_current.topology,
            self.include_reversals,
        )
        pick = world_to_pixel(pick_w[None], h, w)[0]
        place = world_to_pixel(place_w[None], h, w)[0]
        return PickPlaceAction(pick=(int(pick[0]), int(pick[1])), place=(int(place[0]), int(place[1])))


class RandomPolicy:
    """Uniform random pick and place pixels; the no-op baseline."""

    def __init__(self, seed=0):
        self._rng = np.random.default_rng(seed)

    def __call__(self, obs):
        h, w = obs.image_current.shape
        pick = (int(self._rng.integers(h)), int(self._rng.integers(w)))
        place = (int(self._rng.integers(h)), int(self._rng.integers(w)))
        return PickPlaceAction(pick=pick, place=place)


class ModelPolicy:
    """Trained policy: actions from the image pair only."""

    def __init__(self, params):
        self._params = params.frozen()

    def __call__(self, obs):
        return act(obs.image_current, obs.image_goal, self._params)


def rollout(policy, task, criterion=None, sim_config=None, record=False):
    """Run one task to completion or exhaustion.

    Completion is checked before the first action, so an already-solved task
    succeeds with zero actions.  Actions that fail to grasp still consume
    budget.  With record=True every pre-action state, rendered image, and
    action is kept.
    """
    if criterion is None:
        criterion = SuccessCriterion()
    if sim_config is None:
        sim_config = SimConfig()
    h, w = sim_config.image_h, sim_config.image_w
    threshold = criterion.threshold_pixels(h, w)
    state = task.initial
    goal = task.goal
    goal_image = render(goal, h, w, sim_config.render_thickness)

    def distance(s):
        return completion_distance_pixels(s.units, goal.units, s.topology, h, w)

    distances = [distance(state)]
    steps = [] if record else None
    used = 0
    while distances[-1] > threshold and used < criterion.max_actions:
        image = render(state, h, w, sim_config.render_thickness)
        action = policy(Observation(image, goal_image, state, goal))
        if record:
            steps.append(RolloutStep(state, image, action))
        pick_world = pixel_to_world(np.array([action.pick]), h, w)[0]
        place_world = pixel_to_world(np.array([action.place]), h, w)[0]
        state, _ = apply_pick_place(state, pick_world, place_world, sim_config)
        used += 1
        distances.append(distance(state))
    return RolloutResult(
        success=distances[-1] <= threshold,
        actions_used=used,
        distances=distances,
        final_state=state,
        steps=steps,
    )


def success_rate(policy, tasks, criterion=None, sim_config=None):
    """Fraction of tasks the policy completes."""
    results = [rollout(policy, task, criterion, sim_config) for task in tasks]
    return sum(r.success for r in results) / len(results)
