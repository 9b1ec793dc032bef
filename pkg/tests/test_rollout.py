import numpy as np
import pytest

from ropebench.dataset import Task, generate_tasks
from ropebench.model import ModelHyper, init_params
from ropebench.rollout import (
    ModelPolicy,
    OraclePolicy,
    RandomPolicy,
    RolloutResult,
    SuccessCriterion,
    rollout,
    success_rate,
)
from ropebench.sim import PickPlaceAction, RopeState, SimConfig, Topology, init_state


def _translation_task():
    """Vertical chain of 3 whose goal is the same chain shifted right by 0.2:
    12.8 px from the goal, and the drag path stays clear of the other units."""
    initial = RopeState(Topology.CHAIN, np.array([[0.2, 0.2], [0.2, 0.45], [0.2, 0.7]]), 0.25)
    goal = RopeState(Topology.CHAIN, initial.units + (0.2, 0.0), 0.25)
    return Task(0, Topology.CHAIN, initial, goal, seed=0)


def test_default_threshold_is_ten_pixels():
    assert SuccessCriterion().threshold_pixels(64, 64) == 10.0
    assert SuccessCriterion().threshold_pixels(128, 256) == 10.0


def test_alpha_threshold_scales_with_diagonal():
    assert SuccessCriterion(alpha=0.5).threshold_pixels(3, 4) == pytest.approx(2.5)
    assert SuccessCriterion(alpha=0.1).threshold_pixels(64, 64) == pytest.approx(
        0.1 * np.sqrt(64.0**2 + 64.0**2)
    )


def test_solved_task_succeeds_with_zero_actions():
    state = init_state(Topology.CHAIN, 8, 0.05)
    task = Task(0, Topology.CHAIN, state, state, seed=0)
    result = rollout(OraclePolicy(), task)
    assert result.success
    assert result.actions_used == 0
    assert result.distances == [0.0]
    assert result.final_state is state
    assert result.steps is None


def test_oracle_trace_decreases_to_success():
    result = rollout(OraclePolicy(), _translation_task())
    assert result.success
    assert result.actions_used >= 1
    assert len(result.distances) == result.actions_used + 1
    # Initial separation derived by brute force over chain correspondences.
    assert result.distances[0] == pytest.approx(12.800000000000002, abs=1e-9)
    for before, after in zip(result.distances, result.distances[1:]):
        assert after < before
    assert result.distances[-1] <= 10.0


def test_single_displaced_unit_trace_strictly_decreases():
    # Exactly one unit differs from the goal: its link-length circle bounds
    # the displacement, so a tighter alpha is needed to require an action.
    initial = RopeState(Topology.CHAIN, np.array([[0.2, 0.5], [0.5, 0.5], [0.8, 0.5]]), 0.3)
    theta = np.deg2rad(60.0)
    v = initial.units[0] - initial.units[1]
    goal_units = initial.units.copy()
    goal_units[0] = initial.units[1] + (
        v[0] * np.cos(theta) - v[1] * np.sin(theta),
        v[0] * np.sin(theta) + v[1] * np.cos(theta),
    )
    task = Task(0, Topology.CHAIN, initial, RopeState(Topology.CHAIN, goal_units, 0.3), seed=0)
    result = rollout(OraclePolicy(), task, SuccessCriterion(alpha=0.04))
    assert result.success
    # One displaced unit at one link length: mean distance is 0.3/3 * 64 px.
    assert result.distances[0] == pytest.approx(6.4, abs=1e-9)
    for before, after in zip(result.distances, result.distances[1:]):
        assert after < before


def test_failed_grasps_still_consume_budget():
    # A policy that always picks an empty corner never moves the rope.
    def corner_policy(obs):
        return PickPlaceAction(pick=(0, 0), place=(1, 1))

    criterion = SuccessCriterion(max_actions=3)
    result = rollout(corner_policy, _translation_task(), criterion)
    assert not result.success
    assert result.actions_used == 3
    assert len(result.distances) == 4
    assert result.distances == [result.distances[0]] * 4


def test_record_keeps_one_step_per_action():
    result = rollout(OraclePolicy(), _translation_task(), record=True)
    assert len(result.steps) == result.actions_used
    step = result.steps[0]
    assert step.image.shape == (64, 64)
    assert isinstance(step.state, RopeState)
    assert isinstance(step.action, PickPlaceAction)
    np.testing.assert_array_equal(step.state.units, _translation_task().initial.units)


def test_rollout_is_deterministic():
    first = rollout(OraclePolicy(), _translation_task())
    second = rollout(OraclePolicy(), _translation_task())
    assert first.distances == second.distances
    np.testing.assert_array_equal(first.final_state.units, second.final_state.units)


def test_oracle_solves_generated_tasks():
    tasks = generate_tasks(6, seed=11)
    assert success_rate(OraclePolicy(), tasks) == 1.0


def test_random_policy_is_a_weak_baseline():
    tasks = generate_tasks(6, seed=11)
    criterion = SuccessCriterion(max_actions=5)
    results = [rollout(RandomPolicy(seed=i), t, criterion) for i, t in enumerate(tasks)]
    assert sum(r.success for r in results) <= 2


def test_model_policy_runs_untrained():
    hyper = ModelHyper(image_h=16, image_w=16, num_keypoints=4, crop_size=4,
                       feature_depth=1, gcn_hidden=8, fcn_hidden=4)
    params = init_params(hyper, seed=0)
    config = SimConfig(image_h=16, image_w=16, render_thickness=1)
    initial = init_state(Topology.CHAIN, 8, 0.05)
    goal_units = initial.units + (0.0, 0.2)
    task = Task(0, Topology.CHAIN, initial, RopeState(Topology.CHAIN, goal_units, 0.05), seed=0)
    before = [p.data.copy() for p in params.parameters()]
    result = rollout(ModelPolicy(params), task, SuccessCriterion(max_actions=2), config)
    assert isinstance(result, RolloutResult)
    assert 0 <= result.actions_used <= 2
    for step_distances in result.distances:
        assert step_distances >= 0.0
    # Evaluation must leave the parameters bitwise unchanged.
    rate = success_rate(ModelPolicy(params), [task], SuccessCriterion(max_actions=1), config)
    assert 0.0 <= rate <= 1.0
    for old, p in zip(before, params.parameters()):
        np.testing.assert_array_equal(old, p.data)
