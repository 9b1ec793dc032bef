"""Imitation training for the pick-and-place model.

Each demonstration transition supervises both output heads: cross-entropy of
the pick score map against the demonstrated pick pixel, plus cross-entropy
of the place response against the demonstrated place pixel.  The place head
is teacher-forced: its kernel is cropped at the demonstrated pick, not the
model's own argmax, so both heads learn from step one.  Optimization is
minibatch SGD with momentum; everything is a pure function of the seed.
When a validation set is given, the parameters returned are the validation
probe snapshot with the lowest worst-head pixel error, which guards against
the late-training memorization the small datasets here invite.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, conv2d, spatial_softmax_ce
from .coords import image_diagonal
from .errors import ConfigError, ShapeMismatch, TrainingDiverged
from .model import (
    ModelHyper,
    act,
    encode_graph,
    fcn_forward,
    init_params,
    observe,
    place_kernel,
)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 8
    steps: int = 3000
    seed: int = 0
    val_cadence: int = 250  # steps between validation probes; 0 disables them
    val_samples: int = 64  # cap on transitions used per probe
    stop_loss: float = None  # stop once the probe training loss dips below


@dataclass(frozen=True)
class TrainRecord:
    """One logged step; probe fields are None off the validation cadence."""

    step: int
    batch_loss: float
    train_loss: float = None
    val_loss: float = None
    e_pick: float = None
    e_place: float = None


@dataclass(frozen=True)
class PreparedSample:
    """A transition with its keypoint graphs precomputed once."""

    image_current: np.ndarray
    image_goal: np.ndarray
    graph_current: object
    graph_goal: object
    pick: tuple
    place: tuple


def prepare_sample(transition, hyper):
    expected = (hyper.image_h, hyper.image_w)
    if transition.image_current.shape != expected or transition.image_goal.shape != expected:
        raise ShapeMismatch(
            f"transition images {transition.image_current.shape} do not match "
            f"the model resolution {expected}"
        )
    _, _, graph_t, graph_g, _, _ = observe(
        transition.image_current, transition.image_goal, hyper
    )
    return PreparedSample(
        image_current=transition.image_current,
        image_goal=transition.image_goal,
        graph_current=graph_t,
        graph_goal=graph_g,
        pick=transition.action.pick,
        place=transition.action.place,
    )


def _batch_loss(params, samples):
    """Mean pick-plus-place cross-entropy over a list of prepared samples.

    The three conv stacks run once on the whole batch; per-sample slices
    feed the losses so gradients flow back through the shared forward pass.
    """
    hyper = params.hyper
    h, w = hyper.image_h, hyper.image_w
    x = Tensor(np.stack([np.stack([s.image_current, s.image_goal]) for s in samples]))
    pick_maps = fcn_forward(params.pick_fcn, x)
    query_maps = fcn_forward(params.query_fcn, x)
    key_maps = fcn_forward(params.key_fcn, x)
    total = None
    for i, sample in enumerate(samples):
        loss = spatial_softmax_ce(pick_maps[i].reshape((h, w)), sample.pick)
        code_t = encode_graph(sample.graph_current, params)
        code_g = encode_graph(sample.graph_goal, params)
        kernel = place_kernel(query_maps[i], sample.pick, code_t, code_g, hyper)
        response = conv2d(
            key_maps[i],
            kernel.reshape((1, hyper.feature_depth, hyper.crop_size, hyper.crop_size)),
        ).reshape((h, w))
        loss = loss + spatial_softmax_ce(response, sample.place)
        total = loss if total is None else total + loss
    return total * (1.0 / len(samples))


def _dataset_loss(params, prepared, batch_size):
    """Forward-only loss over a sample list, in untracked batches."""
    frozen = params.frozen()
    total = 0.0
    for start in range(0, len(prepared), batch_size):
        chunk = prepared[start : start + batch_size]
        total += float(_batch_loss(frozen, chunk).data) * len(chunk)
    return total / len(prepared)


def imitation_loss(params, transitions):
    """Mean imitation loss of a parameter set on raw transitions."""
    prepared = [prepare_sample(t, params.hyper) for t in transitions]
    return _dataset_loss(params, prepared, TrainConfig.batch_size)


def eval_errors(params, transitions, limit=None):
    """Mean pick and place pixel error against the demonstrated actions,
    as fractions of the image diagonal.  Returns (e_pick, e_place)."""
    if limit is not None:
        transitions = transitions[:limit]
    if not transitions:
        raise ConfigError("no transitions to evaluate")
    frozen = params.frozen()
    hyper = frozen.hyper
    norm = image_diagonal(hyper.image_h, hyper.image_w)
    pick_err = 0.0
    place_err = 0.0
    for t in transitions:
        action = act(t.image_current, t.image_goal, frozen)
        pick_err += float(np.hypot(*(np.subtract(action.pick, t.action.pick))))
        place_err += float(np.hypot(*(np.subtract(action.place, t.action.place))))
    return pick_err / len(transitions) / norm, place_err / len(transitions) / norm


def train_imitation(transitions, val_transitions=None, config=None, hyper=None, callback=None):
    """Fit a fresh model to demonstration transitions.

    Returns (params, log).  The log holds one TrainRecord per step; on the
    validation cadence (and at the end) records also carry the probe
    training loss, and validation loss and pixel errors when a validation
    set is given.  With a validation set, the returned parameters are the
    probe snapshot whose worse pixel error (max of e_pick and e_place) was
    lowest, not necessarily the final step; without one, the final
    parameters are returned.  With stop_loss set, training stops at the
    first probe whose training loss is below it.  A non-finite loss raises
    TrainingDiverged.
    """
    if config is None:
        config = TrainConfig()
    if hyper is None:
        hyper = ModelHyper()
    if not transitions:
        raise ConfigError("no training transitions")
    if config.learning_rate <= 0 or config.batch_size < 1 or config.steps < 1:
        raise ConfigError(f"non-positive training configuration: {config}")
    prepared = [prepare_sample(t, hyper) for t in transitions]
    val_prepared = [
        prepare_sample(t, hyper) for t in (val_transitions or [])[: config.val_samples]
    ]
    params = init_params(hyper, config.seed)
    rng = np.random.default_rng([config.seed, 1])
    tensors = params.parameters()
    velocity = [np.zeros_like(p.data) for p in tensors]
    best = None  # (worst pixel error, parameter snapshot) across probes
    log = []
    for step in range(1, config.steps + 1):
        idx = rng.integers(0, len(prepared), size=config.batch_size)
        loss = _batch_loss(params, [prepared[i] for i in idx])
        if not np.isfinite(loss.data):
            raise TrainingDiverged(f"loss became {float(loss.data)} at step {step}")
        for p in tensors:
            p.zero_grad()
        loss.backward()
        for p, v in zip(tensors, velocity):
            v *= config.momentum
            v -= config.learning_rate * p.grad
            p.data += v

        probe = step == config.steps or (
            config.val_cadence and step % config.val_cadence == 0
        )
        train_loss = val_loss = e_pick = e_place = None
        if probe:
            train_loss = _dataset_loss(
                params, prepared[: config.val_samples], config.batch_size
            )
            if val_prepared:
                val_loss = _dataset_loss(params, val_prepared, config.batch_size)
                e_pick, e_place = eval_errors(
                    params, val_transitions, limit=config.val_samples
                )
                metric = max(e_pick, e_place)
                if best is None or metric < best[0]:
                    best = (metric, [p.data.copy() for p in tensors])
        record = TrainRecord(step, float(loss.data), train_loss, val_loss, e_pick, e_place)
        log.append(record)
        if callback is not None:
            callback(record)
        if probe and config.stop_loss is not None and train_loss < config.stop_loss:
            break
    if best is not None:
        for p, data in zip(tensors, best[1]):
            p.data = data
    return params, log
