"""Command line surface: dataset generation, training, evaluation, rollouts,
oracle demonstrations, and episode rendering.

Every subcommand is deterministic given its seed, so rerunning a command
reproduces its output files byte for byte.  Images are dumped as binary
portable graymaps (P5), viewable almost anywhere.
"""

import argparse
import dataclasses
import os
import sys

import numpy as np

from .dataset import (
    build_task,
    episode_path,
    generate_demonstrations,
    generate_tasks,
    load_split,
    read_episode,
    transitions_from_episodes,
)
from .errors import ConfigError, RopebenchError
from .keypoints import extract_keypoints, gaussian_mask
from .model import ModelHyper, load_params, save_params
from .rollout import ModelPolicy, OraclePolicy, SuccessCriterion, rollout
from .sim import SimConfig, Topology, render
from .training import TrainConfig, eval_errors, train_imitation

_TOPOLOGY_CHOICES = {
    "chain": Topology.CHAIN,
    "ring": Topology.RING,
    "both": None,
}


def write_pgm(path, image):
    """Write a [0, 1] grayscale image as a binary portable graymap."""
    data = np.round(np.clip(np.asarray(image), 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def load_train_config(path):
    """Parse a plain-text key=value file into a TrainConfig.

    Blank lines and '#' comments are skipped; keys must be TrainConfig field
    names; 'none' clears an optional value.
    """
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in fields:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if value.lower() == "none":
                values[key] = None
            elif fields[key].type is int or fields[key].type == "int":
                values[key] = int(value)
            else:
                values[key] = float(value)
    return dataclasses.replace(TrainConfig(), **values)


def _sim_config(resolution):
    return SimConfig(image_h=resolution, image_w=resolution)


def _load_transitions(data_dir, split, topology):
    episodes = load_split(data_dir, split, topology)
    return transitions_from_episodes(episodes)


def _cmd_gen(args):
    config = _sim_config(args.resolution)
    tasks = generate_tasks(args.n_tasks, args.topology_mix, args.seed, sim_config=config)
    entries, log = generate_demonstrations(tasks, args.out, sim_config=config)
    for line in log:
        print(line)
    steps = sum(e.length for e in entries)
    print(f"wrote {len(entries)} episodes ({steps} steps) to {args.out}")
    return 0


def _cmd_train(args):
    config = load_train_config(args.config) if args.config else TrainConfig()
    topology = _TOPOLOGY_CHOICES[args.topology]
    train_set = _load_transitions(args.data, "train", topology)
    val_set = _load_transitions(args.data, "val", topology)
    if not train_set:
        raise ConfigError(f"no training transitions in {args.data}")

    def progress(record):
        if record.train_loss is not None:
            parts = [f"step {record.step}", f"train {record.train_loss:.4f}"]
            if record.val_loss is not None:
                parts.append(f"val {record.val_loss:.4f}")
                parts.append(f"e_pick {record.e_pick:.4f}")
                parts.append(f"e_place {record.e_place:.4f}")
            print("  ".join(parts))

    params, log = train_imitation(train_set, val_set, config, callback=progress)
    save_params(params, args.checkpoint_out)
    print(f"saved checkpoint to {args.checkpoint_out} after {log[-1].step} steps")
    return 0


def _cmd_eval(args):
    params = load_params(args.checkpoint)
    topology = _TOPOLOGY_CHOICES[args.topology]
    transitions = _load_transitions(args.data, args.split, topology)
    if not transitions:
        raise ConfigError(f"no {args.split} transitions in {args.data}")
    e_pick, e_place = eval_errors(params, transitions)
    print(f"e_pick {e_pick:.6f}")
    print(f"e_place {e_place:.6f}")
    return 0


def _cmd_rollout(args):
    params = load_params(args.checkpoint)
    hyper = params.hyper
    if hyper.image_h != hyper.image_w:
        raise ConfigError("rollout assumes square images")
    config = _sim_config(hyper.image_h)
    tasks = generate_tasks(args.tasks, args.topology_mix, args.seed, sim_config=config)
    criterion = SuccessCriterion(max_actions=args.max_actions)
    policy = ModelPolicy(params)
    successes = 0
    for task in tasks:
        result = rollout(policy, task, criterion, config)
        successes += result.success
        trace = " -> ".join(f"{d:.1f}" for d in result.distances)
        status = "success" if result.success else "failure"
        print(f"task {task.task_id}: {status} in {result.actions_used} actions, px {trace}")
    print(f"success rate {successes / len(tasks):.3f} over {len(tasks)} tasks")
    return 0


def _cmd_oracle_demo(args):
    config = _sim_config(args.resolution)
    topology = _TOPOLOGY_CHOICES[args.topology] or Topology.CHAIN
    task = build_task(0, topology, args.task_seed, sim_config=config)
    criterion = SuccessCriterion(max_actions=args.max_actions)
    result = rollout(OraclePolicy(), task, criterion, config, record=True)
    os.makedirs(args.out, exist_ok=True)
    h, w = config.image_h, config.image_w
    write_pgm(os.path.join(args.out, "goal.pgm"), render(task.goal, h, w, config.render_thickness))
    for i, step in enumerate(result.steps):
        write_pgm(os.path.join(args.out, f"step_{i:03d}.pgm"), step.image)
        print(f"step {i}: pick {step.action.pick} place {step.action.place}")
    write_pgm(
        os.path.join(args.out, "final.pgm"),
        render(result.final_state, h, w, config.render_thickness),
    )
    trace = " -> ".join(f"{d:.1f}" for d in result.distances)
    status = "success" if result.success else "failure"
    print(f"{status} in {result.actions_used} actions, px {trace}")
    return 0


def _cmd_render(args):
    episode = read_episode(args.episode)
    if not 0 <= args.step < len(episode.steps):
        raise ConfigError(f"step {args.step} outside 0..{len(episode.steps) - 1}")
    step = episode.steps[args.step]
    hyper = ModelHyper()
    os.makedirs(args.out, exist_ok=True)

    def dump(name, image):
        path = os.path.join(args.out, name)
        write_pgm(path, image)
        print(f"wrote {path}")

    for prefix, image in (("step", step.image), ("goal", episode.goal_image)):
        kps = extract_keypoints(image, hyper.num_keypoints, hyper.intensity_threshold)
        mask = gaussian_mask(kps, hyper.mask_sigma, *image.shape)
        dump(f"{prefix}_image.pgm", image)
        dump(f"{prefix}_mask.pgm", mask)
        dump(f"{prefix}_overlay.pgm", np.maximum(image * 0.5, mask))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ropebench",
        description="goal-conditioned rope rearranging: data, training, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate tasks and oracle demonstrations")
    gen.add_argument("--n-tasks", type=int, default=400)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="dataset")
    gen.add_argument("--resolution", type=int, default=64)
    gen.add_argument("--topology-mix", type=float, default=0.5)
    gen.set_defaults(func=_cmd_gen)

    train = sub.add_parser("train", help="train the model on a generated dataset")
    train.add_argument("--data", required=True)
    train.add_argument("--config", default=None, help="key=value training config file")
    train.add_argument("--checkpoint-out", default="model.gtwt")
    train.add_argument("--topology", choices=sorted(_TOPOLOGY_CHOICES), default="both")
    train.set_defaults(func=_cmd_train)

    evl = sub.add_parser("eval", help="report pick/place errors on a dataset split")
    evl.add_argument("--checkpoint", required=True)
    evl.add_argument("--data", required=True)
    evl.add_argument("--split", choices=("train", "val", "test"), default="test")
    evl.add_argument("--topology", choices=sorted(_TOPOLOGY_CHOICES), default="both")
    evl.set_defaults(func=_cmd_eval)

    roll = sub.add_parser("rollout", help="run the trained policy on fresh tasks")
    roll.add_argument("--checkpoint", required=True)
    roll.add_argument("--tasks", type=int, default=50)
    roll.add_argument("--seed", type=int, default=1)
    roll.add_argument("--topology-mix", type=float, default=0.5)
    roll.add_argument("--max-actions", type=int, default=20)
    roll.set_defaults(func=_cmd_rollout)

    demo = sub.add_parser("oracle-demo", help="run the oracle on one task, dump images")
    demo.add_argument("--task-seed", type=int, required=True)
    demo.add_argument("--topology", choices=("chain", "ring"), default="chain")
    demo.add_argument("--out", default="oracle_demo")
    demo.add_argument("--resolution", type=int, default=64)
    demo.add_argument("--max-actions", type=int, default=20)
    demo.set_defaults(func=_cmd_oracle_demo)

    rend = sub.add_parser("render", help="dump one episode step with keypoint masks")
    rend.add_argument("--episode", required=True)
    rend.add_argument("--step", type=int, default=0)
    rend.add_argument("--out", default="render_out")
    rend.set_defaults(func=_cmd_render)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RopebenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
