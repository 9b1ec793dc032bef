"""End to end, in miniature: generate data, imitate the oracle, roll out.

The full pipeline at friendly sizes: a handful of rope tasks, a short
training run, pick/place errors against held-out demonstrations, and one
closed-loop rollout of the trained policy on a fresh task.  Expect a couple
of minutes; artifacts land in demo_out/05_train/.

For the real thing, use the CLI (`ropebench gen`, `ropebench train`, ...)
with its defaults.
"""

import os

from ropebench.cli import write_pgm
from ropebench.dataset import (
    generate_demonstrations,
    generate_tasks,
    load_split,
    transitions_from_episodes,
)
from ropebench.model import save_params
from ropebench.rollout import ModelPolicy, SuccessCriterion, rollout
from ropebench.sim import SimConfig, render
from ropebench.training import TrainConfig, eval_errors, train_imitation

OUT = os.path.join("demo_out", "05_train")
DATA = os.path.join(OUT, "data")


def main():
    os.makedirs(OUT, exist_ok=True)
    config = SimConfig()

    print("generating 12 rope tasks and oracle demonstrations...")
    tasks = generate_tasks(12, topology_mix=1.0, seed=123, sim_config=config)
    generate_demonstrations(tasks, DATA, sim_config=config)
    train_set = transitions_from_episodes(load_split(DATA, "train"))
    held_out = transitions_from_episodes(load_split(DATA, "test"))
    print(f"{len(train_set)} training transitions, {len(held_out)} held-out")

    train_config = TrainConfig(steps=80, val_cadence=40, seed=0)
    print(f"training for {train_config.steps} steps (a real run uses the defaults)...")

    def progress(record):
        if record.train_loss is not None:
            print(f"  step {record.step}: batch loss {record.batch_loss:.3f}, "
                  f"train loss {record.train_loss:.3f}")

    params, log = train_imitation(train_set, config=train_config, callback=progress)
    save_params(params, os.path.join(OUT, "model.gtwt"))

    e_pick, e_place = eval_errors(params, held_out)
    print(f"held-out errors after this short run: e_pick {e_pick:.3f}, e_place {e_place:.3f}")
    print("(fractions of the image diagonal; the full run drives both below 0.10)")

    task = generate_tasks(1, topology_mix=1.0, seed=999, sim_config=config)[0]
    result = rollout(ModelPolicy(params), task, SuccessCriterion(), config, record=True)
    trace = " -> ".join(f"{d:.1f}" for d in result.distances)
    print(f"fresh-task rollout: success={result.success} in {result.actions_used} actions, px {trace}")

    h, w = config.image_h, config.image_w
    write_pgm(os.path.join(OUT, "rollout_goal.pgm"), render(task.goal, h, w, config.render_thickness))
    write_pgm(os.path.join(OUT, "rollout_final.pgm"),
              render(result.final_state, h, w, config.render_thickness))
    print(f"artifacts written to {OUT}")


if __name__ == "__main__":
    main()
