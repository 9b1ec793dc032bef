"""A first look at the rope simulator.

Builds the two canonical configurations (an open chain and a closed ring),
scrambles them with random pick-and-place actions, applies one deliberate
drag, and renders everything to portable graymap images under
demo_out/01_simulate/.  Watch the link-length deviation stay within
tolerance no matter how rough the manipulation gets.
"""

import os

import numpy as np

from ropebench.cli import write_pgm
from ropebench.sim import LINK_TOLERANCE, SimConfig, Topology, apply_pick_place, init_state, render, scramble

OUT = os.path.join("demo_out", "01_simulate")


def describe(name, state):
    dev = state.max_link_deviation() / state.link_length
    print(f"{name}: {state.n_units} units, link {state.link_length}, "
          f"worst link deviation {dev:.2e} (tolerance {LINK_TOLERANCE:.0e})")


def main():
    os.makedirs(OUT, exist_ok=True)
    config = SimConfig()
    h, w = config.image_h, config.image_w

    chain = init_state(Topology.CHAIN, 32, 0.02)
    ring = init_state(Topology.RING, 32, 0.02)
    describe("canonical chain", chain)
    describe("canonical ring", ring)
    write_pgm(os.path.join(OUT, "chain_canonical.pgm"), render(chain, h, w, config.render_thickness))
    write_pgm(os.path.join(OUT, "ring_canonical.pgm"), render(ring, h, w, config.render_thickness))

    messy_chain = scramble(chain, 8, rng_seed=0)
    messy_ring = scramble(ring, 8, rng_seed=1)
    describe("scrambled chain", messy_chain)
    describe("scrambled ring", messy_ring)
    write_pgm(os.path.join(OUT, "chain_scrambled.pgm"), render(messy_chain, h, w, config.render_thickness))
    write_pgm(os.path.join(OUT, "ring_scrambled.pgm"), render(messy_ring, h, w, config.render_thickness))

    # Grab the chain's first unit and drag it to the workspace center.
    pick = messy_chain.units[0]
    place = np.array([0.5, 0.5])
    dragged, grasped = apply_pick_place(messy_chain, pick, place, config)
    print(f"drag {np.round(pick, 3)} -> {place}: grasped={grasped}, "
          f"moved unit now at {np.round(dragged.units[0], 3)}")
    describe("after drag", dragged)
    write_pgm(os.path.join(OUT, "chain_dragged.pgm"), render(dragged, h, w, config.render_thickness))

    # A pick far from any unit is a signaled no-op.
    empty_corner = np.array([0.02, 0.02])
    same, grasped = apply_pick_place(dragged, empty_corner, place, config)
    print(f"pick at empty corner: grasped={grasped}, state unchanged={same is dragged}")
    print(f"images written to {OUT}")


if __name__ == "__main__":
    main()
