"""From images to graphs: deterministic keypoints and their adjacency.

Farthest-point sampling picks well-spread pixels off the rendered rope;
each keypoint connects to its two nearest neighbors to form the graph the
model encodes.  The Gaussian mask built from the same keypoints is what
keeps the policy's argmax on the object.  Overlays are written to
demo_out/03_keypoints/.
"""

import os

import numpy as np

from ropebench.cli import write_pgm
from ropebench.keypoints import align_keypoints, build_graph, extract_keypoints, gaussian_mask
from ropebench.sim import SimConfig, Topology, init_state, render, scramble

OUT = os.path.join("demo_out", "03_keypoints")


def main():
    os.makedirs(OUT, exist_ok=True)
    config = SimConfig()
    h, w = config.image_h, config.image_w
    k = 16

    state = scramble(init_state(Topology.CHAIN, 32, 0.02), 6, rng_seed=7)
    goal = scramble(init_state(Topology.CHAIN, 32, 0.02), 6, rng_seed=8)
    image = render(state, h, w, config.render_thickness)
    goal_image = render(goal, h, w, config.render_thickness)

    kps = extract_keypoints(image, k, 0.5)
    print(f"{k} keypoints from {int((image > 0.5).sum())} foreground pixels; "
          f"first three rows/cols: {kps[:3].tolist()}")

    graph = build_graph(kps, h, w)
    degrees = graph.adjacency.sum(axis=1) - 1.0  # self-loops excluded
    print(f"vertex degrees: min {int(degrees.min())}, max {int(degrees.max())} "
          f"(each vertex links to its two nearest, symmetrized)")
    print(f"vertex features are (row/H, col/W): first is {graph.vertex_features[0].round(3).tolist()}")

    goal_kps = extract_keypoints(goal_image, k, 0.5)
    aligned = align_keypoints(kps, goal_kps)
    moved = int((aligned != goal_kps).any(axis=1).sum())
    print(f"goal keypoints reordered by nearest-position matching: {moved} of {k} changed slots")

    mask = gaussian_mask(kps, 3.0, h, w)
    write_pgm(os.path.join(OUT, "image.pgm"), image)
    write_pgm(os.path.join(OUT, "mask.pgm"), mask)
    write_pgm(os.path.join(OUT, "overlay.pgm"), np.maximum(image * 0.5, mask))

    dots = np.zeros((h, w))
    dots[kps[:, 0], kps[:, 1]] = 1.0
    write_pgm(os.path.join(OUT, "keypoints.pgm"), dots)
    print(f"images written to {OUT}")


if __name__ == "__main__":
    main()
