"""Goal-conditioned rope rearranging: simulator, scripted demonstrator,
keypoint graphs, a small autodiff engine, and an imitation-trained policy."""

__version__ = "0.1.0"
