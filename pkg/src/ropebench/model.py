"""Pick-and-place policy over image pairs.

Three small fully convolutional networks read the stacked (current, goal)
images.  The pick stream scores every pixel; scores pass through exp and are
gated by the current-image Gaussian keypoint mask, so the argmax always lies
on the object.  For placing, the query stream is cropped around the pick
pixel, combined with the difference of two graph encodings (goal minus
current, each a two-layer graph convolution over the keypoint graph), and
the result is swept over the key stream as a cross-correlation kernel; the
response is gated by the goal mask the same way.

Parameters save to and load from a small versioned binary checkpoint.
"""

import struct
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor, conv2d, crop2d, gcn_layer
from .errors import BadMagic, ConfigError, NoSupport, TruncatedFile, VersionMismatch
from .keypoints import align_keypoints, build_graph, extract_keypoints, gaussian_mask
from .sim import PickPlaceAction

CHECKPOINT_MAGIC = b"GTWT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelHyper:
    image_h: int = 64
    image_w: int = 64
    num_keypoints: int = 16
    crop_size: int = 8
    feature_depth: int = 4
    gcn_hidden: int = 32
    fcn_hidden: int = 16
    fcn_layers: int = 4
    kernel_size: int = 3
    align_goal_nodes: bool = True
    mask_sigma: float = 3.0
    intensity_threshold: float = 0.5

    @property
    def code_length(self):
        """Flattened graph-code length: crop volume, split across keypoints."""
        return self.crop_size * self.crop_size * self.feature_depth

    @property
    def gcn_out_features(self):
        n = self.code_length
        if n % self.num_keypoints != 0:
            raise ConfigError(
                f"crop volume {n} not divisible by {self.num_keypoints} keypoints"
            )
        return n // self.num_keypoints


@dataclass
class ModelParams:
    hyper: ModelHyper
    pick_fcn: list  # [(weight, bias), ...] conv layers
    query_fcn: list
    key_fcn: list
    gcn_w1: Tensor
    gcn_w2: Tensor

    def parameters(self):
        """All trainable tensors, in the fixed checkpoint order."""
        out = []
        for fcn in (self.pick_fcn, self.query_fcn, self.key_fcn):
            for w, b in fcn:
                out.extend([w, b])
        out.extend([self.gcn_w1, self.gcn_w2])
        return out

    def frozen(self):
        """Untracked view sharing the same arrays, for cheap inference."""

        def untrack(layers):
            return [(Tensor(w.data), Tensor(b.data)) for w, b in layers]

        return ModelParams(
            self.hyper,
            untrack(self.pick_fcn),
            untrack(self.query_fcn),
            untrack(self.key_fcn),
            Tensor(self.gcn_w1.data),
            Tensor(self.gcn_w2.data),
        )


def _conv_channel_plan(hyper, out_channels):
    channels = [2] + [hyper.fcn_hidden] * (hyper.fcn_layers - 1) + [out_channels]
    return list(zip(channels[:-1], channels[1:]))


def init_params(hyper=None, seed=0):
    """Random parameters: scaled-normal conv and graph weights, zero biases.

    Output layers start near zero so initial score maps are flat and the exp
    transform cannot overflow.
    """
    if hyper is None:
        hyper = ModelHyper()
    hyper.gcn_out_features  # validate divisibility up front
    rng = np.random.default_rng(seed)
    k = hyper.kernel_size

    def conv_stack(out_channels):
        layers = []
        plan = _conv_channel_plan(hyper, out_channels)
        for i, (c_in, c_out) in enumerate(plan):
            if i == len(plan) - 1:
                std = 0.05
            else:
                std = np.sqrt(2.0 / (c_in * k * k))
            w = Tensor(rng.normal(0.0, std, size=(c_out, c_in, k, k)), requires_grad=True)
            b = Tensor(np.zeros(c_out), requires_grad=True)
            layers.append((w, b))
        return layers

    pick = conv_stack(1)
    query = conv_stack(hyper.feature_depth)
    key = conv_stack(hyper.feature_depth)
    w1 = Tensor(rng.normal(0.0, 1.0, size=(2, hyper.gcn_hidden)), requires_grad=True)
    w2 = Tensor(
        rng.normal(0.0, 0.05, size=(hyper.gcn_hidden, hyper.gcn_out_features)),
        requires_grad=True,
    )
    return ModelParams(hyper, pick, query, key, w1, w2)


def fcn_forward(layers, x):
    """Apply a conv stack with ReLU between layers, none after the last."""
    out = x
    for i, (w, b) in enumerate(layers):
        out = conv2d(out, w, b, padding="same")
        if i < len(layers) - 1:
            out = out.relu()
    return out


def stack_images(image_current, image_goal):
    """Constant 2-channel input tensor from a (current, goal) image pair."""
    return Tensor(np.stack([image_current, image_goal]))


def encode_graph(graph, params):
    """Two graph convolutions (ReLU then identity) and a node-major flatten."""
    hyper = params.hyper
    k = len(graph.vertex_features)
    if k != hyper.num_keypoints:
        raise ConfigError(f"graph has {k} nodes, model expects {hyper.num_keypoints}")
    h = Tensor(graph.vertex_features)
    h = gcn_layer(h, graph.adjacency, params.gcn_w1, "relu")
    h = gcn_layer(h, graph.adjacency, params.gcn_w2, "identity")
    return h.flatten()


def argmax_pixel(values):
    """Row, col of the maximum; earliest row then column on ties."""
    r, c = np.unravel_index(int(np.argmax(values)), values.shape)
    return int(r), int(c)


def _check_support(mask, name):
    if not (np.asarray(mask) > 0.0).any():
        raise NoSupport(f"{name} mask has no positive support")


def forward_pick(image_current, image_goal, mask_current, params):
    """Masked pick scores and their argmax pixel.

    The pick stream's one-channel output passes through exp (strictly
    positive) and is multiplied by the mask, so pixels off the mask score
    exactly zero and can never win the argmax.
    """
    _check_support(mask_current, "current")
    x = stack_images(image_current, image_goal)
    h, w = x.data.shape[1:]
    scores = fcn_forward(params.pick_fcn, x).reshape((h, w))
    q_pick = scores.exp() * Tensor(np.asarray(mask_current, dtype=np.float64))
    return q_pick, argmax_pixel(q_pick.data)


def place_kernel(query_map, pick_pixel, code_current, code_goal, hyper):
    """Cross-correlation kernel: query crop at the pick pixel plus the goal
    minus current graph-code difference.

    The difference is added as one term so identical codes leave the crop
    bitwise unchanged.
    """
    c, d = hyper.crop_size, hyper.feature_depth
    k_q = crop2d(query_map, pick_pixel, c)
    delta = (code_goal - code_current).reshape((d, c, c))
    return k_q + delta


def forward_place(image_current, image_goal, pick_pixel, code_current, code_goal, mask_goal, params):
    """Masked place scores and their argmax pixel.

    The key stream is cross-correlated with the composed kernel; the
    response passes through exp and is gated by the goal mask.
    """
    _check_support(mask_goal, "goal")
    hyper = params.hyper
    x = stack_images(image_current, image_goal)
    h, w = x.data.shape[1:]
    query_map = fcn_forward(params.query_fcn, x)
    key_map = fcn_forward(params.key_fcn, x)
    kernel = place_kernel(query_map, pick_pixel, code_current, code_goal, hyper)
    response = conv2d(
        key_map, kernel.reshape((1, hyper.feature_depth, hyper.crop_size, hyper.crop_size))
    ).reshape((h, w))
    q_place = response.exp() * Tensor(np.asarray(mask_goal, dtype=np.float64))
    return q_place, argmax_pixel(q_place.data)


def observe(image_current, image_goal, hyper):
    """Keypoints, graphs, and masks for an image pair.

    Goal keypoints are optionally reordered to match the current ones by
    nearest position, so the two graph codes subtract node by node.
    Returns (kps_current, kps_goal, graph_current, graph_goal, mask_current,
    mask_goal).
    """
    kps_t = extract_keypoints(image_current, hyper.num_keypoints, hyper.intensity_threshold)
    kps_g = extract_keypoints(image_goal, hyper.num_keypoints, hyper.intensity_threshold)
    if hyper.align_goal_nodes:
        kps_g = align_keypoints(kps_t, kps_g)
    h, w = hyper.image_h, hyper.image_w
    graph_t = build_graph(kps_t, h, w)
    graph_g = build_graph(kps_g, h, w)
    mask_t = gaussian_mask(kps_t, hyper.mask_sigma, h, w)
    mask_g = gaussian_mask(kps_g, hyper.mask_sigma, h, w)
    return kps_t, kps_g, graph_t, graph_g, mask_t, mask_g


def act(image_current, image_goal, params):
    """Full policy: images in, pick-and-place pixels out.  Deterministic."""
    frozen = params.frozen()
    hyper = frozen.hyper
    _, _, graph_t, graph_g, mask_t, mask_g = observe(image_current, image_goal, hyper)
    code_t = encode_graph(graph_t, frozen)
    code_g = encode_graph(graph_g, frozen)
    _, pick = forward_pick(image_current, image_goal, mask_t, frozen)
    _, place = forward_place(image_current, image_goal, pick, code_t, code_g, mask_g, frozen)
    return PickPlaceAction(pick=pick, place=place)


# ---- checkpoint io ----


def _hyper_pack(hyper):
    return struct.pack(
        "<9iB2d",
        hyper.image_h,
        hyper.image_w,
        hyper.num_keypoints,
        hyper.crop_size,
        hyper.feature_depth,
        hyper.gcn_hidden,
        hyper.fcn_hidden,
        hyper.fcn_layers,
        hyper.kernel_size,
        int(hyper.align_goal_nodes),
        hyper.mask_sigma,
        hyper.intensity_threshold,
    )


_HYPER_SIZE = struct.calcsize("<9iB2d")


def _hyper_unpack(blob):
    vals = struct.unpack("<9iB2d", blob)
    return ModelHyper(*vals[:9], bool(vals[9]), vals[10], vals[11])


def save_params(params, path):
    """Write a checkpoint: magic, version, hyperparameters, then each array
    as a dimension header plus little-endian float64 values."""
    arrays = [t.data for t in params.parameters()]
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<i", CHECKPOINT_VERSION))
        f.write(_hyper_pack(params.hyper))
        f.write(struct.pack("<i", len(arrays)))
        for a in arrays:
            f.write(struct.pack("<i", a.ndim))
            f.write(struct.pack(f"<{a.ndim}i", *a.shape))
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_exact(f, n, what):
    blob = f.read(n)
    if len(blob) != n:
        raise TruncatedFile(f"checkpoint ended while reading {what}")
    return blob


def load_params(path):
    """Read a checkpoint written by save_params; arrays come back trainable."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != CHECKPOINT_MAGIC:
            raise BadMagic(f"{path} is not a checkpoint file")
        (version,) = struct.unpack("<i", _read_exact(f, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise VersionMismatch(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        hyper = _hyper_unpack(_read_exact(f, _HYPER_SIZE, "hyperparameters"))
        (n_arrays,) = struct.unpack("<i", _read_exact(f, 4, "array count"))
        arrays = []
        for i in range(n_arrays):
            (ndim,) = struct.unpack("<i", _read_exact(f, 4, f"array {i} rank"))
            shape = struct.unpack(f"<{ndim}i", _read_exact(f, 4 * ndim, f"array {i} shape"))
            count = int(np.prod(shape, dtype=np.int64))
            blob = _read_exact(f, 8 * count, f"array {i} values")
            data = np.frombuffer(blob, dtype="<f8").astype(np.float64).reshape(shape)
            arrays.append(Tensor(data, requires_grad=True))
        extra = f.read(1)
    if extra:
        raise TruncatedFile(f"{path} has trailing bytes after the last array")

    expected = 2 * 3 * hyper.fcn_layers + 2
    if n_arrays != expected:
        raise TruncatedFile(f"checkpoint holds {n_arrays} arrays, expected {expected}")
    it = iter(arrays)

    def take_stack():
        return [(next(it), next(it)) for _ in range(hyper.fcn_layers)]

    pick, query, key = take_stack(), take_stack(), take_stack()
    return ModelParams(hyper, pick, query, key, next(it), next(it))
