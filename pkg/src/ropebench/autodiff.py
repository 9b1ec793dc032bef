"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array; operations on tracked tensors record closures
that route the gradient of a scalar result back to every contributing leaf.
Operations whose inputs are all untracked produce plain constant tensors, so
inference builds no graph.  Everything runs in double precision with fixed
summation order, making repeated runs bitwise identical.

Provided operations: elementwise add/sub/mul (same shape or scalar), matrix
product, ReLU, exp, sum, reshape, indexing, zero-padded center crop, 2D
cross-correlation with optional bias, a degree-normalized graph convolution
layer, and softmax cross-entropy over the pixels of a score map.
"""

import numpy as np

from .errors import ConfigError, DegenerateGraph, NoGraph, ShapeMismatch


class Tensor:
    """A float64 array plus, when gradients are tracked, the closure that
    propagates its gradient to its parents."""

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backprop = None

    @classmethod
    def _from_op(cls, data, parents, backprop):
        out = cls(data)
        tracked = tuple(p for p in parents if p.requires_grad)
        if tracked:
            out.requires_grad = True
            out._parents = tracked
            out._backprop = backprop
        return out

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    # ---- graph traversal ----

    def backward(self):
        """Propagate d(self)/d(leaf) into every tracked leaf's .grad.

        Only a scalar result of a recorded computation can start a backward
        pass; a bare tensor with no recorded parents raises NoGraph.

        The pass consumes the graph: closures and parent links are cleared
        afterwards so the forward pass's large buffers are freed by reference
        counting instead of waiting on the cycle collector.
        """
        if self._backprop is None:
            raise NoGraph("tensor is not the result of a tracked computation")
        if self.data.size != 1:
            raise ShapeMismatch(f"backward needs a scalar, got shape {self.data.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backprop is not None:
                node._backprop()
        for node in order:
            node._backprop = None
            node._parents = ()

    # ---- elementwise arithmetic ----

    def _coerce(self, other):
        if isinstance(other, Tensor):
            if other.data.shape != self.data.shape:
                raise ShapeMismatch(f"shapes {self.data.shape} and {other.data.shape} differ")
            return other
        return Tensor(np.full_like(self.data, float(other)))

    def __add__(self, other):
        other = self._coerce(other)
        out = Tensor._from_op(self.data + other.data, (self, other), None)

        def backprop():
            if self.requires_grad:
                self._accum(out.grad)
            if other.requires_grad:
                other._accum(out.grad)

        out._backprop = backprop if out.requires_grad else None
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = self._coerce(other)
        out = Tensor._from_op(self.data * other.data, (self, other), None)

        def backprop():
            if self.requires_grad:
                self._accum(out.grad * other.data)
            if other.requires_grad:
                other._accum(out.grad * self.data)

        out._backprop = backprop if out.requires_grad else None
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(np.full_like(self.data, float(other)))
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __matmul__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2 or self.data.shape[1] != other.data.shape[0]:
            raise ShapeMismatch(
                f"matmul needs compatible 2-D shapes, got {self.data.shape} and {other.data.shape}"
            )
        out = Tensor._from_op(self.data @ other.data, (self, other), None)

        def backprop():
            if self.requires_grad:
                self._accum(out.grad @ other.data.T)
            if other.requires_grad:
                other._accum(self.data.T @ out.grad)

        out._backprop = backprop if out.requires_grad else None
        return out

    # ---- elementwise nonlinearities ----

    def relu(self):
        out = Tensor._from_op(np.maximum(self.data, 0.0), (self,), None)

        def backprop():
            self._accum(out.grad * (self.data > 0.0))

        out._backprop = backprop if out.requires_grad else None
        return out

    def exp(self):
        out = Tensor._from_op(np.exp(self.data), (self,), None)

        def backprop():
            self._accum(out.grad * out.data)

        out._backprop = backprop if out.requires_grad else None
        return out

    # ---- shape manipulation ----

    def sum(self):
        out = Tensor._from_op(np.array(self.data.sum()), (self,), None)

        def backprop():
            self._accum(np.broadcast_to(out.grad, self.data.shape))

        out._backprop = backprop if out.requires_grad else None
        return out

    def reshape(self, shape):
        out = Tensor._from_op(self.data.reshape(shape).copy(), (self,), None)

        def backprop():
            self._accum(out.grad.reshape(self.data.shape))

        out._backprop = backprop if out.requires_grad else None
        return out

    def flatten(self):
        return self.reshape(-1)

    def __getitem__(self, index):
        out = Tensor._from_op(self.data[index].copy(), (self,), None)

        def backprop():
            buf = np.zeros_like(self.data)
            np.add.at(buf, index, out.grad)
            self._accum(buf)

        out._backprop = backprop if out.requires_grad else None
        return out


def crop2d(x, center, size):
    """Zero-padded (C, size, size) crop of a (C, H, W) tensor.

    The window covers rows [r - size//2, r - size//2 + size) and likewise for
    columns, so even sizes sit half a pixel up-left of the center.
    """
    if x.data.ndim != 3:
        raise ShapeMismatch(f"crop2d needs (C, H, W), got {x.data.shape}")
    _, h, w = x.data.shape
    r0 = int(center[0]) - size // 2
    c0 = int(center[1]) - size // 2
    rs, re = max(r0, 0), min(r0 + size, h)
    cs, ce = max(c0, 0), min(c0 + size, w)
    data = np.zeros((x.data.shape[0], size, size), dtype=np.float64)
    if rs < re and cs < ce:
        data[:, rs - r0 : re - r0, cs - c0 : ce - c0] = x.data[:, rs:re, cs:ce]
    out = Tensor._from_op(data, (x,), None)

    def backprop():
        buf = np.zeros_like(x.data)
        if rs < re and cs < ce:
            buf[:, rs:re, cs:ce] = out.grad[:, rs - r0 : re - r0, cs - c0 : ce - c0]
        x._accum(buf)

    out._backprop = backprop if out.requires_grad else None
    return out


def _corr_raw(x, w, pt, pb, pl, pr):
    """Cross-correlation on raw arrays: (N, C, H, W) with (C_out, C, kh, kw)
    under the given per-side zero padding.  Returns the (N, C_out, H', W')
    result plus the flattened patch matrix reused for the weight gradient.
    """
    n, c, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    h2 = h + pt + pb - kh + 1
    w2 = wd + pl + pr - kw + 1
    xp = np.pad(x.transpose(0, 2, 3, 1), ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = np.empty((n, h2, w2, kh, kw, c), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            cols[:, :, :, u, v, :] = xp[:, u : u + h2, v : v + w2, :]
    cols = cols.reshape(n * h2 * w2, kh * kw * c)
    w2d = w.transpose(2, 3, 1, 0).reshape(kh * kw * c, c_out)
    # Returned channels-second view keeps its channels-last buffer, so the
    # next layer's transpose back to channels-last is free.
    y = (cols @ w2d).reshape(n, h2, w2, c_out).transpose(0, 3, 1, 2)
    return y, cols


def conv2d(x, weight, bias=None, padding="same"):
    """2D cross-correlation (no kernel flip) with optional per-channel bias.

    `x` is (C_in, H, W) or (N, C_in, H, W); `weight` is (C_out, C_in, k, k).
    'same' zero-padding keeps H and W (even k pads one extra row/column on
    the top/left); 'valid' applies none.  Output matches the input's rank.
    """
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    wd = weight.data
    if xd.ndim != 4 or wd.ndim != 4 or wd.shape[2] != wd.shape[3]:
        raise ShapeMismatch(f"bad conv shapes {x.data.shape} and {wd.shape}")
    if xd.shape[1] != wd.shape[1]:
        raise ShapeMismatch(f"input has {xd.shape[1]} channels, kernel expects {wd.shape[1]}")
    if bias is not None and bias.data.shape != (wd.shape[0],):
        raise ShapeMismatch(f"bias shape {bias.data.shape} != ({wd.shape[0]},)")
    k = wd.shape[2]
    if padding == "same":
        pt = pl = k // 2
        pb = pr = k - 1 - k // 2
    elif padding == "valid":
        pt = pb = pl = pr = 0
    else:
        raise ConfigError(f"padding must be 'same' or 'valid', got {padding!r}")

    yd, cols = _corr_raw(xd, wd, pt, pb, pl, pr)
    if bias is not None:
        yd += bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor._from_op(yd[0] if single else yd, parents, None)

    def backprop():
        g = out.grad[None] if single else out.grad
        n, c_out, h2, w2 = g.shape
        if bias is not None and bias.requires_grad:
            bias._accum(g.sum(axis=(0, 2, 3)))
        if weight.requires_grad:
            g2 = g.transpose(0, 2, 3, 1).reshape(n * h2 * w2, c_out)
            dw = (cols.T @ g2).reshape(k, k, xd.shape[1], c_out).transpose(3, 2, 0, 1)
            weight._accum(dw)
        if x.requires_grad:
            # Gradient w.r.t. the input is the correlation of the output
            # gradient with the channel-transposed, spatially flipped kernel
            # under complementary padding.
            wflip = wd[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            dx, _ = _corr_raw(g, wflip, k - 1 - pt, k - 1 - pb, k - 1 - pl, k - 1 - pr)
            x._accum(dx[0] if single else dx)

    out._backprop = backprop if out.requires_grad else None
    return out


def normalize_adjacency(adjacency):
    """Symmetric degree normalization D^{-1/2} A D^{-1/2} as a plain array."""
    a = np.asarray(adjacency, dtype=np.float64)
    deg = a.sum(axis=1)
    if (deg <= 0.0).any():
        raise DegenerateGraph("adjacency has a zero-degree vertex")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def gcn_layer(node_features, adjacency, weight, activation="relu"):
    """Graph convolution: activation(D^{-1/2} A D^{-1/2} @ H @ W).

    Each output feature aggregates neighbor features scaled by
    1/sqrt(deg_i * deg_j).  `adjacency` is a plain array (not differentiated);
    activation is 'relu' or 'identity'.
    """
    if activation not in ("relu", "identity"):
        raise ConfigError(f"unknown activation {activation!r}")
    norm = Tensor(normalize_adjacency(adjacency))
    out = norm @ (node_features @ weight)
    if activation == "relu":
        out = out.relu()
    return out


def spatial_softmax_ce(scores, target):
    """Cross-entropy of the softmax over all pixels of a 2-D score map
    against a single target pixel (row, col)."""
    if scores.data.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D score map, got {scores.data.shape}")
    h, w = scores.data.shape
    r, c = int(target[0]), int(target[1])
    if not (0 <= r < h and 0 <= c < w):
        raise ShapeMismatch(f"target {(r, c)} outside {h}x{w} map")
    z = scores.data.ravel()
    m = z.max()
    ez = np.exp(z - m)
    total = ez.sum()
    idx = r * w + c
    loss = np.log(total) + m - z[idx]
    out = Tensor._from_op(np.array(loss), (scores,), None)

    def backprop():
        p = ez / total
        p[idx] -= 1.0
        scores._accum(float(out.grad) * p.reshape(h, w))

    out._backprop = backprop if out.requires_grad else None
    return out
