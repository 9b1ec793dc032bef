"""Trust but verify: backprop against finite differences.

The training code relies on a small reverse-mode engine written from
scratch, so this demo rebuilds confidence the same way the test suite
does: perturb each input of a composite computation by +/- eps, take the
centered difference of the loss, and compare against the gradient the
engine reports.  Double precision makes agreement to ~1e-6 routine.
"""

import numpy as np

from ropebench.autodiff import Tensor, conv2d, crop2d, gcn_layer, spatial_softmax_ce


def numeric_gradient(f, x, eps=1e-5):
    g = np.zeros_like(x.data)
    flat = x.data.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f()
        flat[i] = keep - eps
        lo = f()
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def check(name, loss_fn, *tensors):
    loss = loss_fn()
    for t in tensors:
        t.zero_grad()
    loss.backward()
    worst = 0.0
    for t in tensors:
        numeric = numeric_gradient(lambda: float(loss_fn().data), t)
        scale = max(np.abs(numeric).max(), 1e-12)
        worst = max(worst, np.abs(t.grad - numeric).max() / scale)
    print(f"{name}: max relative gradient error {worst:.2e}")


def main():
    rng = np.random.default_rng(0)

    x = Tensor(rng.normal(size=(2, 8, 8)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    check("conv2d + relu + sum", lambda: conv2d(x, w, b).relu().sum(), x, w, b)

    feats = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
    gw = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    adj = np.eye(5)
    adj[0, 1] = adj[1, 0] = adj[2, 3] = adj[3, 2] = 1.0
    check("graph convolution", lambda: gcn_layer(feats, adj, gw).sum(), feats, gw)

    scores = Tensor(rng.normal(size=(6, 6)), requires_grad=True)
    check("spatial softmax cross-entropy", lambda: spatial_softmax_ce(scores, (2, 4)), scores)

    # A miniature of the place stream: crop a feature map, use it as a kernel.
    feat_map = Tensor(rng.normal(size=(2, 8, 8)), requires_grad=True)
    key_map = Tensor(rng.normal(size=(2, 8, 8)), requires_grad=True)

    def place_loss():
        kernel = crop2d(feat_map, (4, 4), 4).reshape((1, 2, 4, 4))
        response = conv2d(key_map, kernel).reshape((8, 8))
        return spatial_softmax_ce(response, (3, 3))

    check("crop -> correlate -> cross-entropy", place_loss, feat_map, key_map)


if __name__ == "__main__":
    main()
