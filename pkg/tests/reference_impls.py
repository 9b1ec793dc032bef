"""Slow, independent reference implementations used to check library code.

Everything here is written with explicit Python loops and no shared helpers
from the package under test, so agreement is meaningful.
"""

import numpy as np


def correspondence_family(n, topology, include_reversals=False):
    if topology == "ring":
        fam = [[(s + j) % n for j in range(n)] for s in range(n)]
        if include_reversals:
            fam += [[(s - j) % n for j in range(n)] for s in range(n)]
        return fam
    return [list(range(n)), list(range(n - 1, -1, -1))]


def mean_squared_distance(p_current, p_goal, remap):
    total = 0.0
    for j in range(len(p_goal)):
        dx = p_current[remap[j]][0] - p_goal[j][0]
        dy = p_current[remap[j]][1] - p_goal[j][1]
        total += dx * dx + dy * dy
    return total / len(p_goal)


def brute_force_correspondence(p_current, p_goal, topology, include_reversals=False):
    best_map, best_val = None, None
    for remap in correspondence_family(len(p_current), topology, include_reversals):
        val = mean_squared_distance(p_current, p_goal, remap)
        if best_val is None or val < best_val:
            best_map, best_val = remap, val
    return best_map, best_val


def brute_force_action(p_current, p_goal, topology, include_reversals=False):
    remap, _ = brute_force_correspondence(p_current, p_goal, topology, include_reversals)
    best_j, best_d = 0, -1.0
    for j in range(len(p_goal)):
        dx = p_current[remap[j]][0] - p_goal[j][0]
        dy = p_current[remap[j]][1] - p_goal[j][1]
        d = dx * dx + dy * dy
        if d > best_d:
            best_j, best_d = j, d
    return np.array(p_current[remap[best_j]]), np.array(p_goal[best_j])


def brute_force_completion(p_current, p_goal, topology, include_reversals=False):
    remap, _ = brute_force_correspondence(p_current, p_goal, topology, include_reversals)
    total = 0.0
    for j in range(len(p_goal)):
        dx = p_current[remap[j]][0] - p_goal[j][0]
        dy = p_current[remap[j]][1] - p_goal[j][1]
        total += (dx * dx + dy * dy) ** 0.5
    return total / len(p_goal)


def farthest_point_sample(foreground, k):
    """FPS over (row, col) pixel list: lexicographically smallest seed, then
    repeatedly the point with maximal min-distance to the chosen set, ties by
    lexicographic order."""
    pts = sorted(map(tuple, foreground))
    chosen = [pts[0]]
    while len(chosen) < k:
        best, best_d = None, -1.0
        for p in pts:
            d = min((p[0] - c[0]) ** 2 + (p[1] - c[1]) ** 2 for c in chosen)
            if d > best_d:
                best, best_d = p, d
        chosen.append(best)
    return chosen


def finite_difference_gradient(f, x, eps=1e-5):
    """Central-difference gradient of the scalar f() with respect to x,
    which f must read live (x is perturbed in place)."""
    grad = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = grad.ravel()
    for i in range(flat_x.size):
        old = flat_x[i]
        flat_x[i] = old + eps
        fp = f()
        flat_x[i] = old - eps
        fm = f()
        flat_x[i] = old
        flat_g[i] = (fp - fm) / (2.0 * eps)
    return grad


def max_relative_error(got, want):
    denom = max(float(np.abs(want).max()), 1e-12)
    return float(np.abs(np.asarray(got) - np.asarray(want)).max()) / denom


def reference_corr2d(x, w, bias=None, padding="same"):
    """Direct-summation cross-correlation of (C_in, H, W) with
    (C_out, C_in, k, k); 'same' pads k//2 on top/left."""
    c_out, c_in, k, _ = w.shape
    _, h, wd = x.shape
    if padding == "same":
        pt = pl = k // 2
        out_h, out_w = h, wd
    else:
        pt = pl = 0
        out_h, out_w = h - k + 1, wd - k + 1
    y = np.zeros((c_out, out_h, out_w))
    for o in range(c_out):
        for i in range(out_h):
            for j in range(out_w):
                acc = 0.0
                for c in range(c_in):
                    for u in range(k):
                        for v in range(k):
                            r = i - pt + u
                            s = j - pl + v
                            if 0 <= r < h and 0 <= s < wd:
                                acc += x[c][r][s] * w[o][c][u][v]
                y[o][i][j] = acc + (0.0 if bias is None else bias[o])
    return y


def two_nearest_adjacency(kps):
    """Adjacency from two nearest neighbors per vertex (ties to lower index),
    symmetrized, with self-loops."""
    k = len(kps)
    adj = [[0] * k for _ in range(k)]
    for i in range(k):
        dists = []
        for j in range(k):
            if j != i:
                d = (kps[i][0] - kps[j][0]) ** 2 + (kps[i][1] - kps[j][1]) ** 2
                dists.append((d, j))
        dists.sort()
        for _, j in dists[:2]:
            adj[i][j] = 1
    for i in range(k):
        adj[i][i] = 1
        for j in range(k):
            if adj[i][j] or adj[j][i]:
                adj[i][j] = adj[j][i] = 1
    return np.array(adj)


def dense_gcn_layer(h, adj, w, activation):
    """Normalized-adjacency graph convolution computed entry by entry."""
    k = adj.shape[0]
    deg = [float(sum(adj[i])) for i in range(k)]
    out = np.zeros((k, w.shape[1]))
    for i in range(k):
        for j in range(k):
            if adj[i][j]:
                coeff = 1.0 / (deg[i] * deg[j]) ** 0.5
                for f in range(w.shape[1]):
                    for g in range(h.shape[1]):
                        out[i][f] += coeff * h[j][g] * w[g][f]
    if activation == "relu":
        out = np.maximum(out, 0.0)
    return out
