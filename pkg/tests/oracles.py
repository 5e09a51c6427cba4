"""Independent reference computations for the test-suite.

Everything here is deliberately naive (explicit loops, per-frame filtering,
central differences) and shares no code path with the package.
"""

import math

import numpy as np


def brute_force_counts(t, x, y, p, width, height, duration, dt, window_frames):
    """Per-frame filter-and-count of positive events in [k*dt - W*dt, k*dt)."""
    t = np.asarray(t)
    x = np.asarray(x)
    y = np.asarray(y)
    p = np.asarray(p)
    K = duration // dt
    out = np.zeros((K, height, width), dtype=np.int64)
    for k in range(1, K + 1):
        tk = k * dt
        sel = (p > 0) & (t >= tk - window_frames * dt) & (t < tk)
        np.add.at(out[k - 1], (y[sel], x[sel]), 1)
    return out


def brute_force_frames(t, x, y, p, width, height, duration, dt, window_frames, saturation):
    c = brute_force_counts(t, x, y, p, width, height, duration, dt, window_frames)
    return (np.minimum(c, saturation) / saturation).astype(np.float32)


def central_diff(f, X, h=1e-5):
    X = np.array(X, dtype=np.float64)
    g = np.zeros_like(X)
    it = np.nditer(X, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = X[idx]
        X[idx] = old + h
        fp = f(X)
        X[idx] = old - h
        fm = f(X)
        X[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def normwise_rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def ce_loop(P, G, weights, eps_log=1e-7):
    H, W = G.shape
    total = 0.0
    for i in range(H):
        for j in range(W):
            c = int(G[i, j])
            total += weights[c] * math.log(max(P[c, i, j], eps_log))
    return -total / (H * W)


def dice_loop(P, G_onehot, s=1.0):
    C, H, W = P.shape
    acc = 0.0
    for c in range(C):
        inter = psum = gsum = 0.0
        for i in range(H):
            for j in range(W):
                inter += P[c, i, j] * G_onehot[c, i, j]
                psum += P[c, i, j]
                gsum += G_onehot[c, i, j]
        acc += 1.0 - (2.0 * inter + s) / (psum + gsum + s)
    return acc / C


def smooth_loop(X):
    H, W = X.shape
    total = 0.0
    for i in range(H):
        for j in range(W):
            if j + 1 < W:
                total += abs(X[i, j + 1] - X[i, j])
            if i + 1 < H:
                total += abs(X[i + 1, j] - X[i, j])
    return total / (H * W)


def circ_loop(B, eps_grad=1e-8, eps_circ=1e-6):
    H, W = B.shape
    C = 0.0
    A = 0.0
    for i in range(H):
        for j in range(W):
            dx = B[i, j + 1] - B[i, j] if j + 1 < W else 0.0
            dy = B[i + 1, j] - B[i, j] if i + 1 < H else 0.0
            C += math.sqrt(dx * dx + dy * dy + eps_grad)
            A += B[i, j]
    return C * C / (4 * math.pi * A + eps_circ) / (H * W)


def centroid_loop(P):
    H, W = P.shape
    m = sx = sy = 0.0
    for i in range(H):
        for j in range(W):
            m += P[i, j]
            sx += j * P[i, j]
            sy += i * P[i, j]
    return sx / m, sy / m


def disk(H, W, cx, cy, r):
    yy, xx = np.mgrid[0:H, 0:W]
    return ((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r).astype(np.float64)


def two_pass_stats(values):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var), min(values), max(values)


def random_stream_arrays(rng, n, width, height, duration):
    t = rng.integers(0, duration, size=n)
    x = rng.integers(0, width, size=n)
    y = rng.integers(0, height, size=n)
    p = np.where(rng.random(n) < 0.6, 1, -1)
    return t, x, y, p
