"""Slow, obvious reference implementations used as test oracles.

Nothing here imports protoloss: every formula is spelled out with plain loops
so the package's vectorized code is checked against an independent route.
"""
import math

import numpy as np


def dot(u, v):
    return sum(a * b for a, b in zip(u, v))


def dist(u, v):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v)))


def brute_nearest_sample(C, h, y):
    best, best_j = math.inf, None
    for j, c in enumerate(C):
        if j == y:
            continue
        d = dist(h, c)
        if d < best:
            best, best_j = d, j
    return best_j


def brute_nearest_class(C, j):
    best, best_k = math.inf, None
    for k, c in enumerate(C):
        if k == j:
            continue
        d = dist(C[j], c)
        if d < best:
            best, best_k = d, k
    return best_k


def naive_logits(H, C, alpha):
    return [[dot(h, c) / alpha for c in C] for h in H]


def naive_ce(Z, labels):
    total = 0.0
    for z, y in zip(Z, labels):
        ex = [math.exp(v) for v in z]
        total -= math.log(ex[y] / sum(ex))
    return total / len(labels)


def naive_center(H, C, labels):
    return sum(dist(h, C[y]) ** 2 for h, y in zip(H, labels)) / (2 * len(labels))


def l_half(v, eps=0.0):
    return sum((t * t + eps) ** 0.25 for t in v)


def naive_sample_neg(H, C, labels, eps=0.0):
    total = 0.0
    for h, y in zip(H, labels):
        j = brute_nearest_sample(C, h, y)
        total += l_half([a - b for a, b in zip(h, C[j])], eps)
    return -total / (2 * len(labels))


def naive_class_neg(C, eps=0.0):
    total = 0.0
    for j in range(len(C)):
        k = brute_nearest_class(C, j)
        total += l_half([a - b for a, b in zip(C[j], C[k])], eps)
    return -total / (2 * len(C))


def naive_dpnp(H, C, labels, alpha, lp, ls, lc, eps=0.0):
    ce = naive_ce(naive_logits(H, C, alpha), labels)
    return (ce + lp * naive_center(H, C, labels)
            + ls * naive_sample_neg(H, C, labels, eps) + lc * naive_class_neg(C, eps))


def naive_mlp(x, weights, biases):
    """Row-at-a-time ReLU MLP with (out, in) weights."""
    out = []
    for row in x:
        h = list(row)
        for k, (W, b) in enumerate(zip(weights, biases)):
            h = [dot(w, h) + bb for w, bb in zip(W, b)]
            if k < len(weights) - 1:
                h = [max(v, 0.0) for v in h]
        out.append(h)
    return out


def angle_deg(u, v):
    cu = math.sqrt(dot(u, u))
    cv = math.sqrt(dot(v, v))
    c = dot(u, v) / (cu * cv)
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def naive_sep_stats(C):
    M = len(C)
    nn = []
    for j in range(M):
        nn.append(min(angle_deg(C[j], C[k]) for k in range(M) if k != j))
    mean = sum(nn) / M
    std = math.sqrt(sum((a - mean) ** 2 for a in nn) / M)
    return min(nn), mean, std


def naive_scr(H, labels, C):
    M = len(C)
    ratios = []
    for j in range(M):
        sep = min(dist(C[j], C[k]) for k in range(M) if k != j)
        members = [h for h, y in zip(H, labels) if y == j]
        compact = sum(dist(h, C[j]) for h in members) / len(members)
        ratios.append(sep / compact)
    return sum(ratios) / M


def finite_difference(f, x, step=1e-5):
    """Central differences of scalar ``f`` at array ``x`` (any shape)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return g


def max_min_angle(M, d, seed=0, iters=3000, restarts=3):
    """Largest achievable minimum pairwise angle (degrees) for M unit vectors in R^d.

    Projected gradient descent on a soft-max of pairwise cosines (equivalent
    to maximizing the smallest angle), with a sharpening temperature and a
    decaying step. Independent of the prototype code.
    """
    best = 0.0
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(M, 1)
    for _ in range(restarts):
        U = rng.standard_normal((M, d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        for t in range(iters):
            frac = t / iters
            beta = 10.0 * 100.0 ** frac
            lr = 0.2 * 0.01 ** frac
            G = U @ U.T
            cos = G[iu]
            w = np.exp(beta * (cos - cos.max()))
            w /= w.sum()
            W = np.zeros((M, M))
            W[iu] = w
            W = W + W.T
            U = U - lr * (W @ U)
            U /= np.linalg.norm(U, axis=1, keepdims=True)
        G = np.clip(U @ U.T, -1, 1)
        best = max(best, float(np.degrees(np.arccos(G[iu])).min()))
    return best
