"""Slow, loop-based reference implementations used by the tests."""
import math

import numpy as np


def dp(pred, s, mask):
    counts = {0: [0, 0], 1: [0, 0]}
    for p, g, m in zip(pred, s, mask):
        if m:
            counts[int(g)][0] += int(p)
            counts[int(g)][1] += 1
    return abs(counts[0][0] / counts[0][1] - counts[1][0] / counts[1][1])


def eo(pred, y, s, mask):
    return dp([p for p, t, m in zip(pred, y, mask) if m and t == 1],
              [g for g, t, m in zip(s, y, mask) if m and t == 1],
              [True] * sum(1 for t, m in zip(y, mask) if m and t == 1))


def acc_f1(pred, y, mask):
    pairs = [(int(p), int(t)) for p, t, m in zip(pred, y, mask) if m]
    acc = sum(p == t for p, t in pairs) / len(pairs)
    tp = sum(p == 1 and t == 1 for p, t in pairs)
    if tp == 0:
        return acc, 0.0
    precision = tp / sum(p == 1 for p, _ in pairs)
    recall = tp / sum(t == 1 for _, t in pairs)
    return acc, 2 * precision * recall / (precision + recall)


def avg_het_degree(n, edges, s):
    """``edges``: list of (i, j, multiplicity), each direction listed."""
    return sum(w for i, j, w in edges if s[i] != s[j]) / n


def counterfactuals(x, s, k):
    """Exhaustive top-k search, ties to the smaller id."""
    n = len(x)
    out = []
    for i in range(n):
        dists = sorted((sum((a - b) ** 2 for a, b in zip(x[i], x[j])), j) for j in range(n) if j != i)
        top = [j for _, j in dists[:k]]
        out.append(next((j for j in top if s[j] != s[i]), -1))
    return out


def sample_std(values):
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))


def numeric_grads(loss_fn, params, h=1e-5):
    """Central differences of ``loss_fn()`` wrt every entry of every array in
    ``params`` (perturbed in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_fn()
            p[idx] = old - h
            down = loss_fn()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(np.abs(a) + np.abs(n), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst
