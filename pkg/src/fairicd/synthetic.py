"""Two-group attributed graph generator with tunable homophily and bias.

Nodes are split evenly between ``s = 0`` and ``s = 1``.  Labels follow a
noisy linear rule on Gaussian "informative" features; ``bias_strength``
shifts a block of proxy features by ``±bias_strength / 2`` according to
``s`` and adds ``±bias_strength * LABEL_SHIFT`` to the label score, so the
observed labels themselves carry a group disparity.  Edges come from a
block model over (group, label) with within-group affinity ``homophily``.
"""
from __future__ import annotations

import numpy as np

from .graph import Dataset, Graph, SplitMasks, make_splits

LABEL_SHIFT = 0.1
LABEL_NOISE = 1.0

# Strongly group-homophilous graph whose proxy features separate the groups
# by two standard deviations.  Labels are only weakly tied to s, so a
# vanilla GNN's demographic-parity gap is mostly amplification that a fair
# model can remove at small accuracy cost.
BIASED_TESTBED = dict(n=2000, homophily=0.9, feature_signal=0.5, bias_strength=2.0, label_homophily=0.6)


def _sample_block_edges(rng, members_a, members_b, expected, same_block):
    if expected <= 0 or members_a.size == 0 or members_b.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    count = rng.poisson(expected)
    a = rng.choice(members_a, size=count)
    b = rng.choice(members_b, size=count)
    pairs = np.stack([a, b], axis=1)
    if same_block:
        pairs = pairs[a != b]
    return pairs


def generate_synthetic(n: int = 2000, homophily: float = 0.9, feature_signal: float = 1.0,
                       bias_strength: float = 1.0, seed: int = 0, num_features: int = 16,
                       num_bias_features: int = 4, avg_degree: float = 10.0,
                       label_homophily: float = 0.8, ratios=(0.5, 0.25, 0.25)) -> Dataset:
    """Draw a :class:`Dataset` with ``n`` nodes.

    ``homophily`` is the share of edge affinity given to same-group pairs
    (1 gives no cross-group edges, 0.5 no group preference).
    ``label_homophily`` plays the same role for label agreement.
    """
    if n < 4:
        raise ValueError("need at least 4 nodes")
    if not 0.0 <= homophily <= 1.0 or not 0.0 <= label_homophily <= 1.0:
        raise ValueError("homophily values must lie in [0, 1]")
    if not 0 <= num_bias_features < num_features:
        raise ValueError("need at least one informative feature")
    rng = np.random.default_rng(seed)

    s = np.zeros(n, dtype=np.int64)
    s[rng.permutation(n)[: n // 2]] = 1
    sign = 2.0 * s - 1.0

    d_info = num_features - num_bias_features
    info = rng.standard_normal((n, d_info))
    w = rng.standard_normal(d_info)
    w /= np.linalg.norm(w)
    score = feature_signal * (info @ w) + bias_strength * LABEL_SHIFT * sign \
        + LABEL_NOISE * rng.standard_normal(n)
    y = (score > 0).astype(np.int64)

    proxy = 0.5 * bias_strength * sign[:, None] + rng.standard_normal((n, num_bias_features))
    x = np.concatenate([info, proxy], axis=1)

    blocks = [np.flatnonzero((s == a) & (y == b)) for a in (0, 1) for b in (0, 1)]
    keys = [(a, b) for a in (0, 1) for b in (0, 1)]
    affinity = {}
    total = 0.0
    for i in range(4):
        for j in range(i, 4):
            aff = (homophily if keys[i][0] == keys[j][0] else 1.0 - homophily) \
                * (label_homophily if keys[i][1] == keys[j][1] else 1.0 - label_homophily)
            pairs = blocks[i].size * (blocks[i].size - 1) / 2 if i == j else blocks[i].size * blocks[j].size
            affinity[i, j] = (aff, pairs)
            total += aff * pairs
    scale = avg_degree * n / 2 / total if total > 0 else 0.0
    edges = [_sample_block_edges(rng, blocks[i], blocks[j], scale * aff * pairs, i == j)
             for (i, j), (aff, pairs) in affinity.items()]
    edges = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)
    graph = Graph.from_edges(n, edges[:, 0], edges[:, 1])

    ds = Dataset(graph, x, s, y, SplitMasks.empty(n),
                 feature_names=tuple([f"info{i}" for i in range(d_info)]
                                     + [f"proxy{i}" for i in range(num_bias_features)]))
    return ds.replace(splits=make_splits(ds, ratios, int(rng.integers(2**63))))


def biased_testbed(seed: int = 0) -> Dataset:
    return generate_synthetic(**BIASED_TESTBED, seed=seed)
