import numpy as np
import pytest

import oracles
from fairicd.augment import REWIRED, AugmentedGraph, augment_graph, find_counterfactuals
from fairicd.graph import Graph
from fairicd.unbias import (UnbiasMlp, UnbiasTrainConfig, debias_features, load_checkpoint,
                            mean_aggregate_targets, save_checkpoint, train_unbias_mlp, unbias_loss)


def fixture(n=12, d=3, seed=0):
    rng = np.random.default_rng(seed)
    pairs = rng.integers(0, n, size=(3 * n, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    g = Graph.from_edges(n, pairs[:, 0], pairs[:, 1])
    s = np.arange(n) % 2
    x = rng.normal(size=(n, d))
    return x, augment_graph(g, s, find_counterfactuals(x, s, 3))


def test_targets_are_weighted_neighbor_means():
    x, aug = fixture()
    targets, valid = mean_aggregate_targets(x, aug)
    for i in range(x.shape[0]):
        sel = aug.src == i
        if not sel.any():
            assert not valid[i]
            continue
        w = aug.weight[sel]
        expected = (w[:, None] * x[aug.dst[sel]]).sum(axis=0) / w.sum()
        np.testing.assert_allclose(targets[i], expected, atol=1e-12)


@pytest.mark.parametrize("hidden", [None, 0, 4])
def test_unbias_loss_gradient(hidden):
    x, aug = fixture(seed=1)
    targets, valid = mean_aggregate_targets(x, aug)
    rng = np.random.default_rng(2)
    mlp = UnbiasMlp.init(3, hidden, rng)
    mlp.params = [p + 0.3 * rng.normal(size=p.shape) for p in mlp.params]
    _, grads = unbias_loss(mlp, x, targets, valid)
    numeric = oracles.numeric_grads(lambda: unbias_loss(mlp, x, targets, valid)[0], mlp.params)
    assert oracles.max_rel_error(grads, numeric) < 1e-4


def test_untrained_mlp_is_identity_on_features():
    x, _ = fixture()
    mlp = UnbiasMlp.init(3, None, np.random.default_rng(0))
    assert np.array_equal(debias_features(x, mlp), x)


def test_linearly_realizable_targets_are_fit():
    # a directed cycle over linearly independent rows: target_i = x_{i+1} = (x W)_i for some W
    n = 6
    x = np.random.default_rng(3).normal(size=(n, n))
    src = np.arange(n)
    aug = AugmentedGraph(n, src, (src + 1) % n, np.ones(n), np.full(n, REWIRED))
    mlp, history = train_unbias_mlp(x, aug, UnbiasTrainConfig(lr=0.02, epochs=3000, hidden_dim=0),
                                    return_history=True)
    assert history[-1] < 1e-6
    np.testing.assert_allclose(mlp(x), np.roll(x, -1, axis=0), atol=1e-2)


def test_training_is_deterministic():
    x, aug = fixture(seed=4)
    cfg = UnbiasTrainConfig(epochs=20, seed=7)
    a = train_unbias_mlp(x, aug, cfg)
    b = train_unbias_mlp(x, aug, cfg)
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))


def test_debias_rejects_dimension_mismatch():
    mlp = UnbiasMlp.init(3, None, np.random.default_rng(0))
    with pytest.raises(ValueError):
        debias_features(np.zeros((2, 4)), mlp)


def test_checkpoint_round_trip(tmp_path):
    x, aug = fixture(seed=5)
    cfg = UnbiasTrainConfig(epochs=5)
    mlp = train_unbias_mlp(x, aug, cfg)
    save_checkpoint(tmp_path / "unbias.json", mlp, cfg)
    back, back_cfg = load_checkpoint(tmp_path / "unbias.json")
    assert back_cfg == cfg
    assert np.array_equal(back(x), mlp(x))
