"""Regress each node's heterogeneous neighborhood mean from its own features
and use the regressor to shift features toward that neighborhood."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .augment import AugmentedGraph
from .nn import Adam, check_finite, glorot


@dataclass(frozen=True)
class UnbiasTrainConfig:
    lr: float = 0.01
    epochs: int = 300
    hidden_dim: int | None = None  # None: same as the feature dim; 0: a single linear map
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.activation not in ("relu", "identity"):
            raise ValueError("activation must be 'relu' or 'identity'")


class UnbiasMlp:
    """``D -> hidden -> D`` MLP, or a single ``D -> D`` affine map.

    The output layer starts at zero so an untrained model leaves features
    unchanged under :func:`debias_features`.
    """

    def __init__(self, params, activation: str = "relu"):
        self.params = [np.asarray(p, dtype=np.float64) for p in params]
        self.activation = activation
        if len(self.params) not in (2, 4):
            raise ValueError("expected one or two (weight, bias) pairs")
        if self.params[-2].shape[1] != self.params[0].shape[0]:
            raise ValueError("output dimension must equal input dimension")

    @classmethod
    def init(cls, dim: int, hidden_dim: int | None, rng, activation: str = "relu") -> "UnbiasMlp":
        hidden = dim if hidden_dim is None else hidden_dim
        if hidden == 0:
            return cls([np.zeros((dim, dim)), np.zeros(dim)], activation)
        return cls([glorot(rng, dim, hidden), np.zeros(hidden), np.zeros((hidden, dim)), np.zeros(dim)],
                   activation)

    @property
    def dim(self) -> int:
        return self.params[0].shape[0]

    def _act(self, pre):
        return np.maximum(pre, 0.0) if self.activation == "relu" else pre

    def forward(self, x):
        if len(self.params) == 2:
            w, b = self.params
            return x @ w + b, (x,)
        w1, b1, w2, b2 = self.params
        pre = x @ w1 + b1
        hid = self._act(pre)
        return hid @ w2 + b2, (x, pre, hid)

    def __call__(self, x):
        return self.forward(np.asarray(x, dtype=np.float64))[0]

    def backward(self, cache, g) -> list:
        if len(self.params) == 2:
            (x,) = cache
            return [x.T @ g, g.sum(axis=0)]
        x, pre, hid = cache
        _, _, w2, _ = self.params
        g_hid = g @ w2.T
        if self.activation == "relu":
            g_hid = g_hid * (pre > 0)
        return [x.T @ g_hid, g_hid.sum(axis=0), hid.T @ g, g.sum(axis=0)]

    def to_dict(self) -> dict:
        return {"activation": self.activation,
                "params": [{"shape": list(p.shape), "values": p.ravel().tolist()} for p in self.params]}

    @classmethod
    def from_dict(cls, doc) -> "UnbiasMlp":
        params = [np.array(p["values"], dtype=np.float64).reshape(p["shape"]) for p in doc["params"]]
        return cls(params, doc["activation"])


def mean_aggregate_targets(x, aug: AugmentedGraph):
    """Weighted mean of each node's neighbor features under the rewired graph.

    Returns ``(targets, valid)``; nodes without outgoing weight are not valid
    and get a zero target row.
    """
    x = np.asarray(x, dtype=np.float64)
    adj = aug.graph.to_scipy()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    valid = deg > 0
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=valid)
    targets = sp.diags(inv) @ (adj @ x)
    return np.asarray(targets), valid


def unbias_loss(mlp: UnbiasMlp, x, targets, valid):
    """Mean over valid nodes of ``||MLP(x_i) - target_i||^2`` and its gradients."""
    valid = np.asarray(valid, dtype=bool)
    count = int(valid.sum())
    if count == 0:
        raise ValueError("no valid nodes to fit")
    out, cache = mlp.forward(np.asarray(x, dtype=np.float64))
    diff = np.where(valid[:, None], out - targets, 0.0)
    loss = float(np.sum(diff * diff) / count)
    grads = mlp.backward(cache, 2.0 * diff / count)
    return loss, grads


def train_unbias_mlp(x, aug: AugmentedGraph, cfg: UnbiasTrainConfig = UnbiasTrainConfig(),
                     return_history: bool = False):
    """Full-batch Adam fit of the unbias MLP; deterministic for a given seed."""
    x = np.asarray(x, dtype=np.float64)
    targets, valid = mean_aggregate_targets(x, aug)
    if not valid.any():
        raise ValueError("augmented graph has no node with neighbors")
    rng = np.random.default_rng(cfg.seed)
    mlp = UnbiasMlp.init(x.shape[1], cfg.hidden_dim, rng, cfg.activation)
    opt = Adam(mlp.params, lr=cfg.lr)
    history = []
    for _ in range(cfg.epochs):
        loss, grads = unbias_loss(mlp, x, targets, valid)
        history.append(loss)
        mlp.params = opt.step(mlp.params, grads)
    history.append(unbias_loss(mlp, x, targets, valid)[0])
    check_finite(np.asarray(history), "unbias loss")
    return (mlp, history) if return_history else mlp


def debias_features(x, mlp: UnbiasMlp):
    """``X + MLP(X)`` for every node."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != mlp.dim:
        raise ValueError("feature dimension does not match the MLP")
    return check_finite(x + mlp(x), "debiased features")


def save_checkpoint(path, mlp: UnbiasMlp, cfg: UnbiasTrainConfig) -> None:
    doc = {"config": asdict(cfg), "mlp": mlp.to_dict()}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    return UnbiasMlp.from_dict(doc["mlp"]), UnbiasTrainConfig(**doc["config"])
