"""Sensitive-attribute discriminator and the alternating min-max round."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Adam, GNNModel, GraphOps, bce_with_logits, check_finite, glorot, softmax_cross_entropy


class Discriminator:
    """One-hidden-layer MLP from representations to a single logit."""

    def __init__(self, params, lr: float = 0.01):
        self.params = [np.asarray(p, dtype=np.float64) for p in params]
        self.optimizer = Adam(self.params, lr=lr)

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng, lr: float = 0.01) -> "Discriminator":
        return cls([glorot(rng, in_dim, hidden), np.zeros(hidden), glorot(rng, hidden, 1), np.zeros(1)], lr)

    @property
    def in_dim(self) -> int:
        return self.params[0].shape[0]

    def forward(self, z):
        w1, b1, w2, b2 = self.params
        if z.shape[1] != self.in_dim:
            raise ValueError("representation width does not match discriminator")
        pre = z @ w1 + b1
        hid = np.maximum(pre, 0.0)
        logits = (hid @ w2 + b2).ravel()
        return check_finite(logits, "discriminator logits"), (z, pre, hid)

    def backward(self, cache, g):
        """Gradients for the parameters and for the input representations."""
        z, pre, hid = cache
        w1, _, w2, _ = self.params
        g = g.reshape(-1, 1)
        g_hid = (g @ w2.T) * (pre > 0)
        return [z.T @ g_hid, g_hid.sum(axis=0), hid.T @ g, g.sum(axis=0)], g_hid @ w1.T

    def loss(self, z, s):
        """Binary cross-entropy over all nodes with gradients."""
        logits, cache = self.forward(z)
        loss, g = bce_with_logits(logits, s)
        grads, grad_z = self.backward(cache, g)
        return loss, grads, grad_z

    def step(self, z, s) -> float:
        """One Adam step on fixed representations; returns the pre-step loss."""
        loss, grads, _ = self.loss(z, s)
        self.params = self.optimizer.step(self.params, grads)
        return loss

    def to_dict(self) -> dict:
        return {"lr": self.optimizer.lr,
                "params": [{"shape": list(p.shape), "values": p.ravel().tolist()} for p in self.params]}

    @classmethod
    def from_dict(cls, doc) -> "Discriminator":
        params = [np.array(p["values"], dtype=np.float64).reshape(p["shape"]) for p in doc["params"]]
        return cls(params, doc["lr"])


def discriminator_forward(disc: Discriminator, z):
    return disc.forward(np.asarray(z, dtype=np.float64))[0]


@dataclass(frozen=True)
class RoundLosses:
    cls_loss: float
    disc_loss: float


def classification_step(model: GNNModel, opt: Adam, x, ops: GraphOps, y, train_mask, rng) -> float:
    """One plain training step of the backbone."""
    logits, trace = model.forward(x, ops, training=True, rng=rng)
    loss, grad = softmax_cross_entropy(logits, y, train_mask)
    model.set_params(opt.step(model.params, model.backward(trace, grad)))
    return loss


def adversarial_round(model: GNNModel, opt: Adam, disc: Discriminator, x, ops: GraphOps, y, train_mask,
                      s, lam: float, rng, disc_steps: int = 1) -> RoundLosses:
    """Discriminator step(s), then an encoder step on ``L_cls - lam * L_d``.

    Both share one training-mode forward pass of the encoder: the
    discriminator treats its representations as constants, and the encoder
    step is taken against the freshly updated discriminator.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    logits, trace = model.forward(x, ops, training=True, rng=rng)
    z = trace.representation
    for _ in range(disc_steps):
        disc.step(z, s)

    cls_loss, grad_logits = softmax_cross_entropy(logits, y, train_mask)
    disc_loss, _, grad_z = disc.loss(z, s)
    grad_repr = -lam * grad_z if lam else None
    model.set_params(opt.step(model.params, model.backward(trace, grad_logits, grad_repr)))
    return RoundLosses(cls_loss, disc_loss)
