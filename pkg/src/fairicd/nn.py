"""A small float64 GNN engine with hand-written reverse-mode gradients.

Layers cache what their backward pass needs during ``forward``; a
:class:`GNNModel` strings layers together with ReLU and inverted dropout in
between and records everything in a :class:`ForwardTrace`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import Graph, gcn_normalize

DENSE_LIMIT = 5000


class NonFiniteError(FloatingPointError):
    pass


class TraceError(RuntimeError):
    pass


def check_finite(arr, what="tensor"):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _operator(graph: Graph, dense_limit: int):
    mat = graph.to_scipy()
    return mat.toarray() if graph.num_nodes <= dense_limit else mat


class GraphOps:
    """Propagation matrices for one graph, built lazily per layer kind.

    ``gcn``: normalized adjacency with self-loops.  ``sum``: raw adjacency
    (GIN adds the self term itself).  ``mean``: row-normalized adjacency, zero
    rows for isolated nodes.  Graphs up to ``dense_limit`` nodes use dense
    arrays, larger ones CSR.
    """

    def __init__(self, graph: Graph, dense_limit: int = DENSE_LIMIT):
        self.graph = graph
        self.dense_limit = dense_limit
        self._cache = {}

    def get(self, kind: str):
        if kind not in self._cache:
            if kind == "gcn":
                op = _operator(gcn_normalize(self.graph), self.dense_limit)
            elif kind == "sum":
                op = _operator(self.graph, self.dense_limit)
            elif kind == "mean":
                deg = self.graph.weighted_degrees()
                inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
                op = _operator(Graph.from_scipy(sp.diags(inv) @ self.graph.to_scipy()), self.dense_limit)
            else:
                raise ValueError(f"unknown propagation kind {kind!r}")
            self._cache[kind] = op
        return self._cache[kind]


def _tmatmul(op, g):
    return op.T @ g


class Layer:
    kind = "layer"
    params: list

    def forward(self, h, ops):
        raise NotImplementedError

    def backward(self, cache, grad_out):
        raise NotImplementedError


class DenseLayer(Layer):
    kind = "dense"

    def __init__(self, weight, bias):
        self.params = [np.asarray(weight, dtype=np.float64), np.asarray(bias, dtype=np.float64)]

    @classmethod
    def init(cls, rng, fan_in, fan_out):
        return cls(glorot(rng, fan_in, fan_out), np.zeros(fan_out))

    def forward(self, h, ops):
        w, b = self.params
        return h @ w + b, h

    def backward(self, h, g):
        w, _ = self.params
        return g @ w.T, [h.T @ g, g.sum(axis=0)]


class GCNLayer(Layer):
    """``Â H W + b``."""

    kind = "gcn"

    def __init__(self, weight, bias):
        self.params = [np.asarray(weight, dtype=np.float64), np.asarray(bias, dtype=np.float64)]

    @classmethod
    def init(cls, rng, fan_in, fan_out):
        return cls(glorot(rng, fan_in, fan_out), np.zeros(fan_out))

    def forward(self, h, ops):
        w, b = self.params
        op = ops.get("gcn")
        agg = op @ h
        return agg @ w + b, (op, agg)

    def backward(self, cache, g):
        op, agg = cache
        w, _ = self.params
        return _tmatmul(op, g @ w.T), [agg.T @ g, g.sum(axis=0)]


class GINLayer(Layer):
    """Sum aggregation with self term, followed by a two-layer MLP.

    ``MLP(h_i + sum_j h_j)``; the self-weight epsilon is fixed at zero.
    """

    kind = "gin"

    def __init__(self, w1, b1, w2, b2):
        self.params = [np.asarray(p, dtype=np.float64) for p in (w1, b1, w2, b2)]

    @classmethod
    def init(cls, rng, fan_in, fan_out):
        return cls(glorot(rng, fan_in, fan_out), np.zeros(fan_out),
                   glorot(rng, fan_out, fan_out), np.zeros(fan_out))

    def forward(self, h, ops):
        w1, b1, w2, b2 = self.params
        op = ops.get("sum")
        agg = h + op @ h
        pre = agg @ w1 + b1
        hid = np.maximum(pre, 0.0)
        return hid @ w2 + b2, (op, agg, pre, hid)

    def backward(self, cache, g):
        op, agg, pre, hid = cache
        w1, _, w2, _ = self.params
        g_hid = (g @ w2.T) * (pre > 0)
        g_agg = g_hid @ w1.T
        grads = [agg.T @ g_hid, g_hid.sum(axis=0), hid.T @ g, g.sum(axis=0)]
        return g_agg + _tmatmul(op, g_agg), grads


class SAGELayer(Layer):
    """``h_i W_self + mean_j(h_j) W_neigh + b``, i.e. one weight applied to
    the concatenation of the node and its neighbor mean."""

    kind = "sage"

    def __init__(self, w_self, w_neigh, bias):
        self.params = [np.asarray(p, dtype=np.float64) for p in (w_self, w_neigh, bias)]

    @classmethod
    def init(cls, rng, fan_in, fan_out):
        w = glorot(rng, 2 * fan_in, fan_out)
        return cls(w[:fan_in], w[fan_in:], np.zeros(fan_out))

    def forward(self, h, ops):
        w_self, w_neigh, b = self.params
        op = ops.get("mean")
        agg = op @ h
        return h @ w_self + agg @ w_neigh + b, (op, h, agg)

    def backward(self, cache, g):
        op, h, agg = cache
        w_self, w_neigh, _ = self.params
        grad_h = g @ w_self.T + _tmatmul(op, g @ w_neigh.T)
        return grad_h, [h.T @ g, agg.T @ g, g.sum(axis=0)]


LAYER_TYPES = {cls.kind: cls for cls in (DenseLayer, GCNLayer, GINLayer, SAGELayer)}


@dataclass
class ForwardTrace:
    """Per-layer caches of one forward pass; consumed by a single backward."""

    caches: list = field(default_factory=list)
    pre_activations: list = field(default_factory=list)
    dropout_masks: list = field(default_factory=list)
    activations: list = field(default_factory=list)
    output_shape: tuple = ()
    consumed: bool = False

    @property
    def representation(self):
        """Input of the last layer before dropout (the encoder output)."""
        return self.activations[-1]


class GNNModel:
    """A stack of layers; ReLU then dropout between consecutive layers.

    The last layer produces logits with no activation.  When the last layer is
    a dense head, the activations feeding it are the node representations
    exposed to the discriminator.
    """

    def __init__(self, layers, dropout: float = 0.0):
        self.layers = list(layers)
        self.dropout = float(dropout)

    @classmethod
    def build(cls, backbone: str, in_dim: int, hidden: int, num_classes: int, num_layers: int,
              dropout: float, rng, head: bool = True) -> "GNNModel":
        if backbone not in ("gcn", "gin", "sage"):
            raise ValueError(f"unknown backbone {backbone!r}")
        kind = LAYER_TYPES[backbone]
        dims = [in_dim] + [hidden] * num_layers
        if not head:
            dims[-1] = num_classes
        layers = [kind.init(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
        if head:
            layers.append(DenseLayer.init(rng, hidden, num_classes))
        return cls(layers, dropout)

    @property
    def params(self) -> list:
        return [p for layer in self.layers for p in layer.params]

    def set_params(self, values) -> None:
        values = list(values)
        i = 0
        for layer in self.layers:
            n = len(layer.params)
            layer.params = [np.array(v, dtype=np.float64) for v in values[i:i + n]]
            i += n

    def copy(self) -> "GNNModel":
        clone = GNNModel([LAYER_TYPES[l.kind](*[p.copy() for p in l.params]) for l in self.layers],
                         self.dropout)
        return clone

    def forward(self, x, ops: GraphOps, training: bool = False, rng=None):
        trace = ForwardTrace()
        h = np.asarray(x, dtype=np.float64)
        for idx, layer in enumerate(self.layers):
            if idx > 0:
                trace.pre_activations.append(h)
                h = np.maximum(h, 0.0)
                trace.activations.append(h)
                if training and self.dropout > 0:
                    keep = 1.0 - self.dropout
                    mask = (rng.random(h.shape) < keep) / keep
                    h = h * mask
                else:
                    mask = None
                trace.dropout_masks.append(mask)
            else:
                trace.activations.append(h)
                trace.pre_activations.append(None)
                trace.dropout_masks.append(None)
            h, cache = layer.forward(h, ops)
            trace.caches.append(cache)
        trace.output_shape = h.shape
        return check_finite(h, "logits"), trace

    def backward(self, trace: ForwardTrace, grad_logits, grad_repr=None) -> list:
        """Parameter gradients for ``grad_logits`` flowing into the output.

        ``grad_repr`` is an extra gradient with respect to
        ``trace.representation`` (e.g. from a discriminator).
        """
        if trace.consumed:
            raise TraceError("forward trace already consumed")
        if len(trace.caches) != len(self.layers):
            raise TraceError("trace does not match model depth")
        if np.shape(grad_logits) != trace.output_shape:
            raise TraceError("gradient shape mismatch")
        trace.consumed = True
        g = np.asarray(grad_logits, dtype=np.float64)
        grads = [None] * len(self.layers)
        last = len(self.layers) - 1
        for idx in range(last, -1, -1):
            g, grads[idx] = self.layers[idx].backward(trace.caches[idx], g)
            if idx == 0:
                break
            mask = trace.dropout_masks[idx]
            if mask is not None:
                g = g * mask
            if idx == last and grad_repr is not None:
                if np.shape(grad_repr) != g.shape:
                    raise TraceError("representation gradient shape mismatch")
                g = g + grad_repr
            g = g * (trace.pre_activations[idx] > 0)
        if last == 0 and grad_repr is not None:
            raise TraceError("single-layer model has no hidden representation")
        return [p for layer_grads in grads for p in layer_grads]

    def predict_proba(self, x, ops):
        logits, _ = self.forward(x, ops)
        return softmax(logits)

    def predict(self, x, ops):
        logits, _ = self.forward(x, ops)
        return logits.argmax(axis=1)

    def to_dict(self) -> dict:
        return {"dropout": self.dropout,
                "layers": [{"kind": l.kind, "params": [{"shape": list(p.shape), "values": p.ravel().tolist()}
                                                        for p in l.params]} for l in self.layers]}

    @classmethod
    def from_dict(cls, doc) -> "GNNModel":
        layers = []
        for spec in doc["layers"]:
            params = [np.array(p["values"], dtype=np.float64).reshape(p["shape"]) for p in spec["params"]]
            layers.append(LAYER_TYPES[spec["kind"]](*params))
        return cls(layers, doc["dropout"])


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_mask(mask, n):
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("empty mask")
    return mask, count


def softmax_cross_entropy(logits, y, mask=None):
    """Mean cross-entropy over masked rows and its gradient wrt ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    mask, count = _check_mask(mask, logits.shape[0])
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    idx = np.flatnonzero(mask)
    target = np.asarray(y)[idx]
    loss = -log_p[idx, target].sum() / count
    grad = np.zeros_like(logits)
    grad[idx] = np.exp(log_p[idx])
    grad[idx, target] -= 1.0
    grad /= count
    return float(loss), grad


def bce_with_logits(logits, targets, mask=None):
    """Mean binary cross-entropy of sigmoid(logits) against binary targets.

    Accepts a vector or an ``(n, 1)`` column; the gradient has the same shape.
    """
    logits = np.asarray(logits, dtype=np.float64)
    flat = logits.reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("targets must be binary")
    mask, count = _check_mask(mask, flat.size)
    # -[t log σ(z) + (1-t) log(1-σ(z))] = softplus(z) - t z
    per = np.logaddexp(0.0, flat) - t * flat
    loss = per[mask].sum() / count
    grad = np.where(mask, (expit(flat) - t) / count, 0.0)
    return float(loss), grad.reshape(logits.shape)


class Adam:
    """Adam with bias correction over a list of parameter arrays."""

    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> list:
        if len(params) != len(self.m) or any(p.shape != g.shape for p, g in zip(params, grads)):
            raise ValueError("parameter/gradient shapes do not match optimizer state")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def adam_step(params, grads, state: Adam, lr=None) -> list:
    if lr is not None:
        state.lr = lr
    return state.step(params, grads)
