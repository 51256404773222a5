"""Group fairness, classification and structural bias metrics.

All rates are fractions in [0, 1].  Group-conditional rates raise
:class:`UndefinedMetricError` when a conditioning group is empty rather than
reporting a vacuous zero gap.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .graph import Graph


class UndefinedMetricError(ValueError):
    pass


def _mask(mask, n):
    if mask is None:
        return np.ones(n, dtype=bool)
    mask = np.asarray(mask)
    if mask.dtype != bool:
        out = np.zeros(n, dtype=bool)
        out[mask] = True
        return out
    return mask


def _group_rate(pred, select, what):
    count = int(select.sum())
    if count == 0:
        raise UndefinedMetricError(what)
    return int(pred[select].sum()) / count


def group_positive_rates(pred, s, mask=None) -> tuple[float, float]:
    pred, s = np.asarray(pred), np.asarray(s)
    m = _mask(mask, s.size)
    return (_group_rate(pred, m & (s == 0), "group S=0 empty"),
            _group_rate(pred, m & (s == 1), "group S=1 empty"))


def demographic_parity(pred, s, mask=None) -> float:
    """|P(pred=1 | s=0) - P(pred=1 | s=1)| over the masked nodes."""
    r0, r1 = group_positive_rates(pred, s, mask)
    return abs(r0 - r1)


def equality_of_opportunity(pred, y, s, mask=None) -> float:
    """Gap in true-positive rates between the two sensitive groups."""
    pred, y, s = np.asarray(pred), np.asarray(y), np.asarray(s)
    m = _mask(mask, s.size) & (y == 1)
    r0 = _group_rate(pred, m & (s == 0), "no positives in S=0")
    r1 = _group_rate(pred, m & (s == 1), "no positives in S=1")
    return abs(r0 - r1)


def classification_metrics(pred, y, mask=None) -> tuple[float, float]:
    """Accuracy and F1 of class 1.  F1 is 0 when there are no true positives."""
    pred, y = np.asarray(pred), np.asarray(y)
    m = _mask(mask, y.size)
    n = int(m.sum())
    if n == 0:
        raise UndefinedMetricError("empty mask")
    p, t = pred[m], y[m]
    acc = int((p == t).sum()) / n
    tp = int(((p == 1) & (t == 1)).sum())
    fp = int(((p == 1) & (t == 0)).sum())
    fn = int(((p == 0) & (t == 1)).sum())
    f1 = 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
    return acc, f1


def _edge_multiplicities(graph: Graph) -> np.ndarray:
    return np.rint(graph.edge_weights).astype(np.int64)


def heterogeneous_degrees(graph: Graph, s) -> np.ndarray:
    """Per-node count of neighbors with a different sensitive value."""
    s = np.asarray(s)
    rows = graph.row_of_edges()
    hetero = s[rows] != s[graph.col_indices]
    return np.bincount(rows, weights=_edge_multiplicities(graph) * hetero,
                       minlength=graph.num_nodes).astype(np.int64)


def homogeneous_degrees(graph: Graph, s) -> np.ndarray:
    s = np.asarray(s)
    rows = graph.row_of_edges()
    homo = s[rows] == s[graph.col_indices]
    return np.bincount(rows, weights=_edge_multiplicities(graph) * homo,
                       minlength=graph.num_nodes).astype(np.int64)


def avg_degree(graph: Graph) -> float:
    return int(_edge_multiplicities(graph).sum()) / graph.num_nodes


def avg_heterogeneous_degree(graph: Graph, s) -> float:
    return int(heterogeneous_degrees(graph, s).sum()) / graph.num_nodes


def avg_homogeneous_degree(graph: Graph, s) -> float:
    return int(homogeneous_degrees(graph, s).sum()) / graph.num_nodes


def count_nodes_without_heterogeneous_neighbors(graph: Graph, s) -> int:
    return int((heterogeneous_degrees(graph, s) == 0).sum())


@dataclass(frozen=True)
class BiasDiagnostics:
    avg_degree: float
    avg_heterogeneous_degree: float
    nodes_without_heterogeneous_neighbors: int

    @classmethod
    def of(cls, graph: Graph, s) -> "BiasDiagnostics":
        return cls(avg_degree(graph), avg_heterogeneous_degree(graph, s),
                   count_nodes_without_heterogeneous_neighbors(graph, s))


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    f1: float
    dp: float
    eo: float
    positive_rates: tuple[float, float]

    def to_dict(self) -> dict:
        return {"acc": self.accuracy, "f1": self.f1, "dp": self.dp, "eo": self.eo,
                "positive_rates": list(self.positive_rates)}

    @classmethod
    def from_dict(cls, doc) -> "MetricsReport":
        return cls(doc["acc"], doc["f1"], doc["dp"], doc["eo"], tuple(doc["positive_rates"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_markdown(self, name: str = "model") -> str:
        return markdown_table([(name, {k: (v, None) for k, v in self.to_dict().items()
                                       if k != "positive_rates"})])


def compute_report(pred, y, s, mask=None) -> MetricsReport:
    acc, f1 = classification_metrics(pred, y, mask)
    rates = group_positive_rates(pred, s, mask)
    return MetricsReport(acc, f1, abs(rates[0] - rates[1]), equality_of_opportunity(pred, y, s, mask), rates)


def _cell(mean, std):
    if std is None:
        return f"{100 * mean:.2f}"
    return f"{100 * mean:.2f}±{100 * std:.2f}"


def markdown_table(rows) -> str:
    """Render ``[(name, {"f1": (mean, std), "acc": ..., "dp": ..., "eo": ...})]``.

    Values are printed as percentages with two decimals.
    """
    lines = ["| Model | F1 | Acc | DP | EO |", "|---|---|---|---|---|"]
    for name, cells in rows:
        lines.append("| " + " | ".join([name] + [_cell(*cells[k]) for k in ("f1", "acc", "dp", "eo")]) + " |")
    return "\n".join(lines) + "\n"


def diagnostics_dict(d: BiasDiagnostics) -> dict:
    return asdict(d)
