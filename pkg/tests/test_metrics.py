import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from fairicd.graph import Graph
from fairicd.metrics import (BiasDiagnostics, MetricsReport, UndefinedMetricError, avg_heterogeneous_degree,
                             classification_metrics, compute_report, count_nodes_without_heterogeneous_neighbors,
                             demographic_parity, equality_of_opportunity, markdown_table)


def test_dp_examples():
    assert demographic_parity([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0
    assert demographic_parity([1, 1, 1, 1], [0, 1, 0, 1]) == 0.0
    assert demographic_parity([1, 0, 1, 1], [0, 0, 1, 1]) == 0.5


def test_dp_empty_group_raises():
    with pytest.raises(UndefinedMetricError):
        demographic_parity([1, 0], [0, 0])
    with pytest.raises(UndefinedMetricError):
        demographic_parity([1, 0, 1], [0, 1, 1], mask=np.array([False, True, True]))


def test_eo_examples():
    assert equality_of_opportunity([1, 0, 1, 1], [1, 1, 1, 1], [0, 0, 1, 1]) == 0.5
    with pytest.raises(UndefinedMetricError, match="no positives in S=0"):
        equality_of_opportunity([1, 1], [0, 1], [0, 1])


def test_classification_examples():
    assert classification_metrics([1, 0, 1, 0], [1, 0, 0, 0]) == (0.75, pytest.approx(2 / 3))
    assert classification_metrics([0, 0], [1, 0]) == (0.5, 0.0)
    with pytest.raises(UndefinedMetricError):
        classification_metrics([1], [1], mask=np.array([False]))


def test_triangle_heterogeneous_degree():
    g = Graph.from_edges(3, [0, 1, 2], [1, 2, 0])
    assert avg_heterogeneous_degree(g, [0, 1, 1]) == 4 / 3
    assert count_nodes_without_heterogeneous_neighbors(g, [0, 1, 1]) == 0
    assert count_nodes_without_heterogeneous_neighbors(g, [1, 1, 1]) == 3


def test_heterogeneous_degree_uses_multiplicities():
    g = Graph.from_edges(2, [0], [1], weights=[3.0], symmetric=False, dedup=False)
    assert avg_heterogeneous_degree(g, [0, 1]) == 1.5
    d = BiasDiagnostics.of(g, [0, 1])
    assert d.avg_degree == 1.5 and d.nodes_without_heterogeneous_neighbors == 1


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 50).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n))))
def test_metrics_match_oracle(case):
    pred, y, s = case
    mask = [True] * len(pred)
    try:
        expected = oracles.dp(pred, s, mask)
    except ZeroDivisionError:
        with pytest.raises(UndefinedMetricError):
            demographic_parity(pred, s)
        return
    assert abs(demographic_parity(pred, s) - expected) <= 1e-12
    acc, f1 = classification_metrics(pred, y)
    o_acc, o_f1 = oracles.acc_f1(pred, y, mask)
    assert abs(acc - o_acc) <= 1e-12 and abs(f1 - o_f1) <= 1e-12


def test_report_round_trip_and_markdown():
    report = compute_report(np.array([1, 0, 1, 1]), np.array([1, 0, 1, 0]), np.array([0, 0, 1, 1]))
    assert report.dp == 0.5 and report.eo == 0.0
    assert MetricsReport.from_dict(report.to_dict()) == report
    table = markdown_table([("gcn", {"f1": (0.5, 0.01), "acc": (0.6906, 0.006), "dp": (0.0067, 0.0039),
                                     "eo": (0.0082, 0.0066)})])
    assert table.splitlines()[0] == "| Model | F1 | Acc | DP | EO |"
    assert table.splitlines()[2] == "| gcn | 50.00±1.00 | 69.06±0.60 | 0.67±0.39 | 0.82±0.66 |"
