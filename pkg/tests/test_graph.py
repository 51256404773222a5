import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairicd.graph import (MISSING_LABEL, Dataset, DatasetError, Graph, NodeSchema, SplitMasks,
                           gcn_normalize, load_dataset, make_splits, standardize_features)


def write_files(tmp_path, nodes, edges):
    node_file = tmp_path / "nodes.csv"
    edge_file = tmp_path / "edges.txt"
    node_file.write_text(nodes)
    edge_file.write_text(edges)
    return node_file, edge_file


NODES = """id,f0,f1,sensitive,label
10,1.0,0.5,0,1
20,2.0,0.1,1,0
30,3.0,0.7,1,
"""


def test_load_three_node_file(tmp_path):
    ds = load_dataset(*write_files(tmp_path, NODES, "# comment\n10 20\n20\t30\n"))
    assert ds.graph.degrees().tolist() == [1, 2, 1]
    assert ds.node_ids.tolist() == [10, 20, 30]
    assert ds.features.shape == (3, 2)
    assert ds.sensitive_col is None
    assert ds.labels.tolist() == [1, 0, MISSING_LABEL]
    assert ds.graph.is_symmetric()


def test_load_rejects_out_of_range_endpoint(tmp_path):
    with pytest.raises(DatasetError, match="endpoint out of range"):
        load_dataset(*write_files(tmp_path, NODES, "10 50\n"))


def test_load_rejects_duplicate_ids(tmp_path):
    nodes = "id,f0,sensitive,label\n1,0.0,0,1\n1,1.0,1,0\n"
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(*write_files(tmp_path, nodes, ""))


def test_load_rejects_nonbinary_sensitive(tmp_path):
    nodes = "id,f0,sensitive,label\n1,0.0,2,1\n2,1.0,1,0\n"
    with pytest.raises(DatasetError, match="sensitive"):
        load_dataset(*write_files(tmp_path, nodes, ""))


def test_load_dedups_and_drops_self_loops(tmp_path):
    ds = load_dataset(*write_files(tmp_path, NODES, "10 20\n20 10\n10 20\n30 30\n"))
    assert ds.graph.num_edges == 2


def test_sensitive_column_can_stay_in_features(tmp_path):
    schema = NodeSchema(sensitive_in_features=True)
    ds = load_dataset(*write_files(tmp_path, NODES, "10 20\n"), schema=schema)
    assert ds.feature_names[ds.sensitive_col] == "sensitive"
    assert ds.features[:, ds.sensitive_col].tolist() == [0, 1, 1]


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                                             max_size=30))))
def test_csr_round_trip_and_symmetry(case):
    n, pairs = case
    pairs = [(a, b) for a, b in pairs if a != b]
    src = [a for a, _ in pairs]
    dst = [b for _, b in pairs]
    g = Graph.from_edges(n, src, dst)
    expected = sorted({(a, b) for a, b in pairs} | {(b, a) for a, b in pairs})
    rows, cols, _ = g.edge_list()
    assert sorted(zip(rows.tolist(), cols.tolist())) == expected
    assert g.is_symmetric()

    directed = Graph.from_edges(n, src, dst, symmetric=False, dedup=False)
    rows, cols, w = directed.edge_list()
    multiset = sorted(p for p, c in zip(zip(rows.tolist(), cols.tolist()), w.astype(int).tolist())
                      for _ in range(c))
    assert multiset == sorted(pairs)


def test_graph_rejects_bad_offsets():
    with pytest.raises(DatasetError):
        Graph(2, np.array([0, 2, 1]), np.array([1, 0]), np.ones(2))
    with pytest.raises(DatasetError):
        Graph(2, np.array([0, 1, 2]), np.array([1, 5]), np.ones(2))


def test_standardize_population_stdev():
    x = np.array([[1.0, 5.0, 7.0], [2.0, 5.0, 8.0], [3.0, 5.0, 9.0]])
    out = standardize_features(x, exclude=[2])
    # one-pass oracle: sum and sum of squares
    col = x[:, 0]
    mean = col.sum() / 3
    var = (col ** 2).sum() / 3 - mean ** 2
    np.testing.assert_allclose(out[:, 0], (col - mean) / np.sqrt(var), atol=1e-12)
    np.testing.assert_allclose(out[:, 0], [-1.2247448714, 0.0, 1.2247448714], atol=1e-9)
    assert out[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert np.array_equal(out[:, 2], x[:, 2])


def test_standardize_moments_random():
    rng = np.random.default_rng(3)
    x = rng.normal(4.0, 3.0, size=(200, 6))
    out = standardize_features(x)
    assert np.all(np.abs(out.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(out.std(axis=0) - 1) < 1e-10)


def test_gcn_normalize_cases():
    iso = gcn_normalize(Graph.from_edges(1, [], []))
    assert iso.to_dense().tolist() == [[1.0]]
    pair = gcn_normalize(Graph.from_edges(2, [0], [1]))
    np.testing.assert_allclose(pair.to_dense(), np.full((2, 2), 0.5), atol=1e-15)
    tri = gcn_normalize(Graph.from_edges(3, [0, 1, 2], [1, 2, 0])).to_dense()
    np.testing.assert_allclose(tri, np.full((3, 3), 1 / 3), atol=1e-15)


def test_gcn_normalize_row_identity():
    rng = np.random.default_rng(0)
    n = 30
    pairs = rng.integers(0, n, size=(60, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    g = Graph.from_edges(n, pairs[:, 0], pairs[:, 1])
    a_hat = gcn_normalize(g).to_dense()
    d = g.degrees() + 1.0
    identity = (a_hat * np.sqrt(d[None, :] / d[:, None])).sum(axis=1)
    np.testing.assert_allclose(identity, np.ones(n), atol=1e-12)


def _labeled_dataset(n, labeled):
    y = np.full(n, MISSING_LABEL)
    y[:labeled] = np.arange(labeled) % 2
    return Dataset(Graph.from_edges(n, [], []), np.zeros((n, 1)), np.arange(n) % 2, y, SplitMasks.empty(n))


def test_make_splits_sizes_and_determinism():
    ds = _labeled_dataset(120, 100)
    a = make_splits(ds, (0.5, 0.25, 0.25), seed=0)
    b = make_splits(ds, (0.5, 0.25, 0.25), seed=0)
    assert (a.train.sum(), a.val.sum(), a.test.sum()) == (50, 25, 25)
    assert np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)
    assert not np.any((a.train | a.val | a.test) & (ds.labels == MISSING_LABEL))


def test_make_splits_requires_labels():
    with pytest.raises(DatasetError):
        make_splits(_labeled_dataset(10, 0), (0.5, 0.25, 0.25), 0)


def test_split_json_round_trip():
    ds = _labeled_dataset(20, 20)
    splits = make_splits(ds, (0.5, 0.25, 0.25), 1)
    ids = np.arange(20) * 7 + 3
    doc = json.loads(splits.to_json(ids))
    assert set(doc) == {"train", "val", "test"}
    back = SplitMasks.from_json(splits.to_json(ids), ids)
    assert np.array_equal(back.train, splits.train) and np.array_equal(back.test, splits.test)


def test_dataset_rejects_mismatched_lengths():
    g = Graph.from_edges(3, [0], [1])
    with pytest.raises(DatasetError):
        Dataset(g, np.zeros((2, 1)), [0, 1, 0], [0, 1, 0], SplitMasks.empty(3))
