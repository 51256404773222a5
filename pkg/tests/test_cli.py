import json

import pytest

from fairicd.cli import main

FAST_CONFIG = """
epochs: 15
seeds: [0, 1]
unbias:
  epochs: 10
synthetic:
  n: 160
  seed: 2
  bias_strength: 2.0
"""

NODES = """id,f0,f1,sensitive,label
1,0.0,1.0,0,1
2,0.1,0.9,0,0
3,1.0,0.0,1,1
4,1.1,0.1,1,0
5,0.5,0.5,0,1
6,0.6,0.4,1,0
"""
EDGES = "1 2\n1 5\n2 5\n3 4\n3 6\n4 6\n5 6\n"


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(FAST_CONFIG)
    return str(path)


@pytest.fixture
def files(tmp_path):
    nodes, edges = tmp_path / "nodes.csv", tmp_path / "edges.txt"
    nodes.write_text(NODES)
    edges.write_text(EDGES)
    return str(nodes), str(edges)


def read_all(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_augment_writes_outputs_and_diagnostics(tmp_path, files):
    out = tmp_path / "aug"
    assert main(["augment", "--nodes", files[0], "--edges", files[1], "--k", "3", "--out", str(out)]) == 0
    assert set(read_all(out)) == {"counterfactuals.csv", "augmented_edges.txt", "diagnostics.json",
                                  "diagnostics.md", "id_map.csv"}
    diag = json.loads((out / "diagnostics.json").read_text())
    # one cross-group edge (5, 6) over six nodes
    assert diag["original"]["avg_heterogeneous_degree"] == pytest.approx(2 / 6)
    assert diag["original"]["avg_degree"] == pytest.approx(14 / 6)
    assert diag["augmented"]["avg_heterogeneous_degree"] >= diag["original"]["avg_heterogeneous_degree"]
    assert diag["config"]["experiment"]["k"] == 3
    assert (out / "counterfactuals.csv").read_text().startswith("node,counterfactual\n1,")


def test_augment_fully_heterogeneous_graph_is_unchanged(tmp_path):
    nodes = tmp_path / "n.csv"
    edges = tmp_path / "e.txt"
    nodes.write_text("id,f0,sensitive,label\n0,0.0,0,1\n1,1.0,1,0\n2,2.0,0,1\n3,3.0,1,0\n")
    edges.write_text("0 1\n1 2\n2 3\n")
    out = tmp_path / "aug"
    assert main(["augment", "--nodes", str(nodes), "--edges", str(edges), "--out", str(out)]) == 0
    lines = sorted((out / "augmented_edges.txt").read_text().splitlines())
    assert lines == sorted(f"{a} {b} 1 kept" for a, b in [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)])


def test_augment_bad_data_exits_1(tmp_path, files):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 99\n")
    out = tmp_path / "aug"
    assert main(["augment", "--nodes", files[0], "--edges", str(bad), "--out", str(out)]) == 1
    assert not out.exists()


def test_bad_config_key_exits_2_without_outputs(tmp_path, files):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("epochs: 5\nwarmup: 3\n")
    out = tmp_path / "train"
    assert main(["train", "--config", str(cfg), "--nodes", files[0], "--edges", files[1],
                 "--out", str(out)]) == 2
    assert not out.exists()


def test_other_exit_codes(tmp_path, files):
    out = tmp_path / "o"
    assert main(["train", "--nodes", files[0], "--edges", str(tmp_path / "missing.txt"),
                 "--out", str(out)]) == 3
    assert main(["train", "--out", str(out)]) == 2
    assert not out.exists()


def test_train_evaluate_round_trip_is_deterministic(tmp_path, config):
    outputs = []
    for run in ("a", "b"):
        train_dir, eval_dir = tmp_path / run / "train", tmp_path / run / "eval"
        assert main(["train", "--config", config, "--seed", "1", "--lambda", "0.2", "--out", str(train_dir)]) == 0
        assert main(["evaluate", "--model", str(train_dir / "model.json"), "--out", str(eval_dir)]) == 0
        outputs.append((read_all(train_dir), read_all(eval_dir)))
    assert outputs[0] == outputs[1]
    metrics = json.loads(outputs[0][1]["metrics.json"])
    assert metrics["seed"] == 1 and metrics["config"]["experiment"]["lam"] == 0.2
    assert set(metrics["metrics"]) == {"acc", "f1", "dp", "eo", "positive_rates"}
    log = outputs[0][0]["train_log.csv"].decode().splitlines()
    assert log[0] == "epoch,L_cls,L_d,val_acc,val_dp"


def test_ablate_and_report(tmp_path, config):
    out = tmp_path / "ablate"
    assert main(["ablate", "--config", config, "--out", str(out)]) == 0
    table = (out / "ablation.md").read_text().splitlines()
    assert len(table) == 6 and "±" in table[2]
    doc = json.loads((out / "ablation.json").read_text())
    assert len(doc["results"]) == 4 and doc["config"]["synthetic"]["n"] == 160

    single = tmp_path / "single.json"
    single.write_text(json.dumps(doc["results"][3]))
    merged = []
    for order in ([str(out / "ablation.json"), str(single)], [str(single), str(out / "ablation.json")]):
        rep = tmp_path / f"report{len(merged)}"
        assert main(["report", *order, "--out", str(rep)]) == 0
        merged.append((rep / "report.md").read_text())
    assert merged[0] == merged[1]
    assert [line.split("|")[1].strip() for line in merged[0].splitlines()[2:]] == [
        "gcn/vanilla", "gcn/edge_drop", "gcn/feature_mask", "gcn/fair_icd (k=10, λ=0.1)"]


def test_report_rejects_non_result_file(tmp_path):
    junk = tmp_path / "junk.json"
    junk.write_text("{}")
    assert main(["report", str(junk), "--out", str(tmp_path / "r")]) == 3
