"""``fairicd`` command line: augment, train, evaluate, ablate, report.

Every subcommand reads an optional YAML/JSON config, applies flag
overrides, validates the result before touching any data, and writes its
outputs (each echoing the effective config) only once all computation has
succeeded.  Exit codes: 2 config errors, 3 data errors, 4 numeric errors;
``augment`` reports data errors with exit code 1.
"""
from __future__ import annotations

import argparse
import inspect
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import yaml

from . import pipeline
from .augment import augment_graph, find_counterfactuals
from .graph import DatasetError, NodeSchema, load_dataset, save_id_map
from .metrics import BiasDiagnostics, UndefinedMetricError, markdown_table
from .nn import NonFiniteError
from .pipeline import ConfigError, ExperimentConfig, ExperimentResult, ModelBundle, standardized_features
from .synthetic import generate_synthetic

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
EXIT_AUGMENT_DATA = 1

DATA_KEYS = {"nodes", "edges", "id_col", "sensitive_col", "label_col", "feature_cols",
             "sensitive_in_features", "split_seed"}
SYNTHETIC_KEYS = set(inspect.signature(generate_synthetic).parameters) - {"ratios"}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config does not parse: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return doc


def _check_section(doc, allowed, name) -> dict:
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown {name} keys: {', '.join(unknown)}")
    return dict(doc)


def resolve(args) -> dict:
    """Effective configuration: file values, then flags.  No data is read."""
    doc = _read_config(args.config)
    data = _check_section(doc.pop("data", None), DATA_KEYS, "data")
    synthetic = doc.pop("synthetic", None)
    if getattr(args, "nodes", None):
        data["nodes"] = args.nodes
    if getattr(args, "edges", None):
        data["edges"] = args.edges
    if getattr(args, "synthetic", False) and synthetic is None:
        synthetic = {}
    synthetic = None if synthetic is None else _check_section(synthetic, SYNTHETIC_KEYS, "synthetic")

    cfg = ExperimentConfig.from_dict(doc)
    overrides = {}
    for flag, key in (("backbone", "backbone"), ("strategy", "strategy"), ("k", "k"), ("lam", "lam")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = (args.seed,)
    if overrides:
        try:
            cfg = replace(cfg, **overrides)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    return {"experiment": cfg, "data": data, "synthetic": synthetic}


def _require_source(eff):
    if eff["synthetic"] is None and not ({"nodes", "edges"} <= set(eff["data"])):
        raise ConfigError("give --nodes and --edges (or a data section), or --synthetic")


def echo(eff) -> dict:
    return {"experiment": eff["experiment"].to_dict(), "data": eff["data"], "synthetic": eff["synthetic"]}


def load(eff):
    cfg = eff["experiment"]
    if eff["synthetic"] is not None:
        try:
            return generate_synthetic(**eff["synthetic"], ratios=cfg.split)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"synthetic: {exc}") from None
    data = eff["data"]
    cols = data.get("feature_cols")
    schema = NodeSchema(id_col=data.get("id_col", "id"), sensitive_col=data.get("sensitive_col", "sensitive"),
                        label_col=data.get("label_col", "label"),
                        feature_cols=None if cols is None else tuple(cols),
                        sensitive_in_features=bool(data.get("sensitive_in_features", False)))
    return load_dataset(data["nodes"], data["edges"], schema, ratios=cfg.split, seed=data.get("split_seed", 0))


def write_outputs(out: Path, files: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def cmd_augment(args, eff) -> dict:
    _require_source(eff)
    cfg = eff["experiment"]
    try:
        ds = load(eff)
    except DatasetError as exc:
        raise CliError(str(exc), EXIT_AUGMENT_DATA) from None
    exclude = () if ds.sensitive_col is None else (ds.sensitive_col,)
    cf = find_counterfactuals(standardized_features(ds), ds.sensitive, min(cfg.k, ds.num_nodes - 1), exclude)
    aug = augment_graph(ds.graph, ds.sensitive, cf)
    diagnostics = {"config": echo(eff), "k": cfg.k, "counterfactuals_found": int(cf.found.sum()),
                   "original": asdict(BiasDiagnostics.of(ds.graph, ds.sensitive)),
                   "augmented": asdict(BiasDiagnostics.of(aug.graph, ds.sensitive))}
    files = {"counterfactuals.csv": cf.to_csv(ds.node_ids),
             "augmented_edges.txt": aug.to_edge_list(ds.node_ids),
             "diagnostics.json": _dump(diagnostics),
             "diagnostics.md": diagnostics_markdown(diagnostics)}
    out = Path(args.out)
    write_outputs(out, files)
    save_id_map(out / "id_map.csv", ds.node_ids)
    return files


def diagnostics_markdown(doc) -> str:
    lines = ["| Graph | Avg. degree | Avg. heterogeneous degree | Nodes w/o heterogeneous neighbors |",
             "|---|---|---|---|"]
    for name in ("original", "augmented"):
        d = doc[name]
        lines.append(f"| {name} | {d['avg_degree']:.2f} | {d['avg_heterogeneous_degree']:.2f} | "
                     f"{d['nodes_without_heterogeneous_neighbors']} |")
    return "\n".join(lines) + "\n"


def cmd_train(args, eff) -> dict:
    _require_source(eff)
    cfg = eff["experiment"]
    ds = load(eff)
    seed = cfg.seeds[0]
    bundle = pipeline.train(ds, cfg, seed)
    checkpoint = bundle.to_dict()
    checkpoint["source"] = echo(eff)
    files = {"model.json": _dump(checkpoint), "train_log.csv": bundle.log_csv()}
    write_outputs(Path(args.out), files)
    return files


def cmd_evaluate(args, eff) -> dict:
    try:
        doc = json.loads(Path(args.model).read_text())
        bundle = ModelBundle.from_dict(doc)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read checkpoint: {exc}", EXIT_DATA) from None
    source = doc.get("source", {})
    if eff["synthetic"] is None and "nodes" not in eff["data"]:
        eff = {"experiment": bundle.config, "data": source.get("data", {}),
               "synthetic": source.get("synthetic")}
    else:
        eff = dict(eff, experiment=bundle.config)
    _require_source(eff)
    ds = load(eff)
    report = pipeline.evaluate(bundle, ds)
    metrics = {"config": echo(eff), "seed": bundle.seed, "config_hash": bundle.config.config_hash(),
               "metrics": report.to_dict()}
    files = {"metrics.json": _dump(metrics), "metrics.md": report.to_markdown(ExperimentResult(
        bundle.config, (bundle.seed,), [report]).label())}
    write_outputs(Path(args.out), files)
    return files


def cmd_ablate(args, eff) -> dict:
    _require_source(eff)
    cfg = eff["experiment"]
    ds = load(eff)
    results = pipeline.run_ablation(ds, cfg)
    doc = {"config": echo(eff), "results": [r.to_dict() for r in results]}
    files = {"ablation.json": _dump(doc), "ablation.md": pipeline.results_markdown(results)}
    write_outputs(Path(args.out), files)
    return files


def _row_key(result: ExperimentResult):
    c = result.config
    return (pipeline.BACKBONES.index(c.backbone), pipeline.STRATEGIES.index(c.strategy), c.k, c.lam,
            c.config_hash())


def collect_results(paths) -> list[ExperimentResult]:
    results = []
    for path in paths:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read {path}: {exc}", EXIT_DATA) from None
        entries = doc["results"] if "results" in doc else [doc]
        try:
            results.extend(ExperimentResult.from_dict(e) for e in entries)
        except KeyError as exc:
            raise CliError(f"{path} is not a result file (missing {exc})", EXIT_DATA) from None
    return results


def cmd_report(args, eff) -> dict:
    results = collect_results(args.results)
    unique = {}
    for r in results:
        unique.setdefault(_row_key(r), r)
    rows = [unique[key] for key in sorted(unique)]
    files = {"report.md": markdown_table([(r.label(), r.summary()) for r in rows])}
    write_outputs(Path(args.out), files)
    return files


COMMANDS = {"augment": cmd_augment, "train": cmd_train, "evaluate": cmd_evaluate,
            "ablate": cmd_ablate, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairicd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, model=True):
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        if data:
            p.add_argument("--nodes", help="node CSV (id, features, sensitive, label)")
            p.add_argument("--edges", help="whitespace-separated edge list")
            p.add_argument("--synthetic", action="store_true", help="use the synthetic generator")
        if model:
            p.add_argument("--seed", type=int)
            p.add_argument("--backbone", choices=pipeline.BACKBONES)
            p.add_argument("--strategy", choices=pipeline.STRATEGIES)
            p.add_argument("--k", type=int)
            p.add_argument("--lambda", dest="lam", type=float)
        return p

    common(sub.add_parser("augment", help="counterfactual rewiring and bias diagnostics"))
    common(sub.add_parser("train", help="train one model for one seed"))
    ev = common(sub.add_parser("evaluate", help="test-set metrics of a trained model"), model=False)
    ev.add_argument("--model", required=True, help="model.json written by train")
    common(sub.add_parser("ablate", help="vanilla, edge_drop, feature_mask and fair_icd over all seeds"))
    rep = common(sub.add_parser("report", help="merge result JSON files into a markdown table"),
                 data=False, model=False)
    rep.add_argument("results", nargs="+", help="ablation.json or experiment result files")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        eff = resolve(args)
        COMMANDS[args.command](args, eff)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DatasetError, UndefinedMetricError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
