"""Training, evaluation and multi-seed experiments for all strategies.

Strategies:

``vanilla``
    the backbone on standardized features and the original graph.
``edge_drop`` / ``feature_mask``
    the same, after removing edges / zeroing feature columns.
``fair_icd``
    counterfactual search, rewiring, unbias-MLP pretraining, feature
    debiasing, then backbone training against a sensitive-attribute
    discriminator.

Every random choice is drawn from streams spawned from the run seed, so a
``(dataset, config, seed)`` triple always gives the same bundle.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .adversarial import Discriminator, adversarial_round, classification_step
from .augment import augment_graph, edge_drop, feature_mask, find_counterfactuals
from .graph import Dataset, Graph, standardize_features
from .metrics import BiasDiagnostics, MetricsReport, UndefinedMetricError, compute_report, \
    demographic_parity, markdown_table
from .nn import Adam, GNNModel, GraphOps
from .unbias import UnbiasMlp, UnbiasTrainConfig, debias_features, train_unbias_mlp

log = logging.getLogger(__name__)

BACKBONES = ("gcn", "gin", "sage")
STRATEGIES = ("vanilla", "edge_drop", "feature_mask", "fair_icd")
K_GRID = (3, 5, 10, 25)
LR_GRID = (0.1, 0.01, 0.001)
LAMBDA_RANGE = (0.0, 10.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    backbone: str = "gcn"
    strategy: str = "fair_icd"
    k: int = 10
    lam: float = 0.1
    lr: float = 0.01
    epochs: int = 300
    seeds: tuple = (0, 1, 2, 3, 4)
    split: tuple = (0.5, 0.25, 0.25)
    hidden: int = 16
    num_layers: int = 2
    dropout: float = 0.5
    patience: int = 30
    drop_p: float = 0.2
    mask_p: float = 0.2
    unbias_lr: float = 0.01
    unbias_epochs: int = 300
    unbias_hidden: int | None = None
    disc_hidden: int = 16
    disc_lr: float = 0.01
    disc_steps: int = 1
    dense_limit: int = 5000

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(v) for v in self.seeds))
        object.__setattr__(self, "split", tuple(float(v) for v in self.split))
        if self.backbone not in BACKBONES:
            raise ConfigError(f"backbone must be one of {BACKBONES}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.lam < 0:
            raise ConfigError("lambda must be nonnegative")
        if not self.lr > 0 or not self.unbias_lr > 0 or not self.disc_lr > 0:
            raise ConfigError("learning rates must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.epochs < 1 or self.num_layers < 1 or self.hidden < 1:
            raise ConfigError("epochs, num_layers and hidden must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        for name in ("drop_p", "mask_p"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Build from a (possibly nested) mapping; unknown keys are errors.

        Nested sections are flattened with an underscore, so
        ``{"unbias": {"lr": 0.1}}`` sets ``unbias_lr``.
        """
        flat = {}

        def walk(prefix, node):
            for key, value in node.items():
                name = f"{prefix}{key}"
                if isinstance(value, dict):
                    walk(name + "_", value)
                else:
                    flat[name] = value
        walk("", doc or {})
        if "lambda" in flat:
            flat["lam"] = flat.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**flat)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["seeds"] = list(self.seeds)
        doc["split"] = list(self.split)
        return doc

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def unbias_config(self, seed: int) -> UnbiasTrainConfig:
        return UnbiasTrainConfig(lr=self.unbias_lr, epochs=self.unbias_epochs,
                                 hidden_dim=self.unbias_hidden, seed=seed)


def grid(cfg: ExperimentConfig, ks=K_GRID, lams=(0.0, 1.0, 10.0), lrs=(None,)):
    """Configs for every ``(k, lambda, lr)`` cell; ``None`` keeps cfg.lr."""
    for k, lam, lr in itertools.product(ks, lams, lrs):
        yield replace(cfg, k=k, lam=lam, lr=cfg.lr if lr is None else lr)


def _seed_streams(seed: int) -> dict:
    names = ("init", "dropout", "disc", "unbias", "augment")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return dict(zip(names, children))


def _int_seed(seq) -> int:
    return int(seq.generate_state(1)[0])


def standardized_features(ds: Dataset) -> np.ndarray:
    exclude = () if ds.sensitive_col is None else (ds.sensitive_col,)
    return standardize_features(ds.features, exclude)


@dataclass
class ModelBundle:
    config: ExperimentConfig
    seed: int
    model: GNNModel
    discriminator: Discriminator | None = None
    unbias: UnbiasMlp | None = None
    history: list = field(default_factory=list)
    best_epoch: int = 0
    diagnostics: dict = field(default_factory=dict)
    fallback: bool = False

    def inputs(self, ds: Dataset) -> tuple[np.ndarray, Graph]:
        """Features and graph the model was trained on, rebuilt from ``ds``."""
        x = standardized_features(ds)
        graph = ds.graph
        aug_seed = _int_seed(_seed_streams(self.seed)["augment"])
        if self.config.strategy == "edge_drop":
            graph = edge_drop(graph, self.config.drop_p, aug_seed)
        elif self.config.strategy == "feature_mask":
            x = feature_mask(x, self.config.mask_p, aug_seed)
        elif self.unbias is not None:
            x = debias_features(x, self.unbias)
        return x, graph

    def predict(self, ds: Dataset) -> np.ndarray:
        x, graph = self.inputs(ds)
        return self.model.predict(x, GraphOps(graph, self.config.dense_limit))

    def log_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "L_cls", "L_d", "val_acc", "val_dp"])
        for row in self.history:
            writer.writerow([row["epoch"], repr(row["L_cls"]),
                             "" if row["L_d"] is None else repr(row["L_d"]),
                             repr(row["val_acc"]), repr(row["val_dp"])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "config_hash": self.config.config_hash(),
                "seed": self.seed, "best_epoch": self.best_epoch, "fallback": self.fallback,
                "diagnostics": self.diagnostics, "model": self.model.to_dict(),
                "discriminator": None if self.discriminator is None else self.discriminator.to_dict(),
                "unbias": None if self.unbias is None else self.unbias.to_dict()}

    @classmethod
    def from_dict(cls, doc) -> "ModelBundle":
        return cls(config=ExperimentConfig.from_dict(doc["config"]), seed=doc["seed"],
                   model=GNNModel.from_dict(doc["model"]),
                   discriminator=None if doc["discriminator"] is None else Discriminator.from_dict(doc["discriminator"]),
                   unbias=None if doc["unbias"] is None else UnbiasMlp.from_dict(doc["unbias"]),
                   best_epoch=doc["best_epoch"], diagnostics=doc["diagnostics"], fallback=doc["fallback"])


def _val_metrics(pred, ds: Dataset):
    val = ds.splits.val
    if not val.any():
        return math.nan, math.nan
    acc = float((pred[val] == ds.labels[val]).mean())
    try:
        dp = demographic_parity(pred, ds.sensitive, val)
    except UndefinedMetricError:
        dp = math.nan
    return acc, dp


def _fit_backbone(ds: Dataset, x, graph: Graph, cfg: ExperimentConfig, seed: int, adversarial: bool):
    streams = _seed_streams(seed)
    model = GNNModel.build(cfg.backbone, x.shape[1], cfg.hidden, 2, cfg.num_layers, cfg.dropout,
                           np.random.default_rng(streams["init"]))
    opt = Adam(model.params, lr=cfg.lr)
    drop_rng = np.random.default_rng(streams["dropout"])
    disc = Discriminator.init(cfg.hidden, cfg.disc_hidden, np.random.default_rng(streams["disc"]),
                              cfg.disc_lr) if adversarial else None
    ops = GraphOps(graph, cfg.dense_limit)
    y = np.where(ds.labels < 0, 0, ds.labels)
    train = ds.splits.train
    if not train.any():
        raise ValueError("empty training mask")

    history = []
    best_acc, best_epoch, best_params, waited = -1.0, 0, model.params, 0
    for epoch in range(1, cfg.epochs + 1):
        if adversarial:
            losses = adversarial_round(model, opt, disc, x, ops, y, train, ds.sensitive, cfg.lam, drop_rng,
                                       cfg.disc_steps)
            l_cls, l_d = losses.cls_loss, losses.disc_loss
        else:
            l_cls, l_d = classification_step(model, opt, x, ops, y, train, drop_rng), None
        val_acc, val_dp = _val_metrics(model.predict(x, ops), ds)
        history.append({"epoch": epoch, "L_cls": l_cls, "L_d": l_d, "val_acc": val_acc, "val_dp": val_dp})
        if math.isnan(val_acc) or val_acc > best_acc:
            best_acc, best_epoch, best_params, waited = val_acc, epoch, model.params, 0
        else:
            waited += 1
            if waited >= cfg.patience:
                break
    model.set_params(best_params)
    return model, disc, history, best_epoch


def train_baseline(ds: Dataset, cfg: ExperimentConfig, seed: int) -> ModelBundle:
    """Train the plain backbone, optionally after edge dropping or feature masking."""
    if cfg.strategy == "fair_icd":
        raise ConfigError("use train_fair_icd for the fair_icd strategy")
    bundle = ModelBundle(cfg, seed, model=None)
    x, graph = bundle.inputs(ds)
    bundle.model, _, bundle.history, bundle.best_epoch = _fit_backbone(ds, x, graph, cfg, seed, False)
    return bundle


def train_fair_icd(ds: Dataset, cfg: ExperimentConfig, seed: int) -> ModelBundle:
    """Counterfactual augmentation, unbias-MLP pretraining, adversarial training."""
    x = standardized_features(ds)
    exclude = () if ds.sensitive_col is None else (ds.sensitive_col,)
    cf = find_counterfactuals(x, ds.sensitive, min(cfg.k, ds.num_nodes - 1), exclude)
    bundle = ModelBundle(cfg, seed, model=None)
    if not cf.found.any():
        log.warning("no counterfactual nodes found (k=%d); falling back to vanilla training", cfg.k)
        bundle.fallback = True
        bundle.model, _, bundle.history, bundle.best_epoch = _fit_backbone(ds, x, ds.graph, cfg, seed, False)
        return bundle
    aug = augment_graph(ds.graph, ds.sensitive, cf)
    bundle.diagnostics = {"original": asdict(BiasDiagnostics.of(ds.graph, ds.sensitive)),
                          "augmented": asdict(BiasDiagnostics.of(aug.graph, ds.sensitive)),
                          "counterfactuals_found": int(cf.found.sum())}
    unbias_seed = _int_seed(_seed_streams(seed)["unbias"])
    bundle.unbias = train_unbias_mlp(x, aug, cfg.unbias_config(unbias_seed))
    x_tilde = debias_features(x, bundle.unbias)
    bundle.model, bundle.discriminator, bundle.history, bundle.best_epoch = \
        _fit_backbone(ds, x_tilde, ds.graph, cfg, seed, True)
    return bundle


def train(ds: Dataset, cfg: ExperimentConfig, seed: int) -> ModelBundle:
    if cfg.strategy == "fair_icd":
        return train_fair_icd(ds, cfg, seed)
    return train_baseline(ds, cfg, seed)


def evaluate(bundle: ModelBundle, ds: Dataset) -> MetricsReport:
    """Accuracy, F1, DP and EO of the bundle's predictions on the test mask."""
    if not ds.splits.test.any():
        raise UndefinedMetricError("empty test mask")
    return compute_report(bundle.predict(ds), ds.labels, ds.sensitive, ds.splits.test)


METRIC_KEYS = ("acc", "f1", "dp", "eo")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seeds: tuple
    reports: list

    @property
    def single_seed(self) -> bool:
        return len(self.reports) < 2

    def values(self, key: str) -> np.ndarray:
        return np.array([r.to_dict()[key] for r in self.reports])

    def mean(self, key: str) -> float:
        return float(np.mean(self.values(key)))

    def std(self, key: str) -> float:
        """Sample standard deviation; 0 for a single seed (see ``single_seed``)."""
        return 0.0 if self.single_seed else float(np.std(self.values(key), ddof=1))

    def summary(self) -> dict:
        return {k: (self.mean(k), self.std(k)) for k in METRIC_KEYS}

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "config_hash": self.config.config_hash(),
                "seeds": list(self.seeds), "per_seed": [r.to_dict() for r in self.reports],
                "mean": {k: self.mean(k) for k in METRIC_KEYS},
                "std": {k: self.std(k) for k in METRIC_KEYS}, "single_seed": self.single_seed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc) -> "ExperimentResult":
        return cls(ExperimentConfig.from_dict(doc["config"]), tuple(doc["seeds"]),
                   [MetricsReport.from_dict(r) for r in doc["per_seed"]])

    def label(self) -> str:
        c = self.config
        if c.strategy == "fair_icd":
            return f"{c.backbone}/fair_icd (k={c.k}, λ={c.lam:g})"
        return f"{c.backbone}/{c.strategy}"

    def to_markdown(self) -> str:
        return markdown_table([(self.label(), self.summary())])


def run_experiment(ds: Dataset, cfg: ExperimentConfig) -> ExperimentResult:
    """Train and evaluate once per seed, in seed order."""
    reports = []
    for seed in cfg.seeds:
        bundle = train(ds, cfg, seed)
        reports.append(evaluate(bundle, ds))
    return ExperimentResult(cfg, cfg.seeds, reports)


def run_ablation(ds: Dataset, cfg: ExperimentConfig, strategies=STRATEGIES) -> list[ExperimentResult]:
    return [run_experiment(ds, replace(cfg, strategy=s)) for s in strategies]


def results_markdown(results) -> str:
    return markdown_table([(r.label(), r.summary()) for r in results])
