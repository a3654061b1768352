"""End-to-end experiment: train the CNN, swap its softmax head for boosted trees, compare.

Both heads share one trained network body and one train/test split, so the
comparison isolates the head.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import gbt
from .convnet import (FeatureExtractor, Network, TrainConfig, TrainHistory, default_architecture,
                      init_network, load_network, save_network, truncate_at)
from .convnet import fit as fit_cnn
from .dataio import (AugmentConfig, Dataset, ImageSample, augment, preprocess, preprocess_dataset,
                     train_test_split, write_features_csv)
from .errors import ConfigError, DataError, LoadError, StateError
from .fileio import atomic_write
from .gbt import BoostConfig, Ensemble
from .metrics import MetricsReport, evaluate

log = logging.getLogger(__name__)


@dataclass
class ArchitectureConfig:
    filters: list[int] = field(default_factory=lambda: [8, 16])
    dropout: float = 0.8
    l2: float = 1e-4

    def layers(self, n_classes: int) -> list[dict]:
        return default_architecture(n_classes, dropout=self.dropout, l2=self.l2, filters=self.filters)


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment. ``seed`` drives every random stream."""

    seed: int = 0
    target_side: int = 32
    test_fraction: float = 0.1
    paper_order: bool = False
    augment: bool = True
    cnn: TrainConfig = field(default_factory=TrainConfig)
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    boost: BoostConfig = field(default_factory=BoostConfig)
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.target_side < 8:
            raise ConfigError("target_side must be >= 8")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        nested = {"cnn": TrainConfig, "architecture": ArchitectureConfig, "boost": BoostConfig,
                  "augmentation": AugmentConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in d.items():
            if key in nested:
                if not isinstance(value, dict):
                    raise ConfigError(f"config section {key!r} must be an object")
                sub = {f.name for f in fields(nested[key])}
                bad = set(value) - sub
                if bad:
                    raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
                try:
                    kwargs[key] = nested[key](**value)
                except TypeError as exc:
                    raise ConfigError(str(exc)) from exc
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def train_config(self) -> TrainConfig:
        return replace(self.cnn, seed=self.seed)

    def augment_config(self) -> AugmentConfig:
        # Augment-first order replaces each image by its copies instead of adding to it.
        return replace(self.augmentation, seed=self.seed,
                       keep_originals=False if self.paper_order else self.augmentation.keep_originals)


def split_and_augment(ds: Dataset, cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Default: split first, augment only the training side. ``paper_order``: augment, then split."""
    if ds.class_count < 2 or len(np.unique(ds.labels)) < 2:
        raise DataError("need samples from at least 2 classes")
    if cfg.paper_order:
        full = augment(ds, cfg.augment_config()) if cfg.augment else ds
        return train_test_split(full, cfg.test_fraction, cfg.seed)
    train, test = train_test_split(ds, cfg.test_fraction, cfg.seed)
    if cfg.augment:
        train = augment(train, cfg.augment_config())
    return train, test


class CnnModel:
    mode = "cnn"

    def __init__(self, net: Network, class_names: list[str], target_side: int):
        self.net = net
        self.class_names = list(class_names)
        self.target_side = target_side

    def predict_proba_batch(self, x: np.ndarray) -> np.ndarray:
        return self.net.predict_proba(x)

    def predict(self, image: ImageSample | np.ndarray) -> tuple[str, np.ndarray]:
        probs = self.predict_proba_batch(preprocess(image, self.target_side)[None])[0]
        return self.class_names[int(np.argmax(probs))], probs


class HybridModel:
    """Truncated network feeding a boosted-tree ensemble."""

    mode = "hybrid"

    def __init__(self, extractor: FeatureExtractor | None, booster: Ensemble | None,
                 class_names: list[str], target_side: int):
        if extractor is not None and booster is not None:
            if extractor.width != booster.n_features:
                raise StateError(f"extractor width {extractor.width} != booster width {booster.n_features}")
            if booster.class_count != len(class_names):
                raise StateError("booster class count does not match class names")
        self.extractor = extractor
        self.booster = booster
        self.class_names = list(class_names)
        self.target_side = target_side

    def _ready(self):
        if self.extractor is None or self.booster is None:
            raise StateError("hybrid model is not trained")

    def features(self, x: np.ndarray) -> np.ndarray:
        self._ready()
        return self.extractor(x)

    def predict_proba_batch(self, x: np.ndarray) -> np.ndarray:
        return self.booster.predict_proba(self.features(x))

    def predict(self, image: ImageSample | np.ndarray) -> tuple[str, np.ndarray]:
        self._ready()
        idx, probs = self.booster.predict(self.features(preprocess(image, self.target_side)[None])[0])
        return self.class_names[idx], probs


def predict(model: CnnModel | HybridModel, image: ImageSample | np.ndarray) -> tuple[str, np.ndarray]:
    return model.predict(image)


@dataclass
class RunResult:
    """One trained head with its evaluation on the shared test split."""

    model: CnnModel | HybridModel
    history: TrainHistory
    metrics: MetricsReport
    test_ids: list[str]
    train_ids: list[str]
    train_labels: np.ndarray
    test_labels: np.ndarray
    train_features: np.ndarray | None = None
    test_features: np.ndarray | None = None


def _train_body(train: Dataset, test: Dataset, cfg: ExperimentConfig):
    x_train = preprocess_dataset(train, cfg.target_side)
    x_test = preprocess_dataset(test, cfg.target_side)
    tcfg = cfg.train_config()
    net = init_network(cfg.architecture.layers(train.class_count), x_train.shape[1:], tcfg)
    history = fit_cnn(net, (x_train, train.labels), (x_test, test.labels), tcfg)
    return net, history, x_train, x_test


def _cnn_result(net, history, train, test, x_test, cfg) -> RunResult:
    model = CnnModel(net, test.class_names, cfg.target_side)
    pred = model.predict_proba_batch(x_test).argmax(axis=1)
    return RunResult(model, history, evaluate(test.labels, pred, test.class_names), test.ids, train.ids,
                     train.labels, test.labels)


def _hybrid_result(net, history, train, test, x_train, x_test, cfg) -> RunResult:
    extractor = truncate_at(net, "global_average_pool")
    f_train, f_test = extractor(x_train), extractor(x_test)
    booster = gbt.fit(f_train, train.labels, cfg.boost, n_classes=train.class_count,
                      eval_set=(f_test, test.labels))
    model = HybridModel(extractor, booster, test.class_names, cfg.target_side)
    pred, _ = booster.predict(f_test)
    return RunResult(model, history, evaluate(test.labels, pred, test.class_names), test.ids, train.ids,
                     train.labels, test.labels, f_train, f_test)


def train_baseline_cnn(ds: Dataset, cfg: ExperimentConfig) -> RunResult:
    train, test = split_and_augment(ds, cfg)
    net, history, _, x_test = _train_body(train, test, cfg)
    return _cnn_result(net, history, train, test, x_test, cfg)


def train_hybrid(ds: Dataset, cfg: ExperimentConfig) -> RunResult:
    """Train the CNN with its softmax head, truncate at global average pooling, boost on the features."""
    train, test = split_and_augment(ds, cfg)
    net, history, x_train, x_test = _train_body(train, test, cfg)
    return _hybrid_result(net, history, train, test, x_train, x_test, cfg)


@dataclass
class ComparisonReport:
    config: dict
    seed: int
    test_ids: list[str]
    cnn: RunResult
    hybrid: RunResult

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "n_test": len(self.test_ids),
            "test_ids": self.test_ids,
            "models": {
                "cnn": {"headline": self.cnn.metrics.headline(), **self.cnn.metrics.to_dict()},
                "hybrid": {"headline": self.hybrid.metrics.headline(), **self.hybrid.metrics.to_dict()},
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "accuracy", "f1", "specificity", "sensitivity"])
        for name, res in (("cnn", self.cnn), ("hybrid", self.hybrid)):
            head = res.metrics.headline()
            w.writerow([name] + ["" if head[k] is None else repr(head[k])
                                 for k in ("accuracy", "f1", "specificity", "sensitivity")])
        return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, ds: Dataset) -> ComparisonReport:
    """Train once, evaluate both heads on the same test split."""
    train, test = split_and_augment(ds, cfg)
    log.info("split: %d train / %d test samples", len(train), len(test))
    net, history, x_train, x_test = _train_body(train, test, cfg)
    cnn = _cnn_result(net, history, train, test, x_test, cfg)
    hybrid = _hybrid_result(net, history, train, test, x_train, x_test, cfg)
    return ComparisonReport(cfg.to_dict(), cfg.seed, test.ids, cnn, hybrid)


# -- persistence -------------------------------------------------------------

def boost_history_csv(ens: Ensemble) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "train_logloss", "val_logloss"])
    for i, loss in enumerate(ens.train_loss):
        val = ens.eval_loss[i] if i < len(ens.eval_loss) else None
        w.writerow([i + 1, repr(loss), "" if val is None else repr(val)])
    return buf.getvalue()


def save_model(model: CnnModel | HybridModel, out_dir: str | os.PathLike, config: dict | None = None) -> None:
    out_dir = Path(out_dir)
    meta = {"mode": model.mode, "class_names": model.class_names, "target_side": model.target_side,
            "config": config or {}}
    net = model.net if isinstance(model, CnnModel) else model.extractor.net
    save_network(net, out_dir / "network.json", meta=meta)
    if isinstance(model, HybridModel):
        model._ready()
        meta["feature_layer"] = model.extractor.layer_name
        gbt.save_ensemble(model.booster, out_dir / "ensemble.json")
    atomic_write(out_dir / "model.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_model(model_dir: str | os.PathLike) -> CnnModel | HybridModel:
    model_dir = Path(model_dir)
    try:
        meta = json.loads((model_dir / "model.json").read_text())
        mode = meta["mode"]
        class_names = list(meta["class_names"])
        side = int(meta["target_side"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise LoadError(f"cannot read model descriptor in {model_dir}: {exc}") from exc
    net = load_network(model_dir / "network.json")
    if mode == "cnn":
        return CnnModel(net, class_names, side)
    if mode == "hybrid":
        booster = gbt.load_ensemble(model_dir / "ensemble.json")
        try:
            return HybridModel(truncate_at(net, meta.get("feature_layer", "global_average_pool")), booster,
                               class_names, side)
        except StateError as exc:
            raise LoadError(f"inconsistent hybrid model in {model_dir}: {exc}") from exc
    raise LoadError(f"unknown model mode {mode!r}")


def write_run(result: RunResult, out_dir: str | os.PathLike, config: dict, figures: bool = True) -> None:
    """Model files, history CSV(s), metrics JSON, confusion CSV and optional figures for one head."""
    out_dir = Path(out_dir)
    model = result.model
    save_model(model, out_dir / "model", config)
    atomic_write(out_dir / "history.csv", result.history.to_csv())
    metrics = {"mode": model.mode, "config": config, "seed": config.get("seed"),
               "n_test": len(result.test_ids), **result.metrics.to_dict()}
    atomic_write(out_dir / "metrics.json", json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    atomic_write(out_dir / "confusion.csv", result.metrics.confusion.to_csv())
    atomic_write(out_dir / "config.json", json.dumps(config, indent=2, sort_keys=True) + "\n")
    if isinstance(model, HybridModel):
        atomic_write(out_dir / "boost_history.csv", boost_history_csv(model.booster))
        write_features_csv(out_dir / "features_train.csv", result.train_ids, result.train_labels,
                           result.train_features)
        write_features_csv(out_dir / "features_test.csv", result.test_ids, result.test_labels,
                           result.test_features)
    if figures:
        from . import plotting
        plotting.plot_history(result.history, out_dir / "history.png")
        plotting.plot_confusion(result.metrics.confusion, out_dir / "confusion.png")
        if isinstance(model, HybridModel):
            plotting.plot_boost_history(model.booster, out_dir / "boost_history.png")


def write_report(report: ComparisonReport, out_dir: str | os.PathLike, figures: bool = True) -> None:
    out_dir = Path(out_dir)
    atomic_write(out_dir / "report.json", report.to_json())
    atomic_write(out_dir / "report.csv", report.to_csv())
    atomic_write(out_dir / "history_cnn.csv", report.cnn.history.to_csv())
    # The hybrid shares the CNN body's history; its own head trains by boosting rounds.
    atomic_write(out_dir / "history_hybrid.csv", report.hybrid.history.to_csv())
    atomic_write(out_dir / "boost_history_hybrid.csv", boost_history_csv(report.hybrid.model.booster))
    atomic_write(out_dir / "confusion_cnn.csv", report.cnn.metrics.confusion.to_csv())
    atomic_write(out_dir / "confusion_hybrid.csv", report.hybrid.metrics.confusion.to_csv())
    if figures:
        from . import plotting
        plotting.plot_history(report.cnn.history, out_dir / "history_cnn.png")
        plotting.plot_boost_history(report.hybrid.model.booster, out_dir / "boost_history_hybrid.png")
        plotting.plot_confusion(report.cnn.metrics.confusion, out_dir / "confusion_cnn.png")
        plotting.plot_confusion(report.hybrid.metrics.confusion, out_dir / "confusion_hybrid.png")
        plotting.plot_comparison(report, out_dir / "comparison.png")
