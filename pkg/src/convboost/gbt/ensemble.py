"""Additive multiclass boosting: one tree per class per round."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError, LoadError, ShapeError
from ..fileio import atomic_write
from .objective import log_loss, softmax_grad_hess, softmax_rows
from .tree import BoostConfig, Tree, build_tree

log = logging.getLogger(__name__)

FORMAT = "convboost-ensemble"


@dataclass
class Ensemble:
    config: BoostConfig
    class_count: int
    n_features: int
    rounds: list[list[Tree]] = field(default_factory=list)
    base_score: float = 0.0
    # Per-round mean log-loss on the training rows (and on eval rows if given).
    train_loss: list[float] = field(default_factory=list)
    eval_loss: list[float] = field(default_factory=list)

    def _check_width(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {x2.shape[1]}")
        return x2

    def raw_scores(self, x: np.ndarray) -> np.ndarray:
        x2 = self._check_width(x)
        raw = np.full((x2.shape[0], self.class_count), self.base_score)
        lr = self.config.learning_rate
        for trees in self.rounds:
            for c, tree in enumerate(trees):
                raw[:, c] += lr * tree.predict(x2)
        return raw

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        p = softmax_rows(self.raw_scores(x))
        return p[0] if np.ndim(x) == 1 else p

    def predict(self, x: np.ndarray):
        """Class index (lowest index wins ties) and probabilities.

        For a single feature vector returns ``(int, probs[C])``; for a matrix
        returns ``(labels[N], probs[N, C])``.
        """
        p = softmax_rows(self.raw_scores(x))
        labels = p.argmax(axis=1)
        if np.ndim(x) == 1:
            return int(labels[0]), p[0]
        return labels, p

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": 1,
            "config": self.config.to_dict(),
            "class_count": self.class_count,
            "n_features": self.n_features,
            "base_score": self.base_score,
            "rounds": [[t.to_dict() for t in trees] for trees in self.rounds],
            "train_loss": self.train_loss,
            "eval_loss": self.eval_loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        if d.get("format") != FORMAT:
            raise LoadError(f"not an ensemble document (format={d.get('format')!r})")
        try:
            ens = cls(BoostConfig(**d["config"]), int(d["class_count"]), int(d["n_features"]),
                      [[Tree.from_dict(t) for t in trees] for trees in d["rounds"]],
                      float(d.get("base_score", 0.0)), list(d.get("train_loss", [])),
                      list(d.get("eval_loss", [])))
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"corrupt ensemble document: {exc}") from exc
        if any(len(trees) != ens.class_count for trees in ens.rounds):
            raise LoadError("every round must hold one tree per class")
        return ens


def fit(x: np.ndarray, labels: np.ndarray, cfg: BoostConfig | None = None, n_classes: int | None = None,
        eval_set: tuple[np.ndarray, np.ndarray] | None = None) -> Ensemble:
    """Boost ``cfg.n_estimators`` rounds of softmax-gradient trees.

    Each round computes gradients and hessians at the current raw scores,
    grows one tree per class, then adds ``learning_rate * tree`` to that
    class's scores.
    """
    cfg = cfg or BoostConfig()
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != labels.shape[0]:
        raise ShapeError("features must be [N, D] with one label per row")
    if x.shape[0] < 2:
        raise DataError("need at least 2 training rows")
    if not np.all(np.isfinite(x)):
        raise DataError("features contain NaN or Inf")
    if not np.issubdtype(labels.dtype, np.integer):
        raise DataError("labels must be integers")
    c = int(labels.max()) + 1 if n_classes is None else int(n_classes)
    if labels.min() < 0 or labels.max() >= c:
        raise DataError(f"labels must lie in [0, {c})")
    if len(np.unique(labels)) < 2:
        raise DataError("need at least 2 distinct classes")
    if c < 2:
        raise ConfigError("need at least 2 classes")

    ens = Ensemble(cfg, c, x.shape[1])
    raw = np.full((x.shape[0], c), ens.base_score)
    if eval_set is not None:
        ex = ens._check_width(eval_set[0])
        ey = np.asarray(eval_set[1])
        eraw = np.full((ex.shape[0], c), ens.base_score)
    lr = cfg.learning_rate
    for r in range(cfg.n_estimators):
        g, h = softmax_grad_hess(raw, labels)
        trees = [build_tree(x, g[:, k], h[:, k], cfg) for k in range(c)]
        for k, tree in enumerate(trees):
            raw[:, k] += lr * tree.predict(x)
            if eval_set is not None:
                eraw[:, k] += lr * tree.predict(ex)
        ens.rounds.append(trees)
        ens.train_loss.append(log_loss(raw, labels))
        if eval_set is not None:
            ens.eval_loss.append(log_loss(eraw, ey))
        if (r + 1) % 100 == 0:
            log.info("round %d/%d train log-loss %.6f", r + 1, cfg.n_estimators, ens.train_loss[-1])
    return ens


def predict(ens: Ensemble, x: np.ndarray):
    return ens.predict(x)


def save_ensemble(ens: Ensemble, path: str | os.PathLike) -> None:
    atomic_write(path, json.dumps(ens.to_dict(), sort_keys=True) + "\n")


def load_ensemble(path: str | os.PathLike) -> Ensemble:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise LoadError(f"cannot read ensemble from {path}: {exc}") from exc
    return Ensemble.from_dict(d)
