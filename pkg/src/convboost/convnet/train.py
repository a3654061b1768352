"""Mini-batch SGD training loop and its history record."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, ShapeError
from .network import Network

log = logging.getLogger(__name__)

HISTORY_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 25
    batch_size: int = 2
    init_stddev: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.init_stddev <= 0:
            raise ConfigError("init_stddev must be > 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float | None
    val_acc: float | None
    lr: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in self.records:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v
                        for v in asdict(r).values()])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainHistory":
        rows = list(csv.DictReader(io.StringIO(text)))
        recs = []
        for row in rows:
            opt = lambda k: float(row[k]) if row[k] != "" else None  # noqa: E731
            recs.append(EpochRecord(int(row["epoch"]), float(row["train_loss"]), float(row["train_acc"]),
                                    opt("val_loss"), opt("val_acc"), float(row["lr"])))
        return cls(recs)


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
    """Plain gradient descent ``p - lr * grad`` for every parameter."""
    if lr <= 0:
        raise ConfigError("learning rate must be > 0")
    if params.keys() != grads.keys():
        raise ShapeError("params and grads have different keys")
    out = {}
    for k, p in params.items():
        if grads[k].shape != p.shape:
            raise ShapeError(f"{k}: gradient shape {grads[k].shape} != parameter shape {p.shape}")
        out[k] = p - lr * grads[k]
    return out


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def evaluate(net: Network, x: np.ndarray, labels: np.ndarray, batch_size: int = 64) -> tuple[float, float]:
    """Inference-mode (loss, accuracy) over a labelled array set."""
    n_classes = net.output_shape[0]
    total, correct = 0.0, 0
    for start in range(0, x.shape[0], batch_size):
        xb, yb = x[start:start + batch_size], labels[start:start + batch_size]
        probs, _ = net.forward(xb, training=False)
        ce = -np.log(probs[np.arange(len(yb)), yb] + 1e-12)
        total += float(ce.sum())
        correct += int(np.sum(probs.argmax(axis=1) == yb))
    return total / x.shape[0] + net.penalty(), correct / x.shape[0]


def fit(net: Network, train: tuple[np.ndarray, np.ndarray], val: tuple[np.ndarray, np.ndarray] | None,
        cfg: TrainConfig) -> TrainHistory:
    """Shuffled mini-batch SGD for ``cfg.epochs`` epochs; mutates ``net`` in place.

    ``train`` and ``val`` are ``(images [N, H, W, C], integer labels [N])``.
    Training loss and accuracy are running averages over the epoch's batches
    (dropout active); validation metrics use inference mode.
    """
    x, y = train
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise DataError("training set is empty")
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"training images {x.shape[1:]} do not match network input {net.input_shape}")
    n_classes = net.output_shape[0]
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(f"labels must lie in [0, {n_classes})")
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    dropout_rng = np.random.default_rng([cfg.seed, 2])
    history = TrainHistory()
    n = x.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            yb = _one_hot(y[idx], n_classes)
            probs, cache = net.forward(x[idx], training=True, rng=dropout_rng)
            loss_sum += net.loss(probs, yb) * len(idx)
            correct += int(np.sum(probs.argmax(axis=1) == y[idx]))
            grads = net.backward(cache, yb)
            net.set_parameters(sgd_step(net.parameters(), grads, cfg.learning_rate))
        val_loss = val_acc = None
        if val is not None and len(val[0]):
            val_loss, val_acc = evaluate(net, np.asarray(val[0], dtype=np.float64), np.asarray(val[1]))
        rec = EpochRecord(epoch, loss_sum / n, correct / n, val_loss, val_acc, cfg.learning_rate)
        history.records.append(rec)
        log.info("epoch %d/%d loss %.4f acc %.4f val_loss %s val_acc %s", epoch, cfg.epochs,
                 rec.train_loss, rec.train_acc, val_loss, val_acc)
    return history
