"""Report figures: training curves, boosting loss, confusion heatmaps, head comparison.

Figures are drawn with the Agg canvas directly so no global pyplot state is
touched, and PNGs are written without the software-version chunk so reruns
produce identical bytes.
"""

from __future__ import annotations

import io
import os

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .fileio import atomic_write

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
}


def _new(ncols: int = 1, width: float = 4.0, height: float = 3.0):
    fig = Figure(figsize=(width * ncols, height), dpi=100)
    FigureCanvasAgg(fig)
    axes = fig.subplots(1, ncols)
    return fig, np.atleast_1d(axes)


def _save(fig: Figure, path: str | os.PathLike) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    atomic_write(path, buf.getvalue())


def plot_history(history, path) -> None:
    """Loss and accuracy per epoch, training vs validation."""
    import matplotlib

    with matplotlib.rc_context(STYLE):
        fig, (ax_loss, ax_acc) = _new(2)
        epochs = history.column("epoch")
        ax_loss.plot(epochs, history.column("train_loss"), "o-", label="train")
        ax_acc.plot(epochs, history.column("train_acc"), "o-", label="train")
        if any(v is not None for v in history.column("val_loss")):
            ax_loss.plot(epochs, history.column("val_loss"), "s--", label="validation")
            ax_acc.plot(epochs, history.column("val_acc"), "s--", label="validation")
        ax_loss.set(xlabel="epoch", ylabel="loss", title="Loss")
        ax_acc.set(xlabel="epoch", ylabel="accuracy", title="Accuracy", ylim=(0, 1.05))
        for ax in (ax_loss, ax_acc):
            ax.legend()
            ax.grid(alpha=0.3)
        fig.tight_layout()
        _save(fig, path)


def plot_boost_history(ensemble, path) -> None:
    import matplotlib

    with matplotlib.rc_context(STYLE):
        fig, (ax,) = _new(1, width=5.0)
        rounds = np.arange(1, len(ensemble.train_loss) + 1)
        ax.plot(rounds, ensemble.train_loss, label="train")
        if ensemble.eval_loss:
            ax.plot(rounds, ensemble.eval_loss, "--", label="validation")
        ax.set(xlabel="boosting round", ylabel="multiclass log-loss", title="Boosting loss")
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        _save(fig, path)


def plot_confusion(cm, path) -> None:
    """Annotated heatmap, rows = true class, columns = predicted class."""
    import matplotlib

    with matplotlib.rc_context(STYLE):
        n = cm.n_classes
        fig, (ax,) = _new(1, width=1.2 * n + 2.2, height=1.2 * n + 1.4)
        im = ax.imshow(cm.counts, cmap="Blues")
        fig.colorbar(im, ax=ax)
        ax.set_xticks(range(n), labels=cm.class_names, rotation=30, ha="right")
        ax.set_yticks(range(n), labels=cm.class_names)
        ax.set(xlabel="predicted", ylabel="true")
        thresh = cm.counts.max() / 2 if cm.counts.size else 0
        for i in range(n):
            for j in range(n):
                ax.text(j, i, str(cm.counts[i, j]), ha="center", va="center",
                        color="white" if cm.counts[i, j] > thresh else "black")
        fig.tight_layout()
        _save(fig, path)


def plot_comparison(report, path) -> None:
    import matplotlib

    names = ("accuracy", "f1", "specificity", "sensitivity")
    with matplotlib.rc_context(STYLE):
        fig, (ax,) = _new(1, width=5.0)
        x = np.arange(len(names))
        for k, (label, res) in enumerate((("CNN", report.cnn), ("hybrid", report.hybrid))):
            head = res.metrics.headline()
            vals = [head[n] if head[n] is not None else 0.0 for n in names]
            ax.bar(x + (k - 0.5) * 0.38, vals, width=0.38, label=label)
        ax.set_xticks(x, labels=names)
        ax.set(ylim=(0, 1.05), ylabel="score", title="Test-set comparison")
        ax.legend(loc="lower right")
        fig.tight_layout()
        _save(fig, path)
