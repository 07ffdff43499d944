"""Figures written next to the CSV/JSON outputs."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-stable
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def _num(v):
    return float(v) if v not in ("", None) else np.nan


def plot_training(rows, path):
    """Loss and learning rate per step, held-out accuracies per epoch."""
    train = [r for r in rows if r.get("loss") not in ("", None)]
    evals = [r for r in rows if r.get("fw") not in ("", None)]
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6))
    ax = axes[0]
    if train:
        steps = [int(r["step"]) for r in train]
        ax.plot(steps, [_num(r["loss"]) for r in train], color="C0", lw=1)
        ax.set_yscale("log")
        ax2 = ax.twinx()
        ax2.plot(steps, [_num(r["lr"]) for r in train], color="C1", lw=1, ls="--")
        ax2.set_ylabel("learning rate", color="C1")
    ax.set_xlabel("step")
    ax.set_ylabel("masked MSE", color="C0")
    ax.set_title("training")

    ax = axes[1]
    if evals:
        epochs = [int(r["epoch"]) for r in evals]
        for key, style in (("fw", "-o"), ("ftc", "-s"), ("fc", "-^")):
            ax.plot(epochs, [_num(r[key]) for r in evals], style, ms=3, label=key.upper())
        ax.legend(loc="lower right")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_title("validation")
    _save(fig, path)


def plot_accuracy(report, path, title="evaluation"):
    fig, ax = plt.subplots(figsize=(4, 3.2))
    vals = [report.fw, report.ftc, report.fc]
    bars = ax.bar(["FW", "FTC", "FC"], vals, color=["C0", "C1", "C2"])
    for b, v in zip(bars, vals):
        ax.text(b.get_x() + b.get_width() / 2, v + 0.01, f"{100 * v:.1f}%", ha="center", va="bottom", fontsize=8)
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("accuracy")
    ax.set_title(f"{title} (n={report.n})")
    _save(fig, path)


def _gray(canvas):
    c = np.asarray(canvas)
    return c.mean(axis=0) if c.ndim == 3 else c


def plot_reconstructions(inputs, outputs, labels, predictions, path, limit=8):
    """Masked input canvas above its reconstruction, one column per sample."""
    n = min(limit, len(inputs))
    if n == 0:
        return
    fig, axes = plt.subplots(2, n, figsize=(1.8 * n, 4), squeeze=False)
    for i in range(n):
        axes[0, i].imshow(_gray(inputs[i]), cmap="gray", vmin=0, vmax=1)
        axes[0, i].set_title(labels[i], fontsize=8)
        axes[1, i].imshow(_gray(outputs[i]), cmap="gray", vmin=0, vmax=1)
        ok = predictions[i] == labels[i]
        axes[1, i].set_title(repr(predictions[i]), fontsize=8, color="green" if ok else "red")
        for ax in axes[:, i]:
            ax.set_xticks([])
            ax.set_yticks([])
    _save(fig, path)
