"""Static figures: hypnograms, training curves and accuracy against sequence length."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .stages import STAGE_NAMES  # noqa: E402

# top to bottom: W, REM, N1, N2, N3
HYPNOGRAM_ORDER = ["W", "REM", "N1", "N2", "N3"]
_LEVEL = {STAGE_NAMES.index(name): -i for i, name in enumerate(HYPNOGRAM_ORDER)}


def hypnogram_levels(stages) -> np.ndarray:
    return np.array([_LEVEL[int(s)] for s in stages])


def plot_hypnogram(path, predicted, expert=None, title=None) -> Path:
    """Step plot of stage against epoch index, expert on top when given."""
    tracks = [("Expert", expert)] if expert is not None else []
    tracks.append(("Predicted", predicted))
    fig, axes = plt.subplots(len(tracks), 1, figsize=(10, 2.2 * len(tracks)), sharex=True, squeeze=False)
    for ax, (name, stages) in zip(axes[:, 0], tracks):
        x = np.arange(len(stages) + 1)
        y = hypnogram_levels(stages)
        ax.step(x, np.append(y, y[-1:]), where="post", lw=0.9)
        ax.set_yticks([-i for i in range(5)], HYPNOGRAM_ORDER)
        ax.set_ylim(-4.5, 0.5)
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("Epoch index")
    if title:
        axes[0, 0].set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_training_log(path, history) -> Path:
    steps = [h["step"] for h in history]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, [h["train_loss"] for h in history], label="train loss")
    ax.plot(steps, [h["val_loss"] for h in history], label="val loss")
    ax2 = ax.twinx()
    ax2.plot(steps, [h["val_accuracy"] for h in history], color="k", ls="--", label="val accuracy")
    ax.set_xlabel("step")
    ax.legend(loc="upper left")
    ax2.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_sequence_curve(path, rows, title=None) -> Path:
    """``rows``: dicts with L, accuracy, mf1 (fractions)."""
    Ls = [r["L"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(Ls, [100 * r["accuracy"] for r in rows], "o-", label="Accuracy")
    ax.plot(Ls, [100 * r["mf1"] for r in rows], "s-", label="MF1")
    ax.set_xlabel("Sequence length L")
    ax.set_ylabel("%")
    ax.set_xticks(Ls)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
