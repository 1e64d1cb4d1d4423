"""Matplotlib figure rendering for run reports (written next to the CSV outputs)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .interpret import ImportanceReport
from .reports import MODEL_LABELS, MODEL_ORDER

FIG_DPI = 120
_FIGSIZE = (5.2, 3.6)


def _new_axes():
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)


def save_roc_figure(roc: dict[str, tuple[np.ndarray, np.ndarray]], level: int, path: Path) -> None:
    """One ROC curve per model plus the chance diagonal."""
    fig, ax = _new_axes()
    for model in sorted(roc, key=lambda m: MODEL_ORDER.index(m) if m in MODEL_ORDER else 99):
        fpr, tpr = roc[model]
        ax.plot(fpr, tpr, label=MODEL_LABELS.get(model, model), linewidth=1.5)
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=1, label="chance")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title(f"ROC, level {level}")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    _save(fig, path)


def save_importance_figure(report: ImportanceReport, level: int, path: Path) -> None:
    """Horizontal bars of relative gain importance, largest on top."""
    names = list(report.ranking)
    shares = [report.shares[n] for n in names]
    fig, ax = plt.subplots(figsize=(5.2, 0.32 * max(len(names), 4) + 1.2))
    pos = np.arange(len(names))[::-1]
    ax.barh(pos, shares, color="#4878a8")
    ax.set_yticks(pos)
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("Relative importance")
    ax.set_title(f"Feature importance (gain), level {level}")
    ax.grid(True, axis="x", alpha=0.3)
    _save(fig, path)


def save_rate_figure(label_means: dict[int, float], path: Path) -> None:
    """Next-level abandonment rate (cohort label mean) by level."""
    levels = sorted(label_means)
    rates = [label_means[lvl] for lvl in levels]
    fig, ax = _new_axes()
    ax.plot(levels, rates, marker="o", color="#a85048")
    ax.set_xticks(levels)
    ax.set_xlabel("Completed level")
    ax.set_ylabel("Abandonment rate of next level")
    ax.set_title("Cohort abandonment rate by level")
    ax.set_ylim(0, max(rates) * 1.25 + 0.01)
    _save(fig, path)
