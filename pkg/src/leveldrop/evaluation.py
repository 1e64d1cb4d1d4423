"""Train/test splitting, cross-validation folds, and classification metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SplitIndices:
    """Disjoint train/test row indices whose union covers all rows."""

    train_ids: np.ndarray
    test_ids: np.ndarray
    seed: int
    folds: tuple[np.ndarray, ...] | None = None


@dataclass
class EvaluationReport:
    """Per-level, per-model test metrics; None marks an undefined metric ("/" in text)."""

    level: int
    model: str
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float | None
    recall: float | None
    f1: float | None
    fp_rate: float | None
    auc: float | None
    threshold: float
    n_train: int
    n_test: int

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "model": self.model,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fp_rate": self.fp_rate,
            "auc": self.auc,
            "threshold": self.threshold,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


def split_train_test(n_rows: int, test_frac: float = 0.2, seed: int = 0) -> SplitIndices:
    """Uniform random split without stratification; test size is round(n * frac)."""
    if n_rows < 5:
        raise ValueError(f"need at least 5 rows to split, got {n_rows}")
    if not 0.0 < test_frac < 1.0:
        raise ValueError(f"test_frac must be in (0, 1), got {test_frac}")
    n_test = min(max(round(n_rows * test_frac), 1), n_rows - 1)
    perm = np.random.default_rng([seed]).permutation(n_rows)
    return SplitIndices(
        train_ids=np.sort(perm[n_test:]),
        test_ids=np.sort(perm[:n_test]),
        seed=seed,
    )


def kfold(train_ids: np.ndarray, k: int = 10, seed: int = 0) -> tuple[np.ndarray, ...]:
    """Partition train rows into k folds with sizes differing by at most one."""
    train_ids = np.asarray(train_ids)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > len(train_ids):
        raise ValueError(f"k = {k} exceeds train size {len(train_ids)}")
    perm = np.random.default_rng([seed]).permutation(train_ids)
    return tuple(np.sort(fold) for fold in np.array_split(perm, k))


def confusion(labels: np.ndarray, predictions: np.ndarray) -> tuple[int, int, int, int]:
    """(TP, FP, TN, FN) with positive = 1 = abandoned."""
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.shape != predictions.shape:
        raise ValueError(f"length mismatch: {labels.shape} labels vs {predictions.shape} predictions")
    tp = int(np.sum((labels == 1) & (predictions == 1)))
    fp = int(np.sum((labels == 0) & (predictions == 1)))
    tn = int(np.sum((labels == 0) & (predictions == 0)))
    fn = int(np.sum((labels == 1) & (predictions == 0)))
    return tp, fp, tn, fn


def precision_recall_f1(
    conf: tuple[int, int, int, int],
) -> tuple[float | None, float | None, float | None]:
    """precision = TP/(TP+FP), recall = TP/(TP+FN), f1 = 2PR/(P+R); None when undefined."""
    tp, fp, _, fn = conf
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1


def false_positive_rate(conf: tuple[int, int, int, int]) -> float | None:
    _, fp, tn, _ = conf
    return fp / (fp + tn) if fp + tn > 0 else None


def roc_points(labels: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) over all distinct score cut points, from (0,0) to (1,1)."""
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC requires at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # indices where a score block ends (distinct thresholds)
    distinct = np.flatnonzero(np.diff(sorted_scores) != 0.0)
    boundaries = np.append(distinct, len(sorted_scores) - 1)
    tp = np.cumsum(sorted_labels)[boundaries]
    fp = (boundaries + 1) - tp
    tpr = np.concatenate(([0.0], tp / n_pos))
    fpr = np.concatenate(([0.0], fp / n_neg))
    thresholds = np.concatenate(([np.inf], sorted_scores[boundaries]))
    return fpr, tpr, thresholds


def roc_auc(labels: np.ndarray, scores: np.ndarray) -> float | None:
    """Trapezoidal area under the ROC curve; ties count one half. None if single-class."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.sum() in (0.0, float(len(labels))):
        return None
    fpr, tpr, _ = roc_points(labels, scores)
    trapezoid = getattr(np, "trapezoid", np.trapz)
    return float(trapezoid(tpr, fpr))


def tune_threshold(oof_scores: np.ndarray, oof_labels: np.ndarray) -> float:
    """Distinct score value maximizing F1 on out-of-fold predictions (ties: lowest).

    Degenerate inputs (single-class labels or all scores equal) fall back to 0.5.
    """
    scores = np.asarray(oof_scores, dtype=np.float64)
    labels = np.asarray(oof_labels, dtype=np.float64)
    if labels.sum() in (0.0, float(len(labels))):
        return 0.5
    candidates = np.unique(scores)
    if len(candidates) < 2:
        return 0.5
    best_t = 0.5
    best_f1 = -1.0
    for t in candidates:
        preds = (scores >= t).astype(np.int64)
        _, _, f1 = precision_recall_f1(confusion(labels, preds))
        f1 = -1.0 if f1 is None else f1
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(t)
    return best_t


def auc_by_pair_counting(labels: np.ndarray, scores: np.ndarray) -> float | None:
    """O(n^2) pairwise-concordance AUC (ties one half); reference oracle for roc_auc."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return None
    wins = 0.0
    for p in pos:
        wins += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return float(wins / (len(pos) * len(neg)))
