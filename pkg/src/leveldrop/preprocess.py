"""Missingness filtering, KNN imputation, and z-score normalization."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .features import LabeledMatrix

NORMALIZE_TRAIN_ONLY = "train_only"
NORMALIZE_PAPER_FAITHFUL = "paper_faithful_full_dataset"
NORMALIZATION_MODES = (NORMALIZE_TRAIN_ONLY, NORMALIZE_PAPER_FAITHFUL)


@dataclass(frozen=True)
class PreprocessConfig:
    drop_threshold: float = 0.5
    knn_k: int = 5
    normalization_mode: str = NORMALIZE_TRAIN_ONLY
    binary_features: tuple[str, ...] = ("activated",)

    def __post_init__(self):
        if not 0.0 <= self.drop_threshold <= 1.0:
            raise ValueError(f"drop_threshold must be in [0, 1], got {self.drop_threshold}")
        if self.knn_k < 1:
            raise ValueError(f"knn_k must be >= 1, got {self.knn_k}")
        if self.normalization_mode not in NORMALIZATION_MODES:
            raise ValueError(f"unknown normalization_mode: {self.normalization_mode!r}")


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature mean/std (sample std, N-1); binary features are left unscaled.

    Zero-variance features keep std 0 and emit 0 on apply. `dropped` records
    features removed upstream by the missingness filter (in-process only, not
    part of the JSON interchange map).
    """

    means: dict[str, float]
    stds: dict[str, float]
    binary: tuple[str, ...]
    zero_variance: tuple[str, ...]
    dropped: tuple[str, ...] = ()

    def scaled(self, name: str) -> bool:
        return name not in self.binary

    def to_json(self) -> str:
        payload = {
            name: {"mean": self.means[name], "std": self.stds[name], "scaled": self.scaled(name)}
            for name in self.means
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NormalizationStats":
        payload = json.loads(text)
        means = {name: entry["mean"] for name, entry in payload.items()}
        stds = {name: entry["std"] for name, entry in payload.items()}
        binary = tuple(sorted(name for name, entry in payload.items() if not entry["scaled"]))
        zero_var = tuple(sorted(name for name, entry in payload.items() if entry["scaled"] and entry["std"] == 0.0))
        return cls(means=means, stds=stds, binary=binary, zero_variance=zero_var)


def missingness_report(matrix: LabeledMatrix) -> dict[str, float]:
    """Missing-cell fraction per feature (missing cells / rows)."""
    n = matrix.n_rows
    frac = np.isnan(matrix.values).sum(axis=0) / n if n else np.zeros(len(matrix.feature_names))
    return {name: float(frac[j]) for j, name in enumerate(matrix.feature_names)}


def drop_high_missing(
    matrix: LabeledMatrix, config: PreprocessConfig
) -> tuple[LabeledMatrix, list[str]]:
    """Remove features whose missing fraction exceeds the drop threshold."""
    report = missingness_report(matrix)
    dropped = [name for name in matrix.feature_names if report[name] > config.drop_threshold]
    if len(dropped) == len(matrix.feature_names):
        raise ValueError("all features exceed the missingness drop threshold")
    if not dropped:
        return matrix, []
    keep = [j for j, name in enumerate(matrix.feature_names) if name not in dropped]
    kept_names = tuple(matrix.feature_names[j] for j in keep)
    return (
        LabeledMatrix(
            level=matrix.level,
            learner_ids=matrix.learner_ids,
            feature_names=kept_names,
            values=matrix.values[:, keep],
            labels=matrix.labels,
        ),
        dropped,
    )


def _observed_scale(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean/std over observed cells, for standardized distances."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(values, axis=0)
        std = np.nanstd(values, axis=0, ddof=1)
    mean = np.where(np.isnan(mean), 0.0, mean)
    std = np.where(np.isnan(std) | (std == 0.0), 1.0, std)
    return mean, std


def knn_impute(matrix: LabeledMatrix, config: PreprocessConfig) -> LabeledMatrix:
    """Fill each missing cell with the mean of the feature over the k nearest rows.

    Distance is Euclidean over mutually observed coordinates after per-feature
    standardization; only rows observed at the target feature are candidates,
    and ties break by learner_id. Observed cells pass through bit-unchanged.
    """
    values = matrix.values
    missing = np.isnan(values)
    if not missing.any():
        return matrix
    if missing.all(axis=1).any():
        bad = matrix.learner_ids[int(np.argmax(missing.all(axis=1)))]
        raise ValueError(f"row {bad} has all features missing")
    if missing.all(axis=0).any():
        j = int(np.argmax(missing.all(axis=0)))
        raise ValueError(f"feature {matrix.feature_names[j]} has no observed values")

    mean, std = _observed_scale(values)
    z = (values - mean) / std
    ids = np.asarray(matrix.learner_ids)
    observed = ~missing
    out = values.copy()
    short_of_neighbors = 0

    for i in np.flatnonzero(missing.any(axis=1)):
        diff = z - z[i]
        shared = observed & observed[i]
        d2 = np.where(shared, diff * diff, 0.0).sum(axis=1)
        usable = shared.any(axis=1)
        usable[i] = False
        for j in np.flatnonzero(missing[i]):
            cand = np.flatnonzero(usable & observed[:, j])
            if cand.size == 0:
                raise ValueError(
                    f"cannot impute {matrix.feature_names[j]} for row {matrix.learner_ids[i]}:"
                    " no candidate rows share observed coordinates"
                )
            if cand.size < config.knn_k:
                short_of_neighbors += 1
            order = np.lexsort((ids[cand], d2[cand]))
            chosen = cand[order[: config.knn_k]]
            out[i, j] = float(np.mean(values[chosen, j]))

    if short_of_neighbors:
        warnings.warn(
            f"knn_impute: fewer than k={config.knn_k} candidate rows for "
            f"{short_of_neighbors} cell(s); used all available",
            stacklevel=2,
        )
    return replace(matrix, values=out)


def zscore_fit(
    matrix: LabeledMatrix,
    config: PreprocessConfig,
    rows: np.ndarray | None = None,
) -> NormalizationStats:
    """Fit per-feature mean/std (ddof=1) on the given rows (all rows by default).

    The matrix must be complete (post-imputation). Binary features are recorded
    but excluded from scaling.
    """
    values = matrix.values if rows is None else matrix.values[rows]
    if np.isnan(values).any():
        raise ValueError("zscore_fit requires a complete (imputed) matrix")
    means: dict[str, float] = {}
    stds: dict[str, float] = {}
    zero_var: list[str] = []
    binary = tuple(name for name in matrix.feature_names if name in config.binary_features)
    for j, name in enumerate(matrix.feature_names):
        col = values[:, j]
        means[name] = float(np.mean(col))
        std = float(np.std(col, ddof=1)) if len(col) > 1 else 0.0
        stds[name] = std
        if name not in binary and std == 0.0:
            zero_var.append(name)
    return NormalizationStats(
        means=means, stds=stds, binary=binary, zero_variance=tuple(zero_var)
    )


def zscore_apply(matrix: LabeledMatrix, stats: NormalizationStats) -> LabeledMatrix:
    """Scale to (x - mean) / std; zero-variance features emit 0, binaries pass through."""
    missing_stats = [name for name in matrix.feature_names if name not in stats.means]
    if missing_stats:
        raise ValueError(f"no normalization stats for feature(s): {', '.join(missing_stats)}")
    if np.isnan(matrix.values).any():
        raise ValueError("zscore_apply requires a complete (imputed) matrix")
    out = matrix.values.copy()
    for j, name in enumerate(matrix.feature_names):
        if not stats.scaled(name):
            continue
        std = stats.stds[name]
        if std == 0.0:
            out[:, j] = 0.0
        else:
            out[:, j] = (out[:, j] - stats.means[name]) / std
    return replace(matrix, values=out)
