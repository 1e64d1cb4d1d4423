"""Model interpretation: gain-based feature importance and odds-ratio impact."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .models import KIND_GBDT, TrainConfig, TreeEnsembleModel, fit_logreg_l1
from .trees import iter_internal_nodes

WEIGHT_CAP = 20.0

DIRECTION_POSITIVE = "+"
DIRECTION_NEGATIVE = "-"
DIRECTION_NONE = "none"

CONSISTENT_POSITIVE = "positive"
CONSISTENT_NEGATIVE = "negative"
MIXED = "mixed"


@dataclass
class ImportanceReport:
    """Relative share of total split gain per feature, normalized to sum 1."""

    level: int | None
    shares: dict[str, float]
    ranking: tuple[str, ...]
    no_splits: bool = False
    feature_names: tuple[str, ...] = ()
    correlations: np.ndarray | None = None


@dataclass
class LevelOddsRatios:
    """Odds ratio exp(w_j) per feature from an interpretation logistic regression."""

    level: int
    ors: dict[str, float]
    directions: dict[str, str]
    capped: tuple[str, ...] = ()


@dataclass
class OddsRatioTable:
    levels: tuple[LevelOddsRatios, ...]
    consistency: dict[str, str] = field(default_factory=dict)


def gain_importance(model: TreeEnsembleModel, level: int | None = None) -> ImportanceReport:
    """Sum recorded split gains per feature over all trees and normalize to 1.

    An ensemble with no splits yields all-zero shares flagged via no_splits.
    """
    if model.kind != KIND_GBDT:
        raise ValueError("importance requires gbdt")
    totals = {name: 0.0 for name in model.feature_names}
    for tree in model.trees:
        for node in iter_internal_nodes(tree):
            if node.gain is None:
                raise ValueError("model has no recorded per-node gains")
            totals[model.feature_names[node.feature]] += node.gain
    grand = sum(totals.values())
    if grand <= 0.0:
        shares = {name: 0.0 for name in model.feature_names}
        ranking = tuple(sorted(shares))
        return ImportanceReport(
            level=level,
            shares=shares,
            ranking=ranking,
            no_splits=True,
            feature_names=model.feature_names,
        )
    shares = {name: totals[name] / grand for name in model.feature_names}
    ranking = tuple(sorted(shares, key=lambda name: (-shares[name], name)))
    return ImportanceReport(
        level=level,
        shares=shares,
        ranking=ranking,
        no_splits=False,
        feature_names=model.feature_names,
    )


def feature_correlations(values: np.ndarray) -> np.ndarray:
    """Pairwise Pearson correlation of feature columns (NaN for constant columns)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.corrcoef(np.asarray(values, dtype=np.float64), rowvar=False)


def odds_ratios(
    values: np.ndarray,
    labels: np.ndarray,
    feature_names: tuple[str, ...],
    level: int,
    *,
    lam: float = 0.0,
    config: TrainConfig | None = None,
) -> LevelOddsRatios:
    """Fit an interpretation logistic regression (unpenalized by default) and
    report OR_j = exp(w_j) with its direction.

    Coefficients beyond +-20 (separation) are capped with a warning.
    """
    if config is None:
        config = TrainConfig(kind="logreg_l1", class_weight=1.0, max_iter=3000, tol=1e-10)
    model = fit_logreg_l1(values, labels, config, feature_names, l1_lambda=lam)
    weights = model.weights.copy()
    capped = tuple(
        name for name, w in zip(feature_names, weights) if abs(w) > WEIGHT_CAP
    )
    if capped:
        warnings.warn(
            f"odds_ratios: capped diverging coefficient(s) at +-{WEIGHT_CAP}: "
            + ", ".join(capped),
            stacklevel=2,
        )
        weights = np.clip(weights, -WEIGHT_CAP, WEIGHT_CAP)
    ors = {name: math.exp(float(w)) for name, w in zip(feature_names, weights)}
    directions = {}
    for name, w in zip(feature_names, weights):
        if w > 0:
            directions[name] = DIRECTION_POSITIVE
        elif w < 0:
            directions[name] = DIRECTION_NEGATIVE
        else:
            directions[name] = DIRECTION_NONE
    return LevelOddsRatios(level=level, ors=ors, directions=directions, capped=capped)


def consistency_table(level_tables: list[LevelOddsRatios]) -> dict[str, str]:
    """Classify each feature by OR sign across levels: positive, negative, or mixed."""
    if len(level_tables) < 2:
        raise ValueError("consistency requires odds ratios from at least 2 levels")
    names: list[str] = []
    for table in level_tables:
        for name in table.ors:
            if name not in names:
                names.append(name)
    out: dict[str, str] = {}
    for name in names:
        ors = [t.ors[name] for t in level_tables if name in t.ors]
        if all(v > 1.0 for v in ors):
            out[name] = CONSISTENT_POSITIVE
        elif all(v < 1.0 for v in ors):
            out[name] = CONSISTENT_NEGATIVE
        else:
            out[name] = MIXED
    return out


def build_odds_table(level_tables: list[LevelOddsRatios]) -> OddsRatioTable:
    ordered = tuple(sorted(level_tables, key=lambda t: t.level))
    consistency = consistency_table(list(ordered)) if len(ordered) >= 2 else {}
    return OddsRatioTable(levels=ordered, consistency=consistency)
