"""End-to-end per-level evaluation: features -> preprocess -> split -> fit -> metrics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import interpret
from .evaluation import (
    EvaluationReport,
    SplitIndices,
    confusion,
    false_positive_rate,
    kfold,
    precision_recall_f1,
    roc_auc,
    roc_points,
    split_train_test,
    tune_threshold,
)
from .features import LabeledMatrix, assemble_matrix
from .ingest import GameLog
from .models import (
    BASELINE_KINDS,
    KIND_GBDT,
    KIND_LOGREG,
    KIND_RF,
    TRAINABLE_KINDS,
    TrainConfig,
    classify,
    default_config,
    fit_baseline,
    fit_gbdt,
    fit_logreg_l1,
    fit_random_forest,
    predict_baseline,
    predict_ensemble,
    predict_linear,
    select_l1_lambda,
)
from .preprocess import (
    NORMALIZE_PAPER_FAITHFUL,
    PreprocessConfig,
    drop_high_missing,
    knn_impute,
    zscore_apply,
    zscore_fit,
)

THRESHOLD_FIXED = "fixed"
THRESHOLD_CV_F1 = "cv_f1"

# purpose codes for deriving independent rng streams from (seed, level)
_SEED_SPLIT = 1
_SEED_FOLDS = 2
_SEED_MODEL = 3
_SEED_BL1 = 4


@dataclass(frozen=True)
class EvalOptions:
    feature_mode: str = "12"
    exclude_never_attempted: bool = False
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    test_frac: float = 0.2
    threshold: float = 0.5
    threshold_policy: str = THRESHOLD_FIXED
    cv_folds: int = 10
    include_baselines: bool = True


@dataclass
class LevelArtifacts:
    level: int
    reports: list[EvaluationReport]
    models: dict[str, object]
    split: SplitIndices
    train_matrix: LabeledMatrix
    stats_json: str
    dropped: tuple[str, ...]
    roc: dict[str, tuple[np.ndarray, np.ndarray]]
    importance: interpret.ImportanceReport | None
    odds: interpret.LevelOddsRatios | None
    label_mean: float


def derive_seed(seed: int, level: int, purpose: int, extra: int = 0) -> int:
    """Stable per-(level, purpose) integer seed derived from the master seed."""
    ss = np.random.SeedSequence([seed, level, purpose, extra])
    return int(ss.generate_state(1)[0])


def _fit_model(kind, X, y, config, feature_names):
    if kind == KIND_GBDT:
        return fit_gbdt(X, y, config, feature_names)
    if kind == KIND_RF:
        return fit_random_forest(X, y, config, feature_names)
    raise ValueError(f"unknown trainable kind: {kind!r}")


def _predict(kind, model, X):
    if kind == KIND_LOGREG:
        return predict_linear(model, X)
    return predict_ensemble(model, X)


def _oof_scores(kind, X, y, config, folds, feature_names, lam=None):
    """Out-of-fold scores for threshold tuning; each fold's model never saw its rows."""
    scores = np.zeros(len(y))
    n = len(y)
    for fold in folds:
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        if kind == KIND_LOGREG:
            model = fit_logreg_l1(X[mask], y[mask], config, feature_names, l1_lambda=lam)
        else:
            model = _fit_model(kind, X[mask], y[mask], config, feature_names)
        scores[fold] = _predict(kind, model, X[fold])
    return scores


def run_level(
    log: GameLog,
    level: int,
    kinds: tuple[str, ...] = TRAINABLE_KINDS,
    configs: dict[str, TrainConfig] | None = None,
    seed: int = 0,
    options: EvalOptions | None = None,
    audit: list[tuple[str, frozenset]] | None = None,
) -> LevelArtifacts:
    """Run the full prediction pipeline for one level and collect all artifacts.

    `audit`, when given, records (stage, learner ids) for every fitting input so
    callers can assert test rows never leak into training.
    """
    options = options or EvalOptions()
    configs = configs or {}
    unknown = [k for k in kinds if k not in TRAINABLE_KINDS]
    if unknown:
        raise ValueError(f"unknown model kind(s): {', '.join(unknown)}")

    matrix = assemble_matrix(
        log, level, options.feature_mode,
        exclude_never_attempted=options.exclude_never_attempted,
    )
    matrix, dropped = drop_high_missing(matrix, options.preprocess)
    matrix = knn_impute(matrix, options.preprocess)

    split = split_train_test(
        matrix.n_rows, options.test_frac, seed=derive_seed(seed, level, _SEED_SPLIT)
    )
    train_ids = split.train_ids
    test_ids = split.test_ids
    train_learners = frozenset(matrix.learner_ids[i] for i in train_ids)

    if options.preprocess.normalization_mode == NORMALIZE_PAPER_FAITHFUL:
        stats = zscore_fit(matrix, options.preprocess)
        if audit is not None:
            audit.append(("zscore_fit:all_rows", frozenset(matrix.learner_ids)))
    else:
        stats = zscore_fit(matrix, options.preprocess, rows=train_ids)
        if audit is not None:
            audit.append(("zscore_fit", train_learners))
    stats = replace(stats, dropped=tuple(dropped))
    normalized = zscore_apply(matrix, stats)

    X = normalized.values
    y = normalized.labels.astype(np.float64)
    Xtr, ytr = X[train_ids], y[train_ids]
    Xte, yte = X[test_ids], y[test_ids]

    folds_cache: dict[int, tuple[np.ndarray, ...]] = {}

    def folds_for(k: int) -> tuple[np.ndarray, ...]:
        if k not in folds_cache:
            local = kfold(
                np.arange(len(train_ids)), k=k, seed=derive_seed(seed, level, _SEED_FOLDS)
            )
            folds_cache[k] = local
        return folds_cache[k]

    reports: list[EvaluationReport] = []
    models: dict[str, object] = {}
    roc: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def add_report(name: str, scores: np.ndarray, threshold: float) -> None:
        preds = classify(scores, threshold)
        conf = confusion(yte, preds)
        precision, recall, f1 = precision_recall_f1(conf)
        reports.append(
            EvaluationReport(
                level=level,
                model=name,
                tp=conf[0],
                fp=conf[1],
                tn=conf[2],
                fn=conf[3],
                precision=precision,
                recall=recall,
                f1=f1,
                fp_rate=false_positive_rate(conf),
                auc=roc_auc(yte, scores),
                threshold=threshold,
                n_train=len(train_ids),
                n_test=len(test_ids),
            )
        )
        if len(np.unique(yte)) == 2 and len(np.unique(scores)) > 1:
            fpr, tpr, _ = roc_points(yte, scores)
            roc[name] = (fpr, tpr)

    for model_index, kind in enumerate(kinds):
        config = configs.get(kind) or default_config(kind)
        config = replace(config, seed=derive_seed(seed, level, _SEED_MODEL, model_index))
        lam = None
        if kind == KIND_LOGREG:
            lam = config.l1_lambda
            if lam is None:
                lam = select_l1_lambda(Xtr, ytr, config, list(folds_for(config.cv_folds)))
                if audit is not None:
                    audit.append((f"cv:{kind}", train_learners))
            model = fit_logreg_l1(Xtr, ytr, config, normalized.feature_names, l1_lambda=lam)
        else:
            model = _fit_model(kind, Xtr, ytr, config, normalized.feature_names)
        if audit is not None:
            audit.append((f"fit:{kind}", train_learners))
        models[kind] = model

        threshold = options.threshold
        if options.threshold_policy == THRESHOLD_CV_F1:
            oof = _oof_scores(
                kind, Xtr, ytr, config, folds_for(options.cv_folds),
                normalized.feature_names, lam=lam,
            )
            threshold = tune_threshold(oof, ytr)
            if audit is not None:
                audit.append((f"tune_threshold:{kind}", train_learners))
        add_report(kind, _predict(kind, model, Xte), threshold)

    if options.include_baselines:
        for kind in BASELINE_KINDS:
            bl = fit_baseline(ytr, kind, seed=derive_seed(seed, level, _SEED_BL1))
            if audit is not None:
                audit.append((f"fit:{kind}", train_learners))
            models[kind] = bl
            add_report(kind, predict_baseline(bl, len(test_ids)), 0.5)

    train_matrix = LabeledMatrix(
        level=level,
        learner_ids=tuple(normalized.learner_ids[i] for i in train_ids),
        feature_names=normalized.feature_names,
        values=Xtr,
        labels=normalized.labels[train_ids],
    )

    importance = None
    if KIND_GBDT in models:
        importance = interpret.gain_importance(models[KIND_GBDT], level=level)
        importance.correlations = interpret.feature_correlations(Xtr)
    odds = interpret.odds_ratios(Xtr, ytr, normalized.feature_names, level)
    if audit is not None:
        audit.append(("odds_ratios", train_learners))

    return LevelArtifacts(
        level=level,
        reports=reports,
        models=models,
        split=split,
        train_matrix=train_matrix,
        stats_json=stats.to_json(),
        dropped=tuple(dropped),
        roc=roc,
        importance=importance,
        odds=odds,
        label_mean=float(normalized.labels.mean()),
    )


def evaluate_level(
    log: GameLog,
    level: int,
    kinds: tuple[str, ...] = TRAINABLE_KINDS,
    configs: dict[str, TrainConfig] | None = None,
    seed: int = 0,
    options: EvalOptions | None = None,
) -> list[EvaluationReport]:
    """Table-shaped per-model test reports for one level (requested kinds + baselines)."""
    return run_level(log, level, kinds, configs, seed, options).reports
