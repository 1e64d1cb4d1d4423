"""Classifier families: L1 logistic regression, random forest, GBDT, baselines."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .trees import (
    Tree,
    fit_classification_tree,
    fit_regression_tree,
    predict_tree_batch,
    tree_from_dict,
    tree_to_dict,
)

KIND_LOGREG = "logreg_l1"
KIND_RF = "random_forest"
KIND_GBDT = "gbdt"
KIND_BL1 = "bl1"
KIND_BL2 = "bl2"
KIND_BL3 = "bl3"
BASELINE_KINDS = (KIND_BL1, KIND_BL2, KIND_BL3)
TRAINABLE_KINDS = (KIND_GBDT, KIND_LOGREG, KIND_RF)

PROB_CLAMP = 1e-6
BASE_SCORE_CLAMP = 10.0


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 0.5 * (1.0 + np.tanh(np.asarray(z, dtype=np.float64) / 2.0))


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def log_loss(labels: np.ndarray, probs: np.ndarray, sample_weight: np.ndarray | None = None) -> float:
    """Mean (optionally weighted) logistic loss with probabilities clamped at 1e-6."""
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    losses = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    if sample_weight is None:
        return float(np.mean(losses))
    w = np.asarray(sample_weight, dtype=np.float64)
    return float(np.sum(w * losses) / np.sum(w))


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one model kind; irrelevant fields are ignored per kind."""

    kind: str
    seed: int = 0
    # L1 logistic regression
    l1_lambda: float | None = None  # None selects from lambda_grid by CV
    lambda_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1)
    cv_folds: int = 10
    tol: float = 1e-10
    max_iter: int = 5000
    # tree ensembles
    n_trees: int = 100
    max_depth: int = 2
    min_leaf: int = 1
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    feature_subset_size: int | None = None  # None -> ceil(sqrt(d)) for RF, all for GBDT
    bootstrap: bool = True
    # class imbalance: None -> negatives/positives ratio; 1.0 -> unweighted
    class_weight: float | None = None

    def __post_init__(self):
        if self.n_trees < 1 or self.min_leaf < 1 or self.max_iter < 1 or self.cv_folds < 2:
            raise ValueError("n_trees, min_leaf, max_iter must be >= 1 and cv_folds >= 2")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.reg_lambda < 0 or self.gamma < 0 or self.tol <= 0:
            raise ValueError("reg_lambda and gamma must be >= 0 and tol > 0")
        if self.class_weight is not None and self.class_weight <= 0:
            raise ValueError(f"class_weight must be positive, got {self.class_weight}")


def default_config(kind: str, seed: int = 0) -> TrainConfig:
    if kind == KIND_GBDT:
        return TrainConfig(kind=kind, seed=seed, n_trees=100, max_depth=2, learning_rate=0.3)
    if kind == KIND_RF:
        return TrainConfig(kind=kind, seed=seed, n_trees=200, max_depth=25, min_leaf=1, learning_rate=1.0)
    if kind == KIND_LOGREG:
        return TrainConfig(kind=kind, seed=seed)
    raise ValueError(f"unknown trainable kind: {kind!r}")


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    l1_lambda: float
    feature_names: tuple[str, ...]
    n_iter: int = 0
    objective: float = float("nan")
    converged: bool = True


@dataclass
class TreeEnsembleModel:
    kind: str  # random_forest | gbdt
    trees: tuple[Tree, ...]
    base_score: float
    learning_rate: float
    feature_names: tuple[str, ...]
    config: TrainConfig | None = None
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BaselineModel:
    kind: str  # bl1 | bl2 | bl3
    positive_rate: float = 0.0
    seed: int = 0


def _sample_weights(y: np.ndarray, class_weight: float | None) -> np.ndarray:
    n_pos = float(y.sum())
    n_neg = float(len(y) - n_pos)
    if class_weight is None:
        class_weight = (n_neg / n_pos) if n_pos > 0 else 1.0
    return np.where(y == 1, class_weight, 1.0)


def _l1_objective(X, y_pm, w, b, weights, lam):
    z = X @ w + b
    smooth = float(np.sum(weights * np.logaddexp(0.0, -y_pm * z)))
    return smooth + lam * float(np.abs(w).sum())


def _smooth_loss_and_grad(X, y, y_pm, w, b, weights):
    z = X @ w + b
    loss = float(np.sum(weights * np.logaddexp(0.0, -y_pm * z)))
    r = weights * (sigmoid(z) - y)
    return loss, X.T @ r, float(r.sum())


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def fit_logreg_l1(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    feature_names: tuple[str, ...],
    *,
    l1_lambda: float | None = None,
) -> LinearModel:
    """Minimize weighted mean logistic loss + lambda * ||w||_1 (intercept unpenalized).

    Accelerated proximal gradient (soft-threshold steps with backtracking on the
    step size and function-based momentum restarts); stops when the objective
    decrease falls below config.tol or at config.max_iter, setting `converged`.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains non-finite values")
    lam = config.l1_lambda if l1_lambda is None else l1_lambda
    if lam is None:
        raise ValueError("l1_lambda not set; use select_l1_lambda or pass l1_lambda")
    raw_weights = _sample_weights(y, config.class_weight)
    weights = raw_weights / raw_weights.sum()
    y_pm = 2.0 * y - 1.0

    d = X.shape[1]
    w = np.zeros(d)
    b = 0.0
    w_prev, b_prev = w, b
    theta = 1.0
    step = 1.0
    obj = _l1_objective(X, y_pm, w, b, weights, lam)
    n_iter = 0
    converged = False
    pure_step = True  # no momentum on the first step or right after a restart

    for n_iter in range(1, config.max_iter + 1):
        if pure_step:
            theta = 1.0
            theta_next = 1.0
            wv, bv = w, b
        else:
            theta_next = (1.0 + math.sqrt(1.0 + 4.0 * theta * theta)) / 2.0
            beta = (theta - 1.0) / theta_next
            wv = w + beta * (w - w_prev)
            bv = b + beta * (b - b_prev)

        f_v, grad_w, grad_b = _smooth_loss_and_grad(X, y, y_pm, wv, bv, weights)
        step = min(step * 2.0, 1e8)
        while True:
            w_new = _soft_threshold(wv - step * grad_w, step * lam)
            b_new = bv - step * grad_b
            dw = w_new - wv
            db = b_new - bv
            f_new = _smooth_loss_and_grad(X, y, y_pm, w_new, b_new, weights)[0]
            quad = f_v + float(grad_w @ dw) + grad_b * db + (float(dw @ dw) + db * db) / (2.0 * step)
            if f_new <= quad + 1e-12:
                break
            step /= 2.0

        obj_new = f_new + lam * float(np.abs(w_new).sum())
        if obj_new > obj:
            if pure_step:
                # a momentum-free proximal step cannot improve: numerical optimum
                converged = True
                break
            pure_step = True  # momentum overshoot: retry without it
            continue
        improvement = obj - obj_new
        w_prev, b_prev = w, b
        w, b = w_new, b_new
        obj = obj_new
        if improvement < config.tol:
            if pure_step:
                converged = True
                break
            pure_step = True  # confirm stagnation with a momentum-free step
            continue
        theta = theta_next
        pure_step = False

    if not converged:
        warnings.warn(
            f"logreg_l1 did not converge in {config.max_iter} iterations "
            f"(last objective {obj:.6g})",
            stacklevel=2,
        )
    return LinearModel(
        weights=w,
        intercept=float(b),
        l1_lambda=float(lam),
        feature_names=tuple(feature_names),
        n_iter=n_iter,
        objective=float(obj),
        converged=converged,
    )


def select_l1_lambda(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    folds: list[np.ndarray],
) -> float:
    """Pick the grid lambda minimizing mean out-of-fold logloss (ties -> larger lambda)."""
    n = len(y)
    losses: dict[float, float] = {}
    for lam in sorted(config.lambda_grid, reverse=True):
        fold_losses = []
        for fold in folds:
            mask = np.ones(n, dtype=bool)
            mask[fold] = False
            model = fit_logreg_l1(X[mask], y[mask], config, feature_names=(), l1_lambda=lam)
            probs = sigmoid(X[fold] @ model.weights + model.intercept)
            fold_losses.append(log_loss(y[fold], probs))
        losses[lam] = float(np.mean(fold_losses))
    best = min(losses, key=lambda lam: (losses[lam], -lam))
    return best


def predict_linear(model: LinearModel, X: np.ndarray) -> np.ndarray:
    """sigmoid(w . x + intercept) for a row or a matrix of rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != len(model.weights):
        raise ValueError(
            f"row has {X.shape[-1]} features, model expects {len(model.weights)}"
        )
    return sigmoid(X @ model.weights + model.intercept)


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    feature_names: tuple[str, ...],
) -> TreeEnsembleModel:
    """Bootstrap-aggregated Gini trees with per-node feature subsampling (ceil(sqrt(d)))."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    subset = config.feature_subset_size
    if subset is None:
        subset = math.ceil(math.sqrt(d))
    trees = []
    for t in range(config.n_trees):
        rng = np.random.default_rng([config.seed, t])
        idx = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        trees.append(
            fit_classification_tree(
                X[idx],
                y[idx],
                feature_names,
                max_depth=config.max_depth,
                min_leaf=config.min_leaf,
                feature_subset_size=subset,
                rng=rng,
            )
        )
    return TreeEnsembleModel(
        kind=KIND_RF,
        trees=tuple(trees),
        base_score=0.0,
        learning_rate=1.0,
        feature_names=tuple(feature_names),
        config=config,
    )


def fit_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    feature_names: tuple[str, ...],
) -> TreeEnsembleModel:
    """Boosted second-order regression trees on the logistic loss.

    base_score is the label-mean log-odds clipped to +-10; each round fits a
    regression tree to g_i = w_i (p_i - y_i), h_i = w_i p_i (1 - p_i) and adds
    it with learning-rate scaling. The per-round weighted training logloss is
    recorded in metadata["loss_trace"].
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    weights = _sample_weights(y, config.class_weight)
    mean = float(y.mean())
    if mean <= 0.0:
        base = -BASE_SCORE_CLAMP
    elif mean >= 1.0:
        base = BASE_SCORE_CLAMP
    else:
        base = float(np.clip(logit(mean), -BASE_SCORE_CLAMP, BASE_SCORE_CLAMP))

    raw = np.full(len(y), base)
    trees = []
    trace = []
    for _ in range(config.n_trees):
        p = sigmoid(raw)
        g = weights * (p - y)
        h = weights * p * (1.0 - p)
        tree = fit_regression_tree(
            X,
            g,
            h,
            feature_names,
            max_depth=config.max_depth,
            min_leaf=config.min_leaf,
            reg_lambda=config.reg_lambda,
            gamma=config.gamma,
        )
        trees.append(tree)
        raw = raw + config.learning_rate * predict_tree_batch(tree, X)
        trace.append(log_loss(y, sigmoid(raw), weights))
    return TreeEnsembleModel(
        kind=KIND_GBDT,
        trees=tuple(trees),
        base_score=base,
        learning_rate=config.learning_rate,
        feature_names=tuple(feature_names),
        config=config,
        metadata={"loss_trace": trace},
    )


def ensemble_raw_score(model: TreeEnsembleModel, X: np.ndarray) -> np.ndarray:
    """GBDT additive raw score before the sigmoid."""
    if model.kind != KIND_GBDT:
        raise ValueError("raw scores are defined for gbdt models only")
    X = np.asarray(X, dtype=np.float64)
    raw = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        raw += model.learning_rate * predict_tree_batch(tree, X)
    return raw


def predict_ensemble(model: TreeEnsembleModel, X: np.ndarray) -> np.ndarray:
    """RF: mean leaf probability clamped inside (0,1); GBDT: sigmoid of the raw score."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != len(model.feature_names):
        raise ValueError(
            f"rows have {X.shape[1]} features, model expects {len(model.feature_names)}"
        )
    if model.kind == KIND_GBDT:
        probs = sigmoid(ensemble_raw_score(model, X))
    elif model.kind == KIND_RF:
        acc = np.zeros(X.shape[0])
        for tree in model.trees:
            acc += predict_tree_batch(tree, X)
        probs = np.clip(acc / len(model.trees), PROB_CLAMP, 1.0 - PROB_CLAMP)
    else:
        raise ValueError(f"unknown ensemble kind: {model.kind!r}")
    return probs[0] if single else probs


def fit_baseline(labels: np.ndarray, kind: str, seed: int = 0) -> BaselineModel:
    """bl1 stores the training positive rate; bl2/bl3 are constant policies."""
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind: {kind!r}")
    rate = float(np.asarray(labels).mean()) if kind == KIND_BL1 else 0.0
    return BaselineModel(kind=kind, positive_rate=rate, seed=seed)


def predict_baseline(model: BaselineModel, row_count: int) -> np.ndarray:
    """0/1 predictions: bl1 draws independently at the stored rate, bl2 all 1, bl3 all 0."""
    if model.kind == KIND_BL1:
        rng = np.random.default_rng([model.seed])
        return (rng.random(row_count) < model.positive_rate).astype(np.float64)
    if model.kind == KIND_BL2:
        return np.ones(row_count)
    if model.kind == KIND_BL3:
        return np.zeros(row_count)
    raise ValueError(f"unknown baseline kind: {model.kind!r}")


def classify(probabilities: np.ndarray, threshold: float) -> np.ndarray:
    """Label 1 iff probability >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return (np.asarray(probabilities) >= threshold).astype(np.int64)


# --- serialization -----------------------------------------------------------

def _config_to_dict(config: TrainConfig | None) -> dict | None:
    if config is None:
        return None
    out = asdict(config)
    out["lambda_grid"] = list(config.lambda_grid)
    return out


def _config_from_dict(payload: dict | None) -> TrainConfig | None:
    if payload is None:
        return None
    payload = dict(payload)
    payload["lambda_grid"] = tuple(payload.get("lambda_grid", ()))
    return TrainConfig(**payload)


def model_to_dict(model) -> dict:
    if isinstance(model, TreeEnsembleModel):
        return {
            "kind": model.kind,
            "feature_names": list(model.feature_names),
            "base_score": model.base_score,
            "learning_rate": model.learning_rate,
            "trees": [tree_to_dict(t) for t in model.trees],
            "config": _config_to_dict(model.config),
            "metadata": model.metadata,
        }
    if isinstance(model, LinearModel):
        return {
            "kind": KIND_LOGREG,
            "feature_names": list(model.feature_names),
            "weights": [float(w) for w in model.weights],
            "intercept": model.intercept,
            "l1_lambda": model.l1_lambda,
            "metadata": {
                "n_iter": model.n_iter,
                "objective": model.objective,
                "converged": model.converged,
            },
        }
    if isinstance(model, BaselineModel):
        return {
            "kind": model.kind,
            "positive_rate": model.positive_rate,
            "seed": model.seed,
        }
    raise TypeError(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(payload: dict):
    kind = payload["kind"]
    if kind in (KIND_RF, KIND_GBDT):
        names = tuple(payload["feature_names"])
        return TreeEnsembleModel(
            kind=kind,
            trees=tuple(tree_from_dict(t, names) for t in payload["trees"]),
            base_score=float(payload["base_score"]),
            learning_rate=float(payload["learning_rate"]),
            feature_names=names,
            config=_config_from_dict(payload.get("config")),
            metadata=payload.get("metadata", {}),
        )
    if kind == KIND_LOGREG:
        meta = payload.get("metadata", {})
        return LinearModel(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            intercept=float(payload["intercept"]),
            l1_lambda=float(payload["l1_lambda"]),
            feature_names=tuple(payload["feature_names"]),
            n_iter=meta.get("n_iter", 0),
            objective=meta.get("objective", float("nan")),
            converged=meta.get("converged", True),
        )
    if kind in BASELINE_KINDS:
        return BaselineModel(
            kind=kind,
            positive_rate=float(payload.get("positive_rate", 0.0)),
            seed=int(payload.get("seed", 0)),
        )
    raise ValueError(f"unknown model kind: {kind!r}")


def model_to_json(model) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=True)


def model_from_json(text: str):
    return model_from_dict(json.loads(text))
