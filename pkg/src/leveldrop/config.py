"""Run configuration: TOML loading, defaults, validation, and config hashing."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .features import FEATURE_MODES
from .ingest import ACTIVITY_FIELDS, DEFAULT_MAX_LEVEL
from .models import TRAINABLE_KINDS, TrainConfig, default_config
from .pipeline import THRESHOLD_CV_F1, THRESHOLD_FIXED, EvalOptions
from .preprocess import NORMALIZATION_MODES, PreprocessConfig
from .simulate import FeatureDistribution, SimConfig, default_paper_shaped_config

REPORT_FORMATS = ("json", "text", "csv")


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG_TOML = """\
# leveldrop run configuration (all keys optional; these are the defaults)

[run]
seed = 42
levels = [1, 2, 3, 4, 5]
jobs = 1
formats = ["json", "text", "csv"]
figures = true

# To analyze existing logs instead of simulating, point at the files:
# [input]
# records = "records.csv"
# profiles = "profiles.csv"
# format = "csv"            # or "jsonl" for the records file

[simulate]
n_learners = 10000
n_levels = 6
activation_rate = 0.24
engagement_coef = -0.45
never_attempt_fraction = 0.3
base_log_odds = [-1.14, -1.79, -1.87, -1.86, -1.84, -2.11]

[simulate.planted]
total_dur = 0.9
idle_time = 0.7
n_step = 0.6
n_restart = 0.6
help_time = -0.7
activated = -0.8

[simulate.missingness]
total_dur = 0.03
n_play = 0.03
n_line = 0.03
n_step = 0.03
n_restart = 0.03

[features]
mode = "12"                  # or "23" to append per-level values
exclude_never_attempted = false
max_level = 100

[preprocess]
drop_threshold = 0.5
knn_k = 5
normalization = "train_only" # or "paper_faithful_full_dataset"

[evaluation]
test_frac = 0.2
threshold = 0.5
threshold_policy = "fixed"   # or "cv_f1" to tune on out-of-fold F1
cv_folds = 10

[models]
kinds = ["gbdt", "logreg_l1", "random_forest"]

[models.gbdt]
n_trees = 100
max_depth = 2
min_leaf = 1
learning_rate = 0.3
reg_lambda = 1.0
gamma = 0.0
# class_weight defaults to the negative/positive ratio; set 1.0 for unweighted

[models.logreg_l1]
lambda_grid = [0.0001, 0.001, 0.01, 0.1]
cv_folds = 10
tol = 1e-10
max_iter = 5000

[models.random_forest]
n_trees = 200
max_depth = 25
min_leaf = 1
bootstrap = true
# feature_subset_size defaults to ceil(sqrt(n_features))
"""


@dataclass(frozen=True)
class InputPaths:
    records: str
    profiles: str
    format: str = "csv"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    levels: tuple[int, ...] = (1, 2, 3, 4, 5)
    jobs: int = 1
    formats: tuple[str, ...] = REPORT_FORMATS
    figures: bool = True
    input: InputPaths | None = None
    sim: SimConfig | None = None
    max_level: int = DEFAULT_MAX_LEVEL
    options: EvalOptions = field(default_factory=EvalOptions)
    kinds: tuple[str, ...] = TRAINABLE_KINDS
    model_configs: dict[str, TrainConfig] = field(default_factory=dict)

    def validate(self) -> None:
        if self.input is None and self.sim is None:
            raise ConfigError("config needs either an [input] or a [simulate] section")
        if any(level < 1 for level in self.levels):
            raise ConfigError("levels must be >= 1")
        if not self.levels:
            raise ConfigError("levels must not be empty")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        for fmt in self.formats:
            if fmt not in REPORT_FORMATS:
                raise ConfigError(f"unknown report format: {fmt!r}")
        for kind in self.kinds:
            if kind not in TRAINABLE_KINDS:
                raise ConfigError(f"unknown model kind: {kind!r}")
        if self.sim is not None:
            try:
                self.sim.validate()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")


def _sim_from_toml(section: dict) -> SimConfig:
    allowed = {
        "n_learners", "n_levels", "seed", "activation_rate", "engagement_coef",
        "never_attempt_fraction", "base_log_odds", "planted", "missingness",
        "distributions",
    }
    _check_keys(section, allowed, "simulate")
    base = default_paper_shaped_config()
    planted = dict(section.get("planted", base.planted))
    missingness = dict(base.missingness)
    if "missingness" in section:
        missingness = {name: 0.0 for name in ACTIVITY_FIELDS}
        missingness.update(section["missingness"])
    distributions = dict(base.distributions)
    for name, spec in section.get("distributions", {}).items():
        if name not in distributions:
            raise ConfigError(f"unknown feature in [simulate.distributions]: {name!r}")
        _check_keys(spec, {"kind", "loc", "scale", "engagement_coef"}, f"simulate.distributions.{name}")
        distributions[name] = replace(distributions[name], **spec)
    cfg = SimConfig(
        n_learners=int(section.get("n_learners", base.n_learners)),
        n_levels=int(section.get("n_levels", base.n_levels)),
        seed=int(section.get("seed", base.seed)),
        activation_rate=float(section.get("activation_rate", base.activation_rate)),
        base_log_odds=tuple(section.get("base_log_odds", base.base_log_odds)),
        planted=planted,
        engagement_coef=float(section.get("engagement_coef", base.engagement_coef)),
        distributions=distributions,
        missingness=missingness,
        never_attempt_fraction=float(
            section.get("never_attempt_fraction", base.never_attempt_fraction)
        ),
    )
    return cfg


def _model_config_from_toml(kind: str, section: dict) -> TrainConfig:
    allowed = {
        "n_trees", "max_depth", "min_leaf", "learning_rate", "reg_lambda", "gamma",
        "feature_subset_size", "bootstrap", "class_weight", "l1_lambda",
        "lambda_grid", "cv_folds", "tol", "max_iter",
    }
    _check_keys(section, allowed, f"models.{kind}")
    base = default_config(kind)
    kwargs = dict(section)
    if "lambda_grid" in kwargs:
        kwargs["lambda_grid"] = tuple(kwargs["lambda_grid"])
    try:
        return replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [models.{kind}] settings: {exc}") from None


def load_run_config_dict(raw: dict) -> RunConfig:
    _check_keys(
        raw,
        {"run", "input", "simulate", "features", "preprocess", "evaluation", "models"},
        "top level",
    )
    run = raw.get("run", {})
    _check_keys(run, {"seed", "levels", "jobs", "formats", "figures", "out"}, "run")
    seed = int(run.get("seed", 42))

    input_paths = None
    if "input" in raw:
        section = raw["input"]
        _check_keys(section, {"records", "profiles", "format"}, "input")
        if "records" not in section or "profiles" not in section:
            raise ConfigError("[input] requires records and profiles paths")
        fmt = section.get("format", "csv")
        if fmt not in ("csv", "jsonl"):
            raise ConfigError(f"unknown input format: {fmt!r}")
        input_paths = InputPaths(records=section["records"], profiles=section["profiles"], format=fmt)

    sim = None
    if "simulate" in raw or input_paths is None:
        section = dict(raw.get("simulate", {}))
        section.setdefault("seed", seed)
        sim = _sim_from_toml(section)

    feats = raw.get("features", {})
    _check_keys(feats, {"mode", "exclude_never_attempted", "max_level"}, "features")
    mode = str(feats.get("mode", "12"))
    if mode not in FEATURE_MODES:
        raise ConfigError(f"unknown feature mode: {mode!r}")

    pre = raw.get("preprocess", {})
    _check_keys(pre, {"drop_threshold", "knn_k", "normalization"}, "preprocess")
    normalization = pre.get("normalization", "train_only")
    if normalization not in NORMALIZATION_MODES:
        raise ConfigError(f"unknown normalization mode: {normalization!r}")
    try:
        preprocess = PreprocessConfig(
            drop_threshold=float(pre.get("drop_threshold", 0.5)),
            knn_k=int(pre.get("knn_k", 5)),
            normalization_mode=normalization,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    ev = raw.get("evaluation", {})
    _check_keys(ev, {"test_frac", "threshold", "threshold_policy", "cv_folds"}, "evaluation")
    policy = ev.get("threshold_policy", THRESHOLD_FIXED)
    if policy not in (THRESHOLD_FIXED, THRESHOLD_CV_F1):
        raise ConfigError(f"unknown threshold_policy: {policy!r}")
    options = EvalOptions(
        feature_mode=mode,
        exclude_never_attempted=bool(feats.get("exclude_never_attempted", False)),
        preprocess=preprocess,
        test_frac=float(ev.get("test_frac", 0.2)),
        threshold=float(ev.get("threshold", 0.5)),
        threshold_policy=policy,
        cv_folds=int(ev.get("cv_folds", 10)),
    )

    models_section = raw.get("models", {})
    kinds = tuple(models_section.get("kinds", TRAINABLE_KINDS))
    model_configs = {}
    for kind in TRAINABLE_KINDS:
        if kind in models_section:
            model_configs[kind] = _model_config_from_toml(kind, models_section[kind])
    extra = set(models_section) - set(TRAINABLE_KINDS) - {"kinds"}
    if extra:
        raise ConfigError(f"unknown key(s) in [models]: {', '.join(sorted(extra))}")

    cfg = RunConfig(
        seed=seed,
        levels=tuple(int(x) for x in run.get("levels", (1, 2, 3, 4, 5))),
        jobs=int(run.get("jobs", 1)),
        formats=tuple(run.get("formats", REPORT_FORMATS)),
        figures=bool(run.get("figures", True)),
        input=input_paths,
        sim=sim,
        max_level=int(feats.get("max_level", DEFAULT_MAX_LEVEL)),
        options=options,
        kinds=kinds,
        model_configs=model_configs,
    )
    cfg.validate()
    return cfg


def load_run_config(path: str | Path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return load_run_config_dict(raw)


def default_run_config() -> RunConfig:
    return load_run_config_dict(tomllib.loads(DEFAULT_CONFIG_TOML))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        return {name: _jsonable(getattr(obj, name)) for name in sorted(obj.__dataclass_fields__)}
    return obj


def config_hash(cfg: RunConfig) -> str:
    """Stable sha256 of the fully-resolved configuration.

    Excludes `jobs`: parallelism is execution policy and never changes outputs,
    so manifests stay identical across job counts.
    """
    canonical = _jsonable(cfg)
    canonical.pop("jobs", None)
    return hashlib.sha256(json.dumps(canonical, sort_keys=True).encode("utf-8")).hexdigest()
