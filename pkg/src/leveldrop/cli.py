"""Command-line interface: simulate, run, explain, print-default-config."""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, figures, reports
from .config import (
    DEFAULT_CONFIG_TOML,
    ConfigError,
    RunConfig,
    config_hash,
    default_run_config,
    load_run_config,
)
from .features import EmptyCohortError, matrix_from_csv, matrix_to_csv
from .ingest import GameLog, LogParseError, parse_log, serialize_log, validate
from .interpret import build_odds_table, gain_importance, odds_ratios
from .models import KIND_GBDT, model_from_json, model_to_json
from .pipeline import LevelArtifacts, run_level
from .simulate import generate

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2

USER_ERRORS = (ConfigError, LogParseError, EmptyCohortError, FileNotFoundError, NotADirectoryError)


def _atomic_write(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class OutputTracker:
    """Writes files atomically and remembers their checksums for the manifest."""

    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.checksums: dict[str, str] = {}

    def write(self, relpath: str, data: str | bytes) -> Path:
        path = self.outdir / relpath
        _atomic_write(path, data)
        self.checksums[relpath] = _sha256(path)
        return path

    def track(self, relpath: str) -> None:
        self.checksums[relpath] = _sha256(self.outdir / relpath)


def _write_manifest(tracker: OutputTracker, cfg_hash: str, seed: int, status: str, error: str | None = None) -> None:
    manifest = {
        "tool": "leveldrop",
        "version": __version__,
        "config_sha256": cfg_hash,
        "seed": seed,
        "status": status,
        "outputs": dict(sorted(tracker.checksums.items())),
    }
    if error is not None:
        manifest["error"] = error
    _atomic_write(
        tracker.outdir / "manifest.json",
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _simulate_to_dir(cfg: RunConfig, tracker: OutputTracker, subdir: str = "data") -> GameLog:
    log, truth = generate(cfg.sim)
    records_csv, profiles_csv = serialize_log(log)
    tracker.write(f"{subdir}/records.csv", records_csv)
    tracker.write(f"{subdir}/profiles.csv", profiles_csv)
    tracker.write(f"{subdir}/truth.json", truth.to_json() + "\n")
    return log


def _load_input(cfg: RunConfig) -> GameLog:
    paths = cfg.input
    with open(paths.records, encoding="utf-8") as rec, open(paths.profiles, encoding="utf-8") as prof:
        return parse_log(rec, prof, fmt=paths.format)


def _run_one_level(args: tuple) -> LevelArtifacts:
    log, level, kinds, configs, seed, options = args
    return run_level(log, level, kinds, configs, seed, options)


def cmd_simulate(cfg: RunConfig, outdir: Path) -> int:
    tracker = OutputTracker(outdir)
    cfg_hash = config_hash(cfg)
    try:
        _simulate_to_dir(cfg, tracker, subdir=".")
    except Exception as exc:
        _write_manifest(tracker, cfg_hash, cfg.seed, "error", str(exc))
        raise
    _write_manifest(tracker, cfg_hash, cfg.seed, "ok")
    return EXIT_OK


def cmd_run(cfg: RunConfig, outdir: Path) -> int:
    tracker = OutputTracker(outdir)
    cfg_hash = config_hash(cfg)
    try:
        if cfg.input is not None:
            log = _load_input(cfg)
        else:
            log = _simulate_to_dir(cfg, tracker)

        report = validate(log, max_level=cfg.max_level)
        tracker.write(
            "validation.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
        )
        if not report.ok:
            raise ConfigError(
                f"input log fails validation with {len(report.errors)} error(s); "
                "see validation.json"
            )

        tasks = [
            (log, level, cfg.kinds, cfg.model_configs, cfg.seed, cfg.options)
            for level in cfg.levels
        ]
        if cfg.jobs > 1 and len(tasks) > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                artifacts = list(pool.map(_run_one_level, tasks))
        else:
            artifacts = [_run_one_level(task) for task in tasks]

        reports_by_level = {a.level: a.reports for a in artifacts}
        if "text" in cfg.formats:
            tracker.write("reports/summary.txt", reports.render_text_summary(reports_by_level))
        if "json" in cfg.formats:
            tracker.write("reports/reports.json", reports.reports_to_json(reports_by_level) + "\n")
        if "csv" in cfg.formats:
            tracker.write("reports/reports.csv", reports.reports_to_csv(reports_by_level))

        for art in artifacts:
            lvl = art.level
            tracker.write(f"reports/roc_level{lvl}.csv", reports.roc_to_csv(art.roc))
            for kind, model in art.models.items():
                tracker.write(f"models/level{lvl}_{kind}.json", model_to_json(model) + "\n")
            tracker.write(f"matrices/train_level{lvl}.csv", matrix_to_csv(art.train_matrix))
            tracker.write(f"matrices/normalization_level{lvl}.json", art.stats_json + "\n")
            if art.importance is not None:
                tracker.write(
                    f"interpret/importance_level{lvl}.csv",
                    reports.importance_to_csv(art.importance),
                )
                tracker.write(
                    f"interpret/correlations_level{lvl}.csv",
                    reports.correlations_to_csv(
                        art.importance.feature_names, art.importance.correlations
                    ),
                )

        odds_table = build_odds_table([a.odds for a in artifacts if a.odds is not None])
        tracker.write("interpret/odds_ratios.csv", reports.odds_table_to_csv(odds_table))
        tracker.write("interpret/odds_ratios.json", reports.odds_table_to_json(odds_table) + "\n")
        if odds_table.consistency:
            tracker.write(
                "interpret/consistency.csv", reports.consistency_to_csv(odds_table.consistency)
            )

        if cfg.figures:
            for art in artifacts:
                if art.roc:
                    figures.save_roc_figure(
                        art.roc, art.level, tracker.outdir / f"figures/roc_level{art.level}.png"
                    )
                    tracker.track(f"figures/roc_level{art.level}.png")
                if art.importance is not None and not art.importance.no_splits:
                    figures.save_importance_figure(
                        art.importance,
                        art.level,
                        tracker.outdir / f"figures/importance_level{art.level}.png",
                    )
                    tracker.track(f"figures/importance_level{art.level}.png")
            label_means = {a.level: a.label_mean for a in artifacts}
            figures.save_rate_figure(label_means, tracker.outdir / "figures/abandonment_rate.png")
            tracker.track("figures/abandonment_rate.png")
    except Exception as exc:
        _write_manifest(tracker, cfg_hash, cfg.seed, "error", str(exc))
        raise
    _write_manifest(tracker, cfg_hash, cfg.seed, "ok")
    return EXIT_OK


def cmd_explain(model_path: Path, matrix_path: Path, outdir: Path) -> int:
    model = model_from_json(Path(model_path).read_text(encoding="utf-8"))
    if getattr(model, "kind", None) != KIND_GBDT:
        raise ConfigError("importance requires gbdt")
    matrix = matrix_from_csv(Path(matrix_path).read_text(encoding="utf-8"))
    if np.isnan(matrix.values).any():
        raise ConfigError("matrix has missing cells; explain needs a preprocessed matrix")
    if tuple(matrix.feature_names) != tuple(model.feature_names):
        raise ConfigError(
            "model/matrix feature mismatch: "
            f"model has {list(model.feature_names)}, matrix has {list(matrix.feature_names)}"
        )
    tracker = OutputTracker(Path(outdir))
    importance = gain_importance(model, level=matrix.level)
    tracker.write("importance.csv", reports.importance_to_csv(importance))
    odds = odds_ratios(
        matrix.values,
        matrix.labels.astype(np.float64),
        matrix.feature_names,
        matrix.level,
    )
    buf = ["feature,odds_ratio,direction"]
    for name in matrix.feature_names:
        buf.append(f"{name},{odds.ors[name]!r},{odds.directions[name]}")
    tracker.write("odds_ratios.csv", "\n".join(buf) + "\n")
    return EXIT_OK


def _parse_levels(text: str) -> tuple[int, ...]:
    levels: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            levels.extend(range(int(lo), int(hi) + 1))
        elif part:
            levels.append(int(part))
    if not levels:
        raise ConfigError(f"cannot parse levels from {text!r}")
    return tuple(levels)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
        if cfg.sim is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed))
    if getattr(args, "levels", None) is not None:
        cfg = replace(cfg, levels=_parse_levels(args.levels))
    if getattr(args, "jobs", None) is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if getattr(args, "format", None) is not None:
        cfg = replace(cfg, formats=tuple(f.strip() for f in args.format.split(",") if f.strip()))
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leveldrop",
        description="Per-level learner abandonment prediction pipeline.",
    )
    parser.add_argument("--version", action="version", version=f"leveldrop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic game log")
    p_sim.add_argument("--config", help="TOML config; defaults apply if omitted")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, help="override the configured seed")

    p_run = sub.add_parser("run", help="run the full per-level pipeline")
    p_run.add_argument("--config", help="TOML config; defaults apply if omitted")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, help="override the configured seed")
    p_run.add_argument("--levels", help="levels to analyze, e.g. 1-5 or 1,3,5")
    p_run.add_argument("--jobs", type=int, help="parallel level evaluations")
    p_run.add_argument("--format", help="comma-separated report formats: json,text,csv")

    p_exp = sub.add_parser("explain", help="importance + odds ratios for a saved model")
    p_exp.add_argument("--model", required=True, help="serialized gbdt model JSON")
    p_exp.add_argument("--matrix", required=True, help="preprocessed LabeledMatrix CSV")
    p_exp.add_argument("--out", required=True, help="output directory")

    sub.add_parser("print-default-config", help="print the default TOML configuration")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "print-default-config":
            sys.stdout.write(DEFAULT_CONFIG_TOML)
            return EXIT_OK
        if args.command == "simulate":
            cfg = load_run_config(args.config) if args.config else default_run_config()
            cfg = _apply_overrides(cfg, args)
            if cfg.sim is None:
                raise ConfigError("simulate requires a [simulate] section")
            return cmd_simulate(cfg, Path(args.out))
        if args.command == "run":
            cfg = load_run_config(args.config) if args.config else default_run_config()
            cfg = _apply_overrides(cfg, args)
            return cmd_run(cfg, Path(args.out))
        if args.command == "explain":
            return cmd_explain(Path(args.model), Path(args.matrix), Path(args.out))
        raise AssertionError(f"unhandled command {args.command!r}")
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # internal failure contract: exit 1
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
