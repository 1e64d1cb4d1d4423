"""Per-level cohorts, abandonment labels, and cumulative feature matrices."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .ingest import ACTIVITY_FIELDS, GameLog

CUMULATIVE_FEATURES = tuple(f"cml_{name}" for name in ACTIVITY_FIELDS)
ACTIVATED = "activated"

MODE_12 = "12"
MODE_23 = "23"
FEATURE_MODES = (MODE_12, MODE_23)


class EmptyCohortError(ValueError):
    pass


def feature_names(mode: str = MODE_12) -> tuple[str, ...]:
    """Feature column order for the given mode: cumulative, (per-level,) activated."""
    if mode == MODE_12:
        return CUMULATIVE_FEATURES + (ACTIVATED,)
    if mode == MODE_23:
        return CUMULATIVE_FEATURES + ACTIVITY_FIELDS + (ACTIVATED,)
    raise ValueError(f"unknown feature mode: {mode!r}")


@dataclass(frozen=True, eq=False)
class LabeledMatrix:
    """Level-n cohort rows (sorted by learner_id) with features and abandonment labels.

    `values` is float64 with NaN marking missing cells; labels use 1 = abandoned.
    """

    level: int
    learner_ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.learner_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]


def build_cohort(log: GameLog, n: int) -> set[str]:
    """Learners with a completed record at level n."""
    if n < 1:
        raise ValueError(f"level must be >= 1, got {n}")
    return {
        learner_id
        for learner_id, levels in log.by_learner.items()
        if n in levels and levels[n].completed
    }


def _require_completed(log: GameLog, learner_id: str, n: int) -> None:
    levels = log.by_learner.get(learner_id, {})
    if n not in levels or not levels[n].completed:
        raise ValueError(f"learner {learner_id} has not completed level {n}")


def label_abandonment(log: GameLog, learner_id: str, n: int) -> int:
    """1 if the learner has no completed record at level n+1 (attempted or not), else 0."""
    _require_completed(log, learner_id, n)
    nxt = log.by_learner[learner_id].get(n + 1)
    return 0 if nxt is not None and nxt.completed else 1


def cumulative_features(
    log: GameLog, learner_id: str, n: int, mode: str = MODE_12
) -> dict[str, float | None]:
    """Feature vector for a level-n cohort member.

    Each cumulative value is the sum of the per-level value over the learner's
    completed levels 1..n and is missing when any constituent is missing.
    In 23-feature mode the level-n per-level values are appended.
    """
    _require_completed(log, learner_id, n)
    levels = log.by_learner[learner_id]
    completed = [levels[lvl] for lvl in sorted(levels) if lvl <= n and levels[lvl].completed]

    out: dict[str, float | None] = {}
    for name in ACTIVITY_FIELDS:
        vals = [rec.value(name) for rec in completed]
        out[f"cml_{name}"] = None if any(v is None for v in vals) else math.fsum(vals)
    if mode == MODE_23:
        at_n = levels[n]
        for name in ACTIVITY_FIELDS:
            v = at_n.value(name)
            out[name] = None if v is None else float(v)
    elif mode != MODE_12:
        raise ValueError(f"unknown feature mode: {mode!r}")
    profile = log.profile_map.get(learner_id)
    if profile is None:
        raise ValueError(f"learner {learner_id} has no profile")
    out[ACTIVATED] = float(profile.activated)
    return out


def assemble_matrix(
    log: GameLog,
    n: int,
    mode: str = MODE_12,
    *,
    exclude_never_attempted: bool = False,
) -> LabeledMatrix:
    """Build the level-n LabeledMatrix: one row per cohort member, sorted by learner_id.

    With exclude_never_attempted, cohort members with no record at level n+1 at
    all are dropped instead of being labeled abandoned.
    """
    cohort = sorted(build_cohort(log, n))
    if exclude_never_attempted:
        cohort = [lid for lid in cohort if (n + 1) in log.by_learner[lid]]
    if not cohort:
        raise EmptyCohortError(f"no cohort at level {n}")

    names = feature_names(mode)
    values = np.full((len(cohort), len(names)), np.nan, dtype=np.float64)
    labels = np.zeros(len(cohort), dtype=np.int64)
    for i, learner_id in enumerate(cohort):
        vec = cumulative_features(log, learner_id, n, mode)
        for j, name in enumerate(names):
            v = vec[name]
            if v is not None:
                values[i, j] = v
        labels[i] = label_abandonment(log, learner_id, n)
    return LabeledMatrix(
        level=n,
        learner_ids=tuple(cohort),
        feature_names=names,
        values=values,
        labels=labels,
    )


def matrix_to_csv(matrix: LabeledMatrix) -> str:
    """CSV export: header learner_id,label,<features...>; missing = empty cell."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("learner_id", "label") + matrix.feature_names)
    for i, learner_id in enumerate(matrix.learner_ids):
        row: list[str] = [learner_id, str(int(matrix.labels[i]))]
        for v in matrix.values[i]:
            row.append("" if np.isnan(v) else repr(float(v)))
        writer.writerow(row)
    return buf.getvalue()


def matrix_from_csv(text: str, level: int = 0) -> LabeledMatrix:
    """Parse a LabeledMatrix written by matrix_to_csv."""
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows:
        raise ValueError("empty matrix file")
    header = rows[0]
    if header[:2] != ["learner_id", "label"]:
        raise ValueError("matrix header must start with learner_id,label")
    names = tuple(header[2:])
    ids: list[str] = []
    labels: list[int] = []
    values = np.full((len(rows) - 1, len(names)), np.nan, dtype=np.float64)
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ValueError(f"matrix row {i + 2} has {len(row)} fields, expected {len(header)}")
        ids.append(row[0])
        labels.append(int(row[1]))
        for j, cell in enumerate(row[2:]):
            if cell != "":
                values[i, j] = float(cell)
    return LabeledMatrix(
        level=level,
        learner_ids=tuple(ids),
        feature_names=names,
        values=values,
        labels=np.asarray(labels, dtype=np.int64),
    )
