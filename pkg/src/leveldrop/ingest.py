"""Activity log ingestion: parse, merge, validate, and index per-level play records."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

DURATION_FIELDS = (
    "total_dur",
    "idle_time",
    "code_time",
    "test_time",
    "help_time",
    "mission_time",
    "world_time",
)
COUNT_FIELDS = ("n_restart", "n_step", "n_line", "n_play")
ACTIVITY_FIELDS = DURATION_FIELDS + COUNT_FIELDS

RECORD_HEADER = ("learner_id", "level", "completed") + ACTIVITY_FIELDS
PROFILE_HEADER = ("learner_id", "activated")

DEFAULT_MAX_LEVEL = 100


class LogParseError(ValueError):
    """Structurally invalid record or profile input, with the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class LevelPlayRecord:
    """One merged play of one level by one learner; None marks a missing value."""

    learner_id: str
    level: int
    completed: bool
    total_dur: float | None = None
    idle_time: float | None = None
    code_time: float | None = None
    test_time: float | None = None
    help_time: float | None = None
    mission_time: float | None = None
    world_time: float | None = None
    n_restart: int | None = None
    n_step: int | None = None
    n_line: int | None = None
    n_play: int | None = None

    def value(self, field: str) -> float | None:
        return getattr(self, field)


@dataclass(frozen=True)
class LearnerProfile:
    learner_id: str
    activated: int


@dataclass(frozen=True)
class GameLog:
    """Immutable canonical log: records sorted by (learner_id, level), profiles by id."""

    records: tuple[LevelPlayRecord, ...]
    profiles: tuple[LearnerProfile, ...]

    @cached_property
    def by_learner(self) -> dict[str, dict[int, LevelPlayRecord]]:
        index: dict[str, dict[int, LevelPlayRecord]] = {}
        for rec in self.records:
            index.setdefault(rec.learner_id, {})[rec.level] = rec
        return index

    @cached_property
    def profile_map(self) -> dict[str, LearnerProfile]:
        return {p.learner_id: p for p in self.profiles}

    def learners(self) -> list[str]:
        return sorted(self.profile_map)


@dataclass(frozen=True)
class ValidationIssue:
    locator: str
    kind: str
    message: str


@dataclass
class ValidationReport:
    errors: list[ValidationIssue]
    warnings: list[ValidationIssue]

    @property
    def ok(self) -> bool:
        return not self.errors

    def counts(self) -> dict[str, int]:
        return dict(Counter(issue.kind for issue in self.errors + self.warnings))

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "errors": [vars(i) for i in self.errors],
            "warnings": [vars(i) for i in self.warnings],
            "counts": self.counts(),
        }


def _as_lines(stream) -> Iterable[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def _parse_float(cell: str, field: str, line_no: int) -> float | None:
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        raise LogParseError(line_no, f"bad value for {field}: {cell!r}") from None


def _parse_int(cell: str, field: str, line_no: int) -> int | None:
    if cell == "":
        return None
    try:
        return int(cell)
    except ValueError:
        raise LogParseError(line_no, f"bad value for {field}: {cell!r}") from None


def _parse_completed(raw, line_no: int) -> bool:
    if raw in ("0", "1"):
        return raw == "1"
    if isinstance(raw, bool):
        return raw
    if raw in (0, 1):
        return bool(raw)
    raise LogParseError(line_no, f"completed must be 0 or 1, got {raw!r}")


def _record_from_fields(fields: dict, line_no: int) -> LevelPlayRecord:
    learner_id = fields.get("learner_id")
    if learner_id in (None, ""):
        raise LogParseError(line_no, "missing learner_id")
    level_raw = fields.get("level")
    if level_raw in (None, ""):
        raise LogParseError(line_no, "missing level")
    try:
        level = int(level_raw)
    except (TypeError, ValueError):
        raise LogParseError(line_no, f"bad value for level: {level_raw!r}") from None
    if "completed" not in fields or fields["completed"] in (None, ""):
        raise LogParseError(line_no, "missing completed")
    completed = _parse_completed(fields["completed"], line_no)

    kwargs: dict = {}
    for name in DURATION_FIELDS:
        cell = fields.get(name, "")
        if isinstance(cell, str):
            kwargs[name] = _parse_float(cell, name, line_no)
        elif isinstance(cell, (int, float)) and not isinstance(cell, bool):
            kwargs[name] = float(cell)
        else:
            raise LogParseError(line_no, f"bad value for {name}: {cell!r}")
    for name in COUNT_FIELDS:
        cell = fields.get(name, "")
        if isinstance(cell, str):
            kwargs[name] = _parse_int(cell, name, line_no)
        elif isinstance(cell, int) and not isinstance(cell, bool):
            kwargs[name] = cell
        else:
            raise LogParseError(line_no, f"bad value for {name}: {cell!r}")
    return LevelPlayRecord(learner_id=str(learner_id), level=level, completed=completed, **kwargs)


def _merge_records(group: list[LevelPlayRecord]) -> LevelPlayRecord:
    """Merge replays of one (learner, level): sum values, OR completion.

    A merged field is missing when any replay left it missing; summing only the
    observed replays would silently understate the total.
    """
    first = group[0]
    if len(group) == 1:
        return first
    merged: dict = {
        "learner_id": first.learner_id,
        "level": first.level,
        "completed": any(r.completed for r in group),
    }
    for name in DURATION_FIELDS:
        vals = [r.value(name) for r in group]
        merged[name] = None if any(v is None for v in vals) else math.fsum(vals)
    for name in COUNT_FIELDS:
        vals = [r.value(name) for r in group]
        merged[name] = None if any(v is None for v in vals) else sum(vals)
    return LevelPlayRecord(**merged)


def _parse_record_csv(lines: Iterable[str]) -> list[LevelPlayRecord]:
    reader = csv.reader(lines)
    records = []
    header: list[str] | None = None
    for line_no, row in enumerate(reader, start=1):
        if not row:
            continue
        if header is None:
            header = [h.strip() for h in row]
            unknown = set(header) - set(RECORD_HEADER)
            if unknown:
                raise LogParseError(line_no, f"unknown field(s): {', '.join(sorted(unknown))}")
            continue
        if len(row) != len(header):
            raise LogParseError(line_no, f"expected {len(header)} fields, got {len(row)}")
        records.append(_record_from_fields(dict(zip(header, row)), line_no))
    return records


def _parse_record_jsonl(lines: Iterable[str]) -> list[LevelPlayRecord]:
    records = []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogParseError(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise LogParseError(line_no, "record line must be a JSON object")
        unknown = set(obj) - set(RECORD_HEADER)
        if unknown:
            raise LogParseError(line_no, f"unknown field(s): {', '.join(sorted(unknown))}")
        fields = {k: ("" if v is None else v) for k, v in obj.items()}
        records.append(_record_from_fields(fields, line_no))
    return records


def _parse_profiles(lines: Iterable[str]) -> list[LearnerProfile]:
    reader = csv.reader(lines)
    profiles: dict[str, LearnerProfile] = {}
    header: list[str] | None = None
    for line_no, row in enumerate(reader, start=1):
        if not row:
            continue
        if header is None:
            header = [h.strip() for h in row]
            unknown = set(header) - set(PROFILE_HEADER)
            if unknown:
                raise LogParseError(line_no, f"unknown field(s): {', '.join(sorted(unknown))}")
            continue
        if len(row) != len(header):
            raise LogParseError(line_no, f"expected {len(header)} fields, got {len(row)}")
        fields = dict(zip(header, row))
        learner_id = fields.get("learner_id", "")
        if learner_id == "":
            raise LogParseError(line_no, "missing learner_id")
        activated = _parse_int(fields.get("activated", ""), "activated", line_no)
        if activated is None:
            raise LogParseError(line_no, "missing activated")
        if learner_id in profiles:
            raise LogParseError(line_no, f"duplicate profile for learner {learner_id}")
        profiles[learner_id] = LearnerProfile(learner_id=learner_id, activated=activated)
    return list(profiles.values())


def parse_log(record_stream, profile_stream, *, fmt: str = "csv") -> GameLog:
    """Parse record and profile streams into a canonical GameLog.

    Replays of the same (learner, level) are merged; records are sorted by
    (learner_id, level) so the result is independent of input line order.
    `fmt` is "csv" or "jsonl" for the record stream (profiles are always CSV).
    """
    if fmt == "csv":
        raw = _parse_record_csv(_as_lines(record_stream))
    elif fmt == "jsonl":
        raw = _parse_record_jsonl(_as_lines(record_stream))
    else:
        raise ValueError(f"unknown log format: {fmt!r}")
    profiles = _parse_profiles(_as_lines(profile_stream))

    groups: dict[tuple[str, int], list[LevelPlayRecord]] = {}
    for rec in raw:
        groups.setdefault((rec.learner_id, rec.level), []).append(rec)
    merged = [_merge_records(group) for key, group in sorted(groups.items())]
    return GameLog(records=tuple(merged), profiles=tuple(sorted(profiles, key=lambda p: p.learner_id)))


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_log(log: GameLog) -> tuple[str, str]:
    """Render a GameLog back to (records CSV, profiles CSV); parse_log round-trips it."""
    rec_buf = io.StringIO()
    writer = csv.writer(rec_buf, lineterminator="\n")
    writer.writerow(RECORD_HEADER)
    for rec in log.records:
        writer.writerow([_format_cell(getattr(rec, name)) for name in RECORD_HEADER])
    prof_buf = io.StringIO()
    writer = csv.writer(prof_buf, lineterminator="\n")
    writer.writerow(PROFILE_HEADER)
    for prof in log.profiles:
        writer.writerow([prof.learner_id, prof.activated])
    return rec_buf.getvalue(), prof_buf.getvalue()


def validate(log: GameLog, *, max_level: int = DEFAULT_MAX_LEVEL) -> ValidationReport:
    """Report every invariant violation in the log without mutating it."""
    errors: list[ValidationIssue] = []
    warnings: list[ValidationIssue] = []
    profile_ids = {p.learner_id for p in log.profiles}

    seen_profiles: set[str] = set()
    for prof in log.profiles:
        loc = f"profile {prof.learner_id}"
        if prof.learner_id in seen_profiles:
            errors.append(ValidationIssue(loc, "duplicate profile", "more than one profile for learner"))
        seen_profiles.add(prof.learner_id)
        if prof.activated not in (0, 1):
            errors.append(ValidationIssue(loc, "invalid activated", f"activated must be 0 or 1, got {prof.activated}"))

    seen_keys: set[tuple[str, int]] = set()
    learners_with_records: set[str] = set()
    for rec in log.records:
        loc = f"record ({rec.learner_id}, level {rec.level})"
        learners_with_records.add(rec.learner_id)
        key = (rec.learner_id, rec.level)
        if key in seen_keys:
            errors.append(ValidationIssue(loc, "duplicate record", "more than one record for (learner, level)"))
        seen_keys.add(key)
        if rec.level < 1 or rec.level > max_level:
            errors.append(ValidationIssue(loc, "level out of range", f"level must be in [1, {max_level}], got {rec.level}"))
        for name in ACTIVITY_FIELDS:
            value = rec.value(name)
            if value is not None and value < 0:
                errors.append(ValidationIssue(loc, "negative value", f"{name} = {value}"))
        if rec.learner_id not in profile_ids:
            errors.append(ValidationIssue(loc, "orphan record", "record learner has no profile"))

    for learner_id in sorted(profile_ids - learners_with_records):
        warnings.append(ValidationIssue(f"profile {learner_id}", "profile without records", "learner never played"))
    return ValidationReport(errors=errors, warnings=warnings)


def highest_level(log: GameLog, learner_id: str) -> int:
    """Highest level the learner ever played, regardless of replays of earlier levels."""
    levels = log.by_learner.get(learner_id)
    if not levels:
        raise ValueError(f"unknown learner: {learner_id}")
    return max(levels)
