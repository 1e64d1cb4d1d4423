"""Rendering of evaluation and interpretation results: text tables, CSV, JSON."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .evaluation import EvaluationReport
from .interpret import ImportanceReport, OddsRatioTable

UNDEFINED = "/"

MODEL_LABELS = {
    "gbdt": "GBDT",
    "logreg_l1": "LR",
    "random_forest": "RF",
    "bl1": "bl1",
    "bl2": "bl2",
    "bl3": "bl3",
}
MODEL_ORDER = ("gbdt", "logreg_l1", "random_forest", "bl1", "bl2", "bl3")

_METRIC_ROWS = (
    ("AUC", "auc"),
    ("Prec", "precision"),
    ("Recall", "recall"),
    ("F1", "f1"),
    ("FPrate", "fp_rate"),
)


def _fmt(value: float | None, digits: int = 2) -> str:
    return UNDEFINED if value is None else f"{value:.{digits}f}"


def _ordered(reports: list[EvaluationReport]) -> list[EvaluationReport]:
    rank = {name: i for i, name in enumerate(MODEL_ORDER)}
    return sorted(reports, key=lambda r: rank.get(r.model, len(rank)))


def render_text_summary(reports_by_level: dict[int, list[EvaluationReport]]) -> str:
    """Aligned per-level blocks: one column per model, one row per metric."""
    lines: list[str] = []
    for level in sorted(reports_by_level):
        reports = _ordered(reports_by_level[level])
        if not reports:
            continue
        n_train = reports[0].n_train
        n_test = reports[0].n_test
        lines.append(f"Level {level}  (train {n_train}, test {n_test})")
        headers = [MODEL_LABELS.get(r.model, r.model) for r in reports]
        width = max(8, *(len(h) + 2 for h in headers))
        lines.append("  " + f"{'':8}" + "".join(f"{h:>{width}}" for h in headers))
        for label, attr in _METRIC_ROWS:
            cells = [_fmt(getattr(r, attr)) for r in reports]
            lines.append("  " + f"{label:8}" + "".join(f"{c:>{width}}" for c in cells))
        lines.append("")
    return "\n".join(lines)


def reports_to_json(reports_by_level: dict[int, list[EvaluationReport]]) -> str:
    payload = [
        r.to_dict() for level in sorted(reports_by_level) for r in _ordered(reports_by_level[level])
    ]
    return json.dumps(payload, indent=2, sort_keys=True)


def reports_to_csv(reports_by_level: dict[int, list[EvaluationReport]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "level", "model", "auc", "precision", "recall", "f1", "fp_rate",
            "tp", "fp", "tn", "fn", "threshold", "n_train", "n_test",
        ]
    )
    for level in sorted(reports_by_level):
        for r in _ordered(reports_by_level[level]):
            writer.writerow(
                [
                    r.level,
                    r.model,
                    "" if r.auc is None else repr(r.auc),
                    "" if r.precision is None else repr(r.precision),
                    "" if r.recall is None else repr(r.recall),
                    "" if r.f1 is None else repr(r.f1),
                    "" if r.fp_rate is None else repr(r.fp_rate),
                    r.tp, r.fp, r.tn, r.fn,
                    repr(r.threshold), r.n_train, r.n_test,
                ]
            )
    return buf.getvalue()


def roc_to_csv(roc: dict[str, tuple[np.ndarray, np.ndarray]]) -> str:
    """Long-form ROC points: model,fpr,tpr."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "fpr", "tpr"])
    for model in sorted(roc, key=lambda m: MODEL_ORDER.index(m) if m in MODEL_ORDER else 99):
        fpr, tpr = roc[model]
        for x, t in zip(fpr, tpr):
            writer.writerow([model, repr(float(x)), repr(float(t))])
    return buf.getvalue()


def importance_to_csv(report: ImportanceReport) -> str:
    """feature,share sorted descending by share."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", "share"])
    for name in report.ranking:
        writer.writerow([name, repr(report.shares[name])])
    return buf.getvalue()


def correlations_to_csv(names: tuple[str, ...], matrix: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature"] + list(names))
    for i, name in enumerate(names):
        row = [name]
        for j in range(len(names)):
            v = matrix[i, j]
            row.append("" if np.isnan(v) else f"{v:.4f}")
        writer.writerow(row)
    return buf.getvalue()


def odds_table_to_csv(table: OddsRatioTable) -> str:
    """Rows = features, columns = levels, cells = OR(sign), e.g. 1.07(+)."""
    levels = [t.level for t in table.levels]
    names: list[str] = []
    for t in table.levels:
        for name in t.ors:
            if name not in names:
                names.append(name)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature"] + [f"level_{lvl}" for lvl in levels])
    for name in names:
        row = [name]
        for t in table.levels:
            if name in t.ors:
                sign = t.directions[name]
                mark = sign if sign in ("+", "-") else "0"
                row.append(f"{t.ors[name]:.2f}({mark})")
            else:
                row.append("")
        writer.writerow(row)
    return buf.getvalue()


def odds_table_to_json(table: OddsRatioTable) -> str:
    payload = {
        "levels": {
            str(t.level): {
                "odds_ratios": t.ors,
                "directions": t.directions,
                "capped": list(t.capped),
            }
            for t in table.levels
        },
        "consistency": table.consistency,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def consistency_to_csv(consistency: dict[str, str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", "association"])
    for name in sorted(consistency):
        writer.writerow([name, consistency[name]])
    return buf.getvalue()
