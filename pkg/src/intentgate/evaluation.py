"""Evaluation metrics and routing analysis.

Scoring happens over the closed label space: every catalog intent plus the
out-of-scope token, OOS last. Zero-denominator cases yield 0.0 and leave a
flag in the report instead of raising, so a sweep over many configurations
never dies on a degenerate slice.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .domain import DEFAULT_OOS_TOKEN, EmbeddedUtterance, IntentCatalog, LabeledDataset
from .errors import DataError
from .routing import NAMED_THRESHOLDS

logger = logging.getLogger(__name__)

HINT3_SENTINEL = "NO_NODES_DETECTED"


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    labels: tuple[str, ...]
    per_class: Mapping[str, ClassMetrics]
    micro_f1: float
    macro_f1: float
    weighted_f1: float
    ins_accuracy: float
    oos_precision: float
    oos_recall: float
    confusion: tuple[tuple[int, ...], ...]
    total: int
    gold_ins_total: int
    flags: tuple[str, ...]


def label_space(catalog: IntentCatalog) -> tuple[str, ...]:
    return catalog.names + (catalog.oos_token,)


def evaluate(
    golds: Sequence[str], predictions: Sequence[str], catalog: IntentCatalog
) -> MetricsReport:
    """Score predictions against gold labels over the full label space."""
    if len(golds) != len(predictions):
        raise DataError(
            f"length mismatch: {len(golds)} gold labels, {len(predictions)} predictions"
        )
    if not golds:
        raise DataError("nothing to evaluate")
    labels = label_space(catalog)
    index = {name: i for i, name in enumerate(labels)}
    for kind, seq in (("gold", golds), ("predicted", predictions)):
        for label in seq:
            if label not in index:
                raise DataError(f"unknown {kind} label: {label!r}")

    n = len(labels)
    confusion = [[0] * n for _ in range(n)]
    for gold, pred in zip(golds, predictions):
        confusion[index[gold]][index[pred]] += 1

    flags: list[str] = []
    per_class: dict[str, ClassMetrics] = {}
    for i, label in enumerate(labels):
        tp = confusion[i][i]
        support = sum(confusion[i])
        predicted = sum(confusion[r][i] for r in range(n))
        if predicted > 0:
            precision = tp / predicted
        else:
            precision = 0.0
            flags.append(f"precision undefined for {label!r}: never predicted")
        if support > 0:
            recall = tp / support
        else:
            recall = 0.0
            flags.append(f"recall undefined for {label!r}: no gold items")
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
            if predicted > 0 and support > 0:
                flags.append(f"f1 undefined for {label!r}: precision and recall both zero")
        per_class[label] = ClassMetrics(precision, recall, f1, support)

    total = len(golds)
    correct = sum(confusion[i][i] for i in range(n))
    micro_f1 = correct / total  # single-label micro averaging collapses to accuracy

    macro_f1 = sum(m.f1 for m in per_class.values()) / n
    weighted_f1 = sum(m.f1 * m.support for m in per_class.values()) / total

    oos = catalog.oos_token
    gold_ins_total = total - per_class[oos].support
    if gold_ins_total > 0:
        ins_correct = sum(
            1
            for gold, pred in zip(golds, predictions)
            if gold != oos and pred == gold
        )
        ins_accuracy = ins_correct / gold_ins_total
    else:
        ins_accuracy = 0.0
        flags.append("in-scope accuracy undefined: no in-scope gold items")

    return MetricsReport(
        labels=labels,
        per_class=per_class,
        micro_f1=micro_f1,
        macro_f1=macro_f1,
        weighted_f1=weighted_f1,
        ins_accuracy=ins_accuracy,
        oos_precision=per_class[oos].precision,
        oos_recall=per_class[oos].recall,
        confusion=tuple(tuple(row) for row in confusion),
        total=total,
        gold_ins_total=gold_ins_total,
        flags=tuple(flags),
    )


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "labels": list(report.labels),
        "per_class": {
            label: {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
            }
            for label, m in report.per_class.items()
        },
        "micro_f1": report.micro_f1,
        "macro_f1": report.macro_f1,
        "weighted_f1": report.weighted_f1,
        "ins_accuracy": report.ins_accuracy,
        "oos_precision": report.oos_precision,
        "oos_recall": report.oos_recall,
        "confusion": [list(row) for row in report.confusion],
        "total": report.total,
        "gold_ins_total": report.gold_ins_total,
        "flags": list(report.flags),
    }


def format_report_json(report: MetricsReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False)


def format_report_text(report: MetricsReport) -> str:
    """Aligned, human-first rendering with the confusion matrix attached."""
    name_w = max(len("label"), max(len(x) for x in report.labels))
    header = f"{'label':<{name_w}}  {'precision':>9}  {'recall':>9}  {'f1':>9}  {'support':>7}"
    lines = [header, "-" * len(header)]
    for label in report.labels:
        m = report.per_class[label]
        lines.append(
            f"{label:<{name_w}}  {m.precision:>9.4f}  {m.recall:>9.4f}  {m.f1:>9.4f}  {m.support:>7d}"
        )
    lines.append("")
    for name, value in (
        ("micro-F1", report.micro_f1),
        ("macro-F1", report.macro_f1),
        ("weighted-F1", report.weighted_f1),
        ("INS accuracy", report.ins_accuracy),
        ("OOS precision", report.oos_precision),
        ("OOS recall", report.oos_recall),
    ):
        lines.append(f"{name:<13} {value:.4f}")
    lines.append(f"{'items':<13} {report.total}")

    lines.append("")
    lines.append("confusion (rows gold, columns predicted):")
    col_w = max(5, max(len(x) for x in report.labels))
    lines.append(" " * (name_w + 2) + "  ".join(f"{x:>{col_w}}" for x in report.labels))
    for label, row in zip(report.labels, report.confusion):
        lines.append(
            f"{label:<{name_w}}  " + "  ".join(f"{v:>{col_w}d}" for v in row)
        )
    if report.flags:
        lines.append("")
        lines.extend(f"note: {flag}" for flag in report.flags)
    return "\n".join(lines) + "\n"


def format_report_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "precision", "recall", "f1", "support"])
    for label in report.labels:
        m = report.per_class[label]
        writer.writerow(
            [label, f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}", m.support]
        )
    writer.writerow(["micro_f1", "", "", f"{report.micro_f1:.6f}", report.total])
    writer.writerow(["macro_f1", "", "", f"{report.macro_f1:.6f}", report.total])
    writer.writerow(["weighted_f1", "", "", f"{report.weighted_f1:.6f}", report.total])
    writer.writerow(
        ["ins_accuracy", "", "", f"{report.ins_accuracy:.6f}", report.gold_ins_total]
    )
    return buf.getvalue()


FORMATTERS = {
    "json": format_report_json,
    "text": format_report_text,
    "csv": format_report_csv,
}


def routing_analysis(
    golds: Sequence[str],
    top1_labels: Sequence[str],
    scores: Sequence[float],
    oos_token: str = DEFAULT_OOS_TOKEN,
    thresholds: Optional[Mapping[str, float]] = None,
) -> dict[str, dict[str, float]]:
    """Fraction of items escalated past each threshold, split three ways.

    Splits: gold out-of-scope items, in-scope items the classifier got wrong,
    in-scope items it got right. A split with no members is left out of the
    result entirely rather than reported as zero.
    """
    if not (len(golds) == len(top1_labels) == len(scores)):
        raise DataError("golds, top1_labels and scores must be equally long")
    if thresholds is None:
        thresholds = NAMED_THRESHOLDS
    groups: dict[str, list[float]] = {
        "gold_oos": [],
        "misclassified_ins": [],
        "correct_ins": [],
    }
    for gold, top1, s in zip(golds, top1_labels, scores):
        s = float(s)
        if s != s:
            raise DataError("uncertainty score is NaN")
        if gold == oos_token:
            groups["gold_oos"].append(s)
        elif top1 == gold:
            groups["correct_ins"].append(s)
        else:
            groups["misclassified_ins"].append(s)
    result: dict[str, dict[str, float]] = {}
    for name, tau in thresholds.items():
        row = {}
        for group, values in groups.items():
            if values:
                row[group] = sum(1 for s in values if s > tau) / len(values)
        result[name] = row
    return result


def load_hint3(
    path,
    oos_token: str = DEFAULT_OOS_TOKEN,
    sentinel: str = HINT3_SENTINEL,
) -> LabeledDataset:
    """Read a sentence/label CSV, mapping the corpus OOS sentinel to ours.

    Utterances come back without embeddings (ids derived from CSV line
    numbers); a header-only file yields an empty dataset with a warning.
    """
    items: list[tuple[EmbeddedUtterance, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for required in ("sentence", "label"):
            if required not in fields:
                raise DataError(f"{path}: missing column {required!r}")
        for lineno, row in enumerate(reader, start=2):
            sentence = (row.get("sentence") or "").strip()
            label = (row.get("label") or "").strip()
            if not sentence:
                raise DataError(f"{path}:{lineno}: empty sentence")
            if not label:
                raise DataError(f"{path}:{lineno}: empty label")
            items.append(
                (
                    EmbeddedUtterance(f"row-{lineno}", sentence),
                    oos_token if label == sentinel else label,
                )
            )
    if not items:
        logger.warning("%s: header-only file, no data rows", path)
    return LabeledDataset(items)
