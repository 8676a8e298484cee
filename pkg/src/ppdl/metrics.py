"""Confusion matrices, per-class classification reports and the
plain-vs-encrypted comparison.

Precision, recall and F1 are 0 whenever their denominator is 0.  Values are
stored at full precision and rounded to three decimals only for display.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvaluation, IncomparableReports, LabelMismatch


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]  # rows: true class, columns: predicted

    def __post_init__(self):
        k = len(self.classes)
        if len(self.counts) != k or any(len(row) != k for row in self.counts):
            raise LabelMismatch("confusion matrix must be K x K for K classes")
        if any(v < 0 for row in self.counts for v in row):
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64).reshape(len(self.classes), len(self.classes))


def confusion(true, pred, classes) -> ConfusionMatrix:
    true, pred = list(true), list(pred)
    if len(true) != len(pred):
        raise LabelMismatch(f"{len(true)} true labels but {len(pred)} predictions")
    k = len(classes)
    counts = [[0] * k for _ in range(k)]
    for t, p in zip(true, pred):
        if not (0 <= t < k and 0 <= p < k):
            raise LabelMismatch(f"label out of range: true={t}, pred={p}")
        counts[t][p] += 1
    return ConfusionMatrix(tuple(classes), tuple(tuple(r) for r in counts))


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class Averages:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ClassificationReport:
    classes: tuple[str, ...]
    per_class: tuple[ClassScores, ...]
    accuracy: float
    macro_avg: Averages
    weighted_avg: Averages
    total: int

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "per_class": [
                {"precision": s.precision, "recall": s.recall, "f1": s.f1, "support": s.support}
                for s in self.per_class
            ],
            "accuracy": self.accuracy,
            "macro_avg": vars(self.macro_avg),
            "weighted_avg": vars(self.weighted_avg),
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassificationReport":
        return cls(
            tuple(d["classes"]),
            tuple(ClassScores(**s) for s in d["per_class"]),
            d["accuracy"],
            Averages(**d["macro_avg"]),
            Averages(**d["weighted_avg"]),
            d["total"],
        )


def _div(a, b) -> float:
    return a / b if b else 0.0


def _f1(p, r) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def report(cm: ConfusionMatrix) -> ClassificationReport:
    a = cm.array()
    total = int(a.sum())
    if total == 0:
        raise EmptyEvaluation("no samples were evaluated")
    diag = np.diag(a)
    rows, cols = a.sum(axis=1), a.sum(axis=0)
    scores = []
    for k in range(len(cm.classes)):
        p = _div(int(diag[k]), int(cols[k]))
        r = _div(int(diag[k]), int(rows[k]))
        scores.append(ClassScores(p, r, _f1(p, r), int(rows[k])))
    k = len(scores)
    macro = Averages(
        sum(s.precision for s in scores) / k,
        sum(s.recall for s in scores) / k,
        sum(s.f1 for s in scores) / k,
    )
    weighted = Averages(
        sum(s.precision * s.support for s in scores) / total,
        sum(s.recall * s.support for s in scores) / total,
        sum(s.f1 * s.support for s in scores) / total,
    )
    return ClassificationReport(
        cm.classes, tuple(scores), int(diag.sum()) / total, macro, weighted, total
    )


def format_table(rep: ClassificationReport, digits: int = 3) -> str:
    """Fixed-width table: per-class rows, then accuracy / macro / weighted rows."""
    width = max([len(c) for c in rep.classes] + [len("Weighted avg")])
    num = 9
    head = f"{'':<{width}}  {'precision':>{num}}  {'recall':>{num}}  {'f1-score':>{num}}  {'support':>{num}}"

    def row(name, p, r, f, s):
        cells = [f"{v:>{num}.{digits}f}" if v is not None else " " * num for v in (p, r, f)]
        return f"{name:<{width}}  " + "  ".join(cells) + f"  {s:>{num}}"

    lines = [head, ""]
    for c, s in zip(rep.classes, rep.per_class):
        lines.append(row(c, s.precision, s.recall, s.f1, s.support))
    lines.append("")
    lines.append(row("Accuracy", None, None, rep.accuracy, rep.total))
    m, w = rep.macro_avg, rep.weighted_avg
    lines.append(row("Macro avg", m.precision, m.recall, m.f1, rep.total))
    lines.append(row("Weighted avg", w.precision, w.recall, w.f1, rep.total))
    return "\n".join(lines)


def format_confusion(cm: ConfusionMatrix) -> str:
    width = max(len(c) for c in cm.classes)
    cell = max(width, max(len(str(v)) for row in cm.counts for v in row))
    lines = [" " * width + "  " + "  ".join(f"{c:>{cell}}" for c in cm.classes)]
    for c, row in zip(cm.classes, cm.counts):
        lines.append(f"{c:<{width}}  " + "  ".join(f"{v:>{cell}}" for v in row))
    return "\n".join(lines)


@dataclass(frozen=True)
class ComparisonReport:
    classes: tuple[str, ...]
    plain_accuracy: float
    encrypted_accuracy: float
    gap: float  # plain - encrypted
    f1_deltas: tuple[float, ...]  # encrypted - plain, per class
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "plain_accuracy": self.plain_accuracy,
            "encrypted_accuracy": self.encrypted_accuracy,
            "gap": self.gap,
            "f1_deltas": list(self.f1_deltas),
            "threshold": self.threshold,
            "passed": self.passed,
        }

    def format(self) -> str:
        lines = [
            f"plain accuracy      {self.plain_accuracy:.3f}",
            f"encrypted accuracy  {self.encrypted_accuracy:.3f}",
            f"gap (plain - enc)   {self.gap:.3f}   threshold {self.threshold:.3f}   "
            + ("PASS" if self.passed else "FAIL"),
            "",
            "per-class f1 delta (encrypted - plain):",
        ]
        width = max(len(c) for c in self.classes)
        lines += [f"  {c:<{width}}  {d:+.3f}" for c, d in zip(self.classes, self.f1_deltas)]
        return "\n".join(lines)


def compare(plain: ClassificationReport, encrypted: ClassificationReport, threshold: float = 0.05) -> ComparisonReport:
    if tuple(plain.classes) != tuple(encrypted.classes):
        raise IncomparableReports(
            f"class lists differ: {list(plain.classes)} vs {list(encrypted.classes)}"
        )
    gap = plain.accuracy - encrypted.accuracy
    deltas = tuple(e.f1 - p.f1 for p, e in zip(plain.per_class, encrypted.per_class))
    return ComparisonReport(
        tuple(plain.classes),
        plain.accuracy,
        encrypted.accuracy,
        gap,
        deltas,
        threshold,
        abs(gap) <= threshold,
    )


# -- report files ------------------------------------------------------------


def dump_evaluation(cm: ConfusionMatrix, rep: ClassificationReport, split: str = "test") -> bytes:
    doc = {
        "format": "ppdl-evaluation",
        "version": 1,
        "split": split,
        "confusion": [list(r) for r in cm.counts],
        "report": rep.to_dict(),
    }
    return (json.dumps(doc, indent=2) + "\n").encode()


def load_evaluation(data: bytes) -> tuple[ConfusionMatrix | None, ClassificationReport]:
    """Read an evaluation file; a bare report object (no confusion) is accepted."""
    doc = json.loads(data)
    if doc.get("format") == "ppdl-evaluation":
        rep = ClassificationReport.from_dict(doc["report"])
        cm = ConfusionMatrix(rep.classes, tuple(tuple(r) for r in doc["confusion"]))
        return cm, rep
    return None, ClassificationReport.from_dict(doc)
