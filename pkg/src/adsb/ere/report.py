"""Classification report with the standard per-class metric table."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ClassEntry:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    entries: tuple[ClassEntry, ...]
    accuracy: float
    macro_avg: tuple[float, float, float]
    weighted_avg: tuple[float, float, float]
    total_support: int

    def format(self, digits: int = 2) -> str:
        """Render the familiar precision/recall/f1-score/support table."""
        headers = ("precision", "recall", "f1-score", "support")
        rows = [(e.label, e.precision, e.recall, e.f1, e.support) for e in self.entries]
        name_width = max(len("weighted avg"), *(len(r[0]) for r in rows))
        width = max(len(h) for h in headers)

        def fmt(value: float) -> str:
            return f"{value:>{width}.{digits}f}"

        lines = [" " * name_width + "  " + "  ".join(f"{h:>{width}}" for h in headers), ""]
        for label, p, r, f1, support in rows:
            lines.append(
                f"{label:>{name_width}}  {fmt(p)}  {fmt(r)}  {fmt(f1)}  {support:>{width}}"
            )
        lines.append("")
        pad = "  ".join([" " * width] * 2)
        lines.append(
            f"{'accuracy':>{name_width}}  {pad}  {fmt(self.accuracy)}  {self.total_support:>{width}}"
        )
        for name, (p, r, f1) in (("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)):
            lines.append(
                f"{name:>{name_width}}  {fmt(p)}  {fmt(r)}  {fmt(f1)}  {self.total_support:>{width}}"
            )
        return "\n".join(lines)


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def classification_report(
    y_true: Sequence, y_pred: Sequence, labels: Sequence | None = None
) -> ClassificationReport:
    """Per-class precision/recall/f1/support plus accuracy and averages,
    computed from first principles."""
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred) or not y_true:
        raise ValueError("y_true and y_pred must be non-empty and aligned")
    if labels is None:
        labels = sorted(set(y_true) | set(y_pred))
    entries = []
    for label in labels:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == label and p == label)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != label and p == label)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == label and p != label)
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        support = sum(1 for t in y_true if t == label)
        entries.append(ClassEntry(str(label), precision, recall, f1, support))

    total = len(y_true)
    accuracy = sum(1 for t, p in zip(y_true, y_pred) if t == p) / total
    macro = tuple(
        float(np.mean([getattr(e, m) for e in entries])) for m in ("precision", "recall", "f1")
    )
    weighted = tuple(
        float(sum(getattr(e, m) * e.support for e in entries) / total)
        for m in ("precision", "recall", "f1")
    )
    return ClassificationReport(
        entries=tuple(entries),
        accuracy=accuracy,
        macro_avg=macro,  # type: ignore[arg-type]
        weighted_avg=weighted,  # type: ignore[arg-type]
        total_support=total,
    )
