"""Span-level scoring: exact-match entity F1 with micro/macro/weighted aggregates.

A predicted span counts as a true positive only when its (label, start, end)
triple equals a gold span; a boundary or label error is both a false positive
and a false negative. All zero-denominator ratios are defined as 0, never
NaN, so empty predictions aggregate cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import EntitySpan, TagSet
from .errors import ShapeError


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @classmethod
    def from_counts(cls, label: str, tp: int, fp: int, fn: int) -> "ClassMetrics":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        return cls(label, tp, fp, fn, precision, recall, f1)


@dataclass(frozen=True)
class Report:
    per_class: tuple[ClassMetrics, ...]
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_f1: float
    weighted_f1: float

    def to_dict(self) -> dict:
        return {
            "per_class": [
                {
                    "label": m.label, "tp": m.tp, "fp": m.fp, "fn": m.fn,
                    "support": m.support, "precision": m.precision,
                    "recall": m.recall, "f1": m.f1,
                }
                for m in self.per_class
            ],
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
        }


def match_spans(gold: Sequence[EntitySpan], pred: Sequence[EntitySpan],
                relaxed: bool = False) -> dict[str, tuple[int, int, int]]:
    """Per-class (tp, fp, fn) counts for one sentence.

    Strict mode requires exact (label, start, end) equality. Relaxed mode
    credits a prediction that overlaps a same-label gold span, matching each
    gold span at most once (greedy, in span order).
    """
    counts: dict[str, list[int]] = {}

    def bucket(label):
        return counts.setdefault(label, [0, 0, 0])

    if relaxed:
        matched_gold: set[int] = set()
        for p in pred:
            hit = next(
                (gi for gi, g in enumerate(gold)
                 if gi not in matched_gold and g.label == p.label
                 and g.token_start < p.token_end and p.token_start < g.token_end),
                None,
            )
            if hit is None:
                bucket(p.label)[1] += 1
            else:
                matched_gold.add(hit)
                bucket(p.label)[0] += 1
        for gi, g in enumerate(gold):
            if gi not in matched_gold:
                bucket(g.label)[2] += 1
    else:
        gold_keys = {(g.label, g.token_start, g.token_end) for g in gold}
        pred_keys = {(p.label, p.token_start, p.token_end) for p in pred}
        for label, start, end in pred_keys:
            bucket(label)[0 if (label, start, end) in gold_keys else 1] += 1
        for label, start, end in gold_keys:
            if (label, start, end) not in pred_keys:
                bucket(label)[2] += 1
    return {label: tuple(c) for label, c in counts.items()}


def classification_report(pairs: Sequence[tuple[Sequence[EntitySpan],
                                                Sequence[EntitySpan]]],
                          tagset: TagSet, relaxed: bool = False) -> Report:
    """Pool per-sentence counts into per-class metrics and aggregates.

    ``pairs`` aligns gold and predicted span lists sentence by sentence.
    Classes are reported in tag-set order, including zero-support ones.
    """
    totals = {label: [0, 0, 0] for label in tagset.classes}
    for gold, pred in pairs:
        for spans, role in ((gold, "gold"), (pred, "predicted")):
            for span in spans:
                if span.label not in totals:
                    raise ValueError(
                        f"{role} span has class {span.label!r} outside the tag set"
                    )
        for label, (tp, fp, fn) in match_spans(gold, pred, relaxed=relaxed).items():
            totals[label][0] += tp
            totals[label][1] += fp
            totals[label][2] += fn

    per_class = tuple(
        ClassMetrics.from_counts(label, *totals[label]) for label in tagset.classes
    )
    tp = sum(m.tp for m in per_class)
    fp = sum(m.fp for m in per_class)
    fn = sum(m.fn for m in per_class)
    micro_p = tp / (tp + fp) if tp + fp else 0.0
    micro_r = tp / (tp + fn) if tp + fn else 0.0
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    macro_f1 = sum(m.f1 for m in per_class) / len(per_class)
    total_support = sum(m.support for m in per_class)
    weighted_f1 = (
        sum(m.f1 * m.support for m in per_class) / total_support
        if total_support else 0.0
    )
    return Report(per_class, micro_p, micro_r, micro_f1, macro_f1, weighted_f1)


def token_accuracy(gold: Sequence[Sequence[int]],
                   pred: Sequence[Sequence[int]]) -> float:
    """Fraction of token positions with equal tag ids, pooled over sentences."""
    if len(gold) != len(pred):
        raise ShapeError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    correct = total = 0
    for s, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ShapeError(
                f"sentence {s}: gold length {len(g)} != predicted length {len(p)}"
            )
        correct += sum(1 for a, b in zip(g, p) if a == b)
        total += len(g)
    if total == 0:
        raise ValueError("token accuracy is undefined on an empty dataset")
    return correct / total


def format_report(report: Report) -> str:
    """Aligned plain-text table: one row per class plus aggregate footer."""
    header = f"{'Class':<14} {'Precision':>9} {'Recall':>9} {'F1-score':>9} {'Support':>8}"
    lines = [header, "-" * len(header)]
    for m in report.per_class:
        lines.append(
            f"{m.label:<14} {m.precision:>9.4f} {m.recall:>9.4f} "
            f"{m.f1:>9.4f} {m.support:>8d}"
        )
    lines.append("-" * len(header))
    lines.append(f"{'Micro F1':<14} {report.micro_f1:>9.4f}")
    lines.append(f"{'Weighted F1':<14} {report.weighted_f1:>9.4f}")
    lines.append(f"{'Macro Avg':<14} {report.macro_f1:>9.4f}")
    return "\n".join(lines)
