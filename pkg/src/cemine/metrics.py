"""Precision/recall/F1 arithmetic shared by the classifier and tagger.

Metrics are computed in exact rational arithmetic (fractions.Fraction) and
converted to float only at the edge, so reported values are the correctly
rounded doubles of the true ratios.  Zero-denominator conventions: no
positive predictions gives precision 0 with an explicit flag; no positive
gold gives recall 0; P+R == 0 gives F1 = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence


class MetricsError(ValueError):
    """Invalid metric inputs (length mismatch, negative counts)."""


@dataclass(frozen=True)
class ConfusionCounts:
    true_positive: int
    false_positive: int
    false_negative: int
    true_negative: int = 0

    def __post_init__(self):
        for name in ("true_positive", "false_positive",
                     "false_negative", "true_negative"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise MetricsError(f"{name} must be a non-negative integer")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.true_positive + other.true_positive,
            self.false_positive + other.false_positive,
            self.false_negative + other.false_negative,
            self.true_negative + other.true_negative,
        )

    @property
    def total(self) -> int:
        return (self.true_positive + self.false_positive
                + self.false_negative + self.true_negative)


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    no_positive_predictions: bool = False

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": {
                "true_positive": self.counts.true_positive,
                "false_positive": self.counts.false_positive,
                "false_negative": self.counts.false_negative,
                "true_negative": self.counts.true_negative,
            },
            "no_positive_predictions": self.no_positive_predictions,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MetricReport":
        c = obj["counts"]
        return cls(
            precision=obj["precision"],
            recall=obj["recall"],
            f1=obj["f1"],
            counts=ConfusionCounts(
                c["true_positive"], c["false_positive"],
                c["false_negative"], c.get("true_negative", 0),
            ),
            no_positive_predictions=obj.get("no_positive_predictions", False),
        )


def report_from_counts(counts: ConfusionCounts) -> MetricReport:
    """Exact P/R/F1 from confusion counts; floats are final conversions only."""
    tp = counts.true_positive
    pred_pos = tp + counts.false_positive
    gold_pos = tp + counts.false_negative
    no_preds = pred_pos == 0
    precision = Fraction(tp, pred_pos) if pred_pos else Fraction(0)
    recall = Fraction(tp, gold_pos) if gold_pos else Fraction(0)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = Fraction(0)
    return MetricReport(
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        counts=counts,
        no_positive_predictions=no_preds,
    )


def confusion_from_pairs(predicted: Sequence, gold: Sequence,
                         positive) -> ConfusionCounts:
    """Count one binary confusion table, treating `positive` as the target."""
    if len(predicted) != len(gold):
        raise MetricsError(
            f"prediction/gold length mismatch: {len(predicted)} vs {len(gold)}"
        )
    tp = fp = fn = tn = 0
    for p, g in zip(predicted, gold):
        if p == positive and g == positive:
            tp += 1
        elif p == positive:
            fp += 1
        elif g == positive:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def evaluate_binary(predicted: Sequence, gold: Sequence,
                    positive=True) -> MetricReport:
    return report_from_counts(confusion_from_pairs(predicted, gold, positive))


def pool_counts(counts: Iterable[ConfusionCounts]) -> ConfusionCounts:
    total = ConfusionCounts(0, 0, 0, 0)
    for c in counts:
        total = total + c
    return total


def per_label_reports(predicted: Sequence[str], gold: Sequence[str],
                      labels: Sequence[str]) -> dict[str, MetricReport]:
    """One-vs-rest report per label over aligned flat tag sequences."""
    return {
        label: report_from_counts(confusion_from_pairs(predicted, gold, label))
        for label in labels
    }


def macro_average(reports: Iterable[MetricReport]) -> dict[str, float]:
    """Unweighted mean of per-label P/R/F1 (macro-F1 = mean of label F1s)."""
    reports = list(reports)
    if not reports:
        raise MetricsError("macro average of zero reports")
    n = len(reports)
    return {
        "precision": sum(r.precision for r in reports) / n,
        "recall": sum(r.recall for r in reports) / n,
        "f1": sum(r.f1 for r in reports) / n,
    }
