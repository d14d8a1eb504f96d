"""Token-level tagging metrics in the pipeline's report schema.

The pipeline serializes per-label metric reports as
``{"precision", "recall", "f1", "counts": {"true_positive", ...},
"no_positive_predictions"}``; evaluation summaries carry ``per_label``,
``macro``, and ``token_count`` keys. Emitting the same shapes keeps the
two sides' evaluation artifacts directly comparable.
"""

from __future__ import annotations

from typing import Sequence

LABELS = ("C", "E", "O")


class MetricsError(ValueError):
    """Raised for inconsistent prediction/gold inputs."""


def report_from_counts(tp: int, fp: int, fn: int, tn: int = 0) -> dict:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "counts": {
            "true_positive": tp,
            "false_positive": fp,
            "false_negative": fn,
            "true_negative": tn,
        },
        "no_positive_predictions": tp + fp == 0,
    }


def per_label_reports(predicted: Sequence[str],
                      gold: Sequence[str]) -> dict[str, dict]:
    if len(predicted) != len(gold):
        raise MetricsError(
            f"prediction/gold length mismatch: {len(predicted)} vs {len(gold)}"
        )
    reports = {}
    for label in LABELS:
        tp = fp = fn = tn = 0
        for p, g in zip(predicted, gold):
            if p == label and g == label:
                tp += 1
            elif p == label:
                fp += 1
            elif g == label:
                fn += 1
            else:
                tn += 1
        reports[label] = report_from_counts(tp, fp, fn, tn)
    return reports


def macro_average(reports: Sequence[dict]) -> dict:
    n = len(reports)
    if n == 0:
        raise MetricsError("cannot average zero reports")
    return {
        "precision": sum(r["precision"] for r in reports) / n,
        "recall": sum(r["recall"] for r in reports) / n,
        "f1": sum(r["f1"] for r in reports) / n,
    }


def tagging_summary(predicted: Sequence[str], gold: Sequence[str]) -> dict:
    """per_label + macro + token_count over flat tag sequences."""
    reports = per_label_reports(predicted, gold)
    return {
        "per_label": reports,
        "macro": macro_average([reports[label] for label in LABELS]),
        "token_count": len(gold),
    }
