"""Cause/effect category rules and ranked aggregate reports.

Categorization is an ordered rule lexicon: each rule carries whole-word
phrase patterns (same matching semantics as the keyword lexicon) and a
category; the first matching rule wins, falling through to "unknown".
Effects add one overlay: when two or more matched categories carry a
positive severity rank (collision < crash < crash with injury/death), the
highest-ranked one wins regardless of rule order, so a span mentioning both
a crash and a death lands in the most severe bucket.

Aggregation counts distinct categories per instance (set semantics, so a
verbose complaint cannot dominate a table), ranks by count descending with
name-ascending tie-breaks, and reports percentages rounded half-up to one
decimal.  The pair table and the overall tables use the caller's
denominator (total ADAS complaints); each per-ADAS table uses that
category's own instance count.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from typing import Iterable, Sequence

from .lexicon import phrase_occurs
from .tagger import CauseEffectInstance

CAUSE_MAJOR_GROUPS = ("vehicle", "environment", "human", "unknown")
UNKNOWN_CATEGORY = "unknown"

# Canonical severity ordering; anything else ranks 0 (no severity).
SEVERITY_ORDER = ("collision", "crash", "crash_injury_death")

DEFAULT_CATEGORY_LEXICON_RESOURCE = "category_lexicon.json"


class TaxonomyError(ValueError):
    """Invalid category lexicon or aggregation inputs."""


def _validate_patterns(patterns: Sequence[str], where: str) -> tuple[str, ...]:
    out = tuple(patterns)
    if not out:
        raise TaxonomyError(f"{where}: rule has no patterns")
    for p in out:
        if not p or p != p.lower() or p != " ".join(p.split()):
            raise TaxonomyError(
                f"{where}: pattern {p!r} must be non-empty, lowercase, "
                "single-spaced"
            )
    return out


@dataclass(frozen=True)
class CauseRule:
    patterns: tuple[str, ...]
    category: str
    major_group: str

    def __post_init__(self):
        object.__setattr__(self, "patterns",
                           _validate_patterns(self.patterns, self.category))
        if not self.category:
            raise TaxonomyError("cause rule with empty category")
        if self.major_group not in CAUSE_MAJOR_GROUPS:
            raise TaxonomyError(
                f"cause {self.category!r}: unknown major group "
                f"{self.major_group!r}"
            )


@dataclass(frozen=True)
class EffectRule:
    patterns: tuple[str, ...]
    category: str
    severity_rank: int = 0

    def __post_init__(self):
        object.__setattr__(self, "patterns",
                           _validate_patterns(self.patterns, self.category))
        if not self.category:
            raise TaxonomyError("effect rule with empty category")
        if self.severity_rank < 0:
            raise TaxonomyError(
                f"effect {self.category!r}: negative severity rank"
            )


@dataclass(frozen=True)
class CategoryLexicon:
    cause_rules: tuple[CauseRule, ...]
    effect_rules: tuple[EffectRule, ...]

    def __post_init__(self):
        object.__setattr__(self, "cause_rules", tuple(self.cause_rules))
        object.__setattr__(self, "effect_rules", tuple(self.effect_rules))
        groups: dict[str, str] = {UNKNOWN_CATEGORY: "unknown"}
        for rule in self.cause_rules:
            prior = groups.get(rule.category)
            if prior is not None and prior != rule.major_group:
                raise TaxonomyError(
                    f"cause {rule.category!r} assigned to two major groups"
                )
            groups[rule.category] = rule.major_group
        ranks: dict[str, int] = {UNKNOWN_CATEGORY: 0}
        for rule in self.effect_rules:
            prior = ranks.get(rule.category)
            if prior is not None and prior != rule.severity_rank:
                raise TaxonomyError(
                    f"effect {rule.category!r} has two severity ranks"
                )
            ranks[rule.category] = rule.severity_rank
        present = [ranks[name] for name in SEVERITY_ORDER if name in ranks]
        if present != sorted(set(present)) or 0 in present:
            raise TaxonomyError(
                "severity ranks must be positive and strictly increasing "
                f"along {SEVERITY_ORDER}"
            )

    def cause_major_group(self, category: str) -> str:
        for rule in self.cause_rules:
            if rule.category == category:
                return rule.major_group
        if category == UNKNOWN_CATEGORY:
            return "unknown"
        raise TaxonomyError(f"unknown cause category {category!r}")

    def effect_severity(self, category: str) -> int:
        for rule in self.effect_rules:
            if rule.category == category:
                return rule.severity_rank
        if category == UNKNOWN_CATEGORY:
            return 0
        raise TaxonomyError(f"unknown effect category {category!r}")


def load_category_lexicon(obj_or_stream) -> CategoryLexicon:
    """Load from a JSON object or a readable stream of one."""
    if hasattr(obj_or_stream, "read"):
        obj = json.load(obj_or_stream)
    else:
        obj = obj_or_stream
    try:
        causes = tuple(
            CauseRule(tuple(r["patterns"]), r["category"], r["major_group"])
            for r in obj["causes"]
        )
        effects = tuple(
            EffectRule(tuple(r["patterns"]), r["category"],
                       int(r.get("severity_rank", 0)))
            for r in obj["effects"]
        )
    except KeyError as exc:
        raise TaxonomyError(f"category lexicon missing field {exc}") from exc
    return CategoryLexicon(causes, effects)


def read_category_lexicon_file(path) -> CategoryLexicon:
    with open(path, encoding="utf-8") as fh:
        return load_category_lexicon(fh)


def default_category_lexicon() -> CategoryLexicon:
    text = (resources.files("cemine") / "data"
            / DEFAULT_CATEGORY_LEXICON_RESOURCE).read_text(encoding="utf-8")
    return load_category_lexicon(json.loads(text))


def _matching_rules(text: str, rules: Sequence) -> list:
    low = text.lower()
    return [r for r in rules
            if any(phrase_occurs(low, p) for p in r.patterns)]


def categorize_cause(span_text: str, lexicon: CategoryLexicon) -> str:
    """First matching cause rule's category; unknown on fall-through."""
    matched = _matching_rules(span_text, lexicon.cause_rules)
    return matched[0].category if matched else UNKNOWN_CATEGORY


def categorize_effect(span_text: str, lexicon: CategoryLexicon) -> str:
    """First matching effect rule, except that two or more matched
    severity-ranked categories resolve to the highest rank."""
    matched = _matching_rules(span_text, lexicon.effect_rules)
    if not matched:
        return UNKNOWN_CATEGORY
    ranked = {r.category: r.severity_rank for r in matched if r.severity_rank > 0}
    if len(ranked) >= 2:
        return max(sorted(ranked), key=lambda name: ranked[name])
    return matched[0].category


@dataclass(frozen=True)
class CategorizedInstance:
    """One complaint's distinct cause and effect categories."""

    complaint_id: str
    adas_category: str
    cause_categories: tuple[str, ...]
    effect_categories: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "cause_categories",
                           tuple(self.cause_categories))
        object.__setattr__(self, "effect_categories",
                           tuple(self.effect_categories))


def categorize_instance(inst: CauseEffectInstance,
                        lexicon: CategoryLexicon) -> CategorizedInstance:
    """Distinct span categories, sorted; spanless sides become unknown."""
    causes = sorted({categorize_cause(s.text, lexicon)
                     for s in inst.cause_spans}) or [UNKNOWN_CATEGORY]
    effects = sorted({categorize_effect(s.text, lexicon)
                      for s in inst.effect_spans}) or [UNKNOWN_CATEGORY]
    return CategorizedInstance(
        complaint_id=inst.complaint_id,
        adas_category=inst.adas_category or "Unassigned",
        cause_categories=tuple(causes),
        effect_categories=tuple(effects),
    )


def categorized_to_json(inst: CategorizedInstance) -> str:
    payload = {
        "complaint_id": inst.complaint_id,
        "adas_category": inst.adas_category,
        "cause_categories": list(inst.cause_categories),
        "effect_categories": list(inst.effect_categories),
    }
    return json.dumps(payload, ensure_ascii=True, separators=(", ", ": "))


def categorized_from_json(line: str) -> CategorizedInstance:
    obj = json.loads(line)
    return CategorizedInstance(
        complaint_id=obj["complaint_id"],
        adas_category=obj["adas_category"],
        cause_categories=tuple(obj["cause_categories"]),
        effect_categories=tuple(obj["effect_categories"]),
    )


def percentage(count: int, denominator: int) -> float:
    """100·count/denominator, rounded half-up to one decimal place."""
    if denominator <= 0:
        raise TaxonomyError("denominator must be positive")
    value = (Decimal(100 * count) / Decimal(denominator)).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP)
    return float(value)


@dataclass(frozen=True)
class RankedRow:
    rank: int
    item: str
    count: int
    percentage: float

    def to_dict(self) -> dict:
        return {"rank": self.rank, "item": self.item,
                "count": self.count, "percentage": self.percentage}


@dataclass(frozen=True)
class PairRow:
    rank: int
    cause: str
    effect: str
    count: int
    percentage: float

    def to_dict(self) -> dict:
        return {"rank": self.rank, "cause": self.cause, "effect": self.effect,
                "count": self.count, "percentage": self.percentage}


@dataclass(frozen=True)
class AdasTable:
    denominator: int
    causes: tuple[RankedRow, ...]
    effects: tuple[RankedRow, ...]


@dataclass(frozen=True)
class TaxonomyReport:
    denominator: int
    pairs: tuple[PairRow, ...]
    overall_causes: tuple[RankedRow, ...]
    overall_effects: tuple[RankedRow, ...]
    per_adas: dict[str, AdasTable] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "denominator": self.denominator,
            "pairs": [r.to_dict() for r in self.pairs],
            "overall_causes": [r.to_dict() for r in self.overall_causes],
            "overall_effects": [r.to_dict() for r in self.overall_effects],
            "per_adas": {
                name: {
                    "denominator": table.denominator,
                    "causes": [r.to_dict() for r in table.causes],
                    "effects": [r.to_dict() for r in table.effects],
                }
                for name, table in self.per_adas.items()
            },
        }


def report_from_dict(obj: dict) -> TaxonomyReport:
    """Inverse of TaxonomyReport.to_dict (and of the json render)."""
    try:
        return TaxonomyReport(
            denominator=obj["denominator"],
            pairs=tuple(PairRow(**r) for r in obj["pairs"]),
            overall_causes=tuple(RankedRow(**r) for r in obj["overall_causes"]),
            overall_effects=tuple(RankedRow(**r) for r in obj["overall_effects"]),
            per_adas={
                name: AdasTable(
                    denominator=table["denominator"],
                    causes=tuple(RankedRow(**r) for r in table["causes"]),
                    effects=tuple(RankedRow(**r) for r in table["effects"]),
                )
                for name, table in obj.get("per_adas", {}).items()
            },
        )
    except (KeyError, TypeError) as exc:
        raise TaxonomyError(f"malformed report object: {exc}") from exc


def _ranked_rows(counts: dict[str, int], denominator: int) -> tuple[RankedRow, ...]:
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(
        RankedRow(rank, name, count, percentage(count, denominator))
        for rank, (name, count) in enumerate(ordered, start=1)
    )


def aggregate(instances: Iterable[CategorizedInstance],
              denominator: int) -> TaxonomyReport:
    """Full ranked tables (untruncated); callers trim to top-k for display."""
    if denominator <= 0:
        raise TaxonomyError("denominator must be positive")
    instances = list(instances)
    cause_counts: dict[str, int] = {}
    effect_counts: dict[str, int] = {}
    pair_counts: dict[tuple[str, str], int] = {}
    by_adas: dict[str, list[CategorizedInstance]] = {}
    for inst in instances:
        for c in set(inst.cause_categories):
            cause_counts[c] = cause_counts.get(c, 0) + 1
        for e in set(inst.effect_categories):
            effect_counts[e] = effect_counts.get(e, 0) + 1
        for c in set(inst.cause_categories):
            for e in set(inst.effect_categories):
                pair_counts[(c, e)] = pair_counts.get((c, e), 0) + 1
        by_adas.setdefault(inst.adas_category, []).append(inst)

    ordered_pairs = sorted(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    pairs = tuple(
        PairRow(rank, cause, effect, count, percentage(count, denominator))
        for rank, ((cause, effect), count) in enumerate(ordered_pairs, start=1)
    )
    per_adas: dict[str, AdasTable] = {}
    for adas_name in sorted(by_adas):
        group = by_adas[adas_name]
        group_causes: dict[str, int] = {}
        group_effects: dict[str, int] = {}
        for inst in group:
            for c in set(inst.cause_categories):
                group_causes[c] = group_causes.get(c, 0) + 1
            for e in set(inst.effect_categories):
                group_effects[e] = group_effects.get(e, 0) + 1
        per_adas[adas_name] = AdasTable(
            denominator=len(group),
            causes=_ranked_rows(group_causes, len(group)),
            effects=_ranked_rows(group_effects, len(group)),
        )
    return TaxonomyReport(
        denominator=denominator,
        pairs=pairs,
        overall_causes=_ranked_rows(cause_counts, denominator),
        overall_effects=_ranked_rows(effect_counts, denominator),
        per_adas=per_adas,
    )


def truncate_report(report: TaxonomyReport, top_causes: int | None = None,
                    top_effects: int | None = None,
                    top_pairs: int | None = None) -> TaxonomyReport:
    def cut(rows, k):
        return rows if k is None else rows[:k]
    return TaxonomyReport(
        denominator=report.denominator,
        pairs=cut(report.pairs, top_pairs),
        overall_causes=cut(report.overall_causes, top_causes),
        overall_effects=cut(report.overall_effects, top_effects),
        per_adas={
            name: AdasTable(
                denominator=table.denominator,
                causes=cut(table.causes, top_causes),
                effects=cut(table.effects, top_effects),
            )
            for name, table in report.per_adas.items()
        },
    )


def render_report(report: TaxonomyReport, fmt: str) -> bytes:
    """Render to csv, json, or markdown with a stable column order."""
    if fmt == "json":
        return (json.dumps(report.to_dict(), ensure_ascii=True, indent=2)
                + "\n").encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["table", "rank", "item", "count", "percentage"])
        for row in report.pairs:
            writer.writerow(["pairs", row.rank, f"{row.cause} -> {row.effect}",
                             row.count, f"{row.percentage:.1f}"])
        for row in report.overall_causes:
            writer.writerow(["overall_causes", row.rank, row.item,
                             row.count, f"{row.percentage:.1f}"])
        for row in report.overall_effects:
            writer.writerow(["overall_effects", row.rank, row.item,
                             row.count, f"{row.percentage:.1f}"])
        for name, table in report.per_adas.items():
            for row in table.causes:
                writer.writerow([f"causes:{name}", row.rank, row.item,
                                 row.count, f"{row.percentage:.1f}"])
            for row in table.effects:
                writer.writerow([f"effects:{name}", row.rank, row.item,
                                 row.count, f"{row.percentage:.1f}"])
        return buf.getvalue().encode("utf-8")
    if fmt == "markdown":
        lines: list[str] = []

        def table(title: str, header: str, rows: list[str]):
            if not rows:
                return
            lines.append(f"## {title}")
            lines.append("")
            lines.append(header)
            lines.append("|" + " --- |" * (header.count("|") - 1))
            lines.extend(rows)
            lines.append("")

        table(
            "Top cause -> effect pairs",
            "| rank | cause | effect | count | percentage |",
            [f"| {r.rank} | {r.cause} | {r.effect} | {r.count} "
             f"| {r.percentage:.1f} |" for r in report.pairs],
        )
        table(
            "Top causes (all ADAS categories)",
            "| rank | cause | count | percentage |",
            [f"| {r.rank} | {r.item} | {r.count} | {r.percentage:.1f} |"
             for r in report.overall_causes],
        )
        table(
            "Top effects (all ADAS categories)",
            "| rank | effect | count | percentage |",
            [f"| {r.rank} | {r.item} | {r.count} | {r.percentage:.1f} |"
             for r in report.overall_effects],
        )
        for name, adas in report.per_adas.items():
            table(
                f"Top causes: {name}",
                "| rank | cause | count | percentage |",
                [f"| {r.rank} | {r.item} | {r.count} | {r.percentage:.1f} |"
                 for r in adas.causes],
            )
            table(
                f"Top effects: {name}",
                "| rank | effect | count | percentage |",
                [f"| {r.rank} | {r.item} | {r.count} | {r.percentage:.1f} |"
                 for r in adas.effects],
            )
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise TaxonomyError(f"unknown report format {fmt!r}")
