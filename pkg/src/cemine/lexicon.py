"""Keyword-lexicon matching of ADAS phrases in complaint narratives.

A lexicon is an ordered list of keyword groups, each carrying one ADAS
category.  A narrative is ADAS-related when any group phrase occurs in it
as a whole-word-bounded substring (boundaries are non-alphanumeric
characters or the string edges, so "airplane" never matches "lane").
Complaints matching several groups count toward each group's share of the
distribution, but get a single assigned category: that of the earliest
matching group in lexicon order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import IO, Iterable, Iterator

ADAS_CATEGORIES = (
    "EmergencyBraking",
    "AdaptiveCruiseControl",
    "LaneKeepAssist",
    "AutomaticSteering",
    "Autopilot",
    "ForwardCollisionAvoidance",
    "BlindSpotAssist",
    "Other",
)

DEFAULT_LEXICON_RESOURCE = "adas_lexicon.jsonl"


class LexiconError(ValueError):
    """Invalid lexicon contents."""


@dataclass(frozen=True)
class KeywordGroup:
    group_id: str
    adas_category: str
    keywords: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if not self.group_id:
            raise LexiconError("group_id must be non-empty")
        if self.adas_category not in ADAS_CATEGORIES:
            raise LexiconError(
                f"group {self.group_id!r}: unknown adas_category "
                f"{self.adas_category!r}"
            )
        if not self.keywords:
            raise LexiconError(f"group {self.group_id!r} has no keywords")
        for kw in self.keywords:
            if not kw:
                raise LexiconError(f"group {self.group_id!r} has an empty keyword")
            if kw != kw.lower():
                raise LexiconError(f"keyword {kw!r} must be lowercase")
            if kw != " ".join(kw.split()):
                raise LexiconError(
                    f"keyword {kw!r} must use single internal spaces"
                )


@dataclass(frozen=True)
class MatchResult:
    complaint_id: str
    matched_groups: tuple[str, ...]
    is_adas: bool
    adas_category: str | None

    def __post_init__(self):
        object.__setattr__(self, "matched_groups", tuple(self.matched_groups))
        if self.is_adas != bool(self.matched_groups):
            raise LexiconError("is_adas must mirror matched_groups non-emptiness")
        if (self.adas_category is not None) != self.is_adas:
            raise LexiconError("adas_category present iff is_adas")


def validate_lexicon(groups: Iterable[KeywordGroup]) -> list[KeywordGroup]:
    out = list(groups)
    seen: set[str] = set()
    for g in out:
        if g.group_id in seen:
            raise LexiconError(f"duplicate group_id {g.group_id!r}")
        seen.add(g.group_id)
    return out


def load_lexicon(stream: IO[str] | Iterable[str]) -> list[KeywordGroup]:
    """Load a lexicon from JSONL lines of {group_id, adas_category, keywords}."""
    groups = []
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LexiconError(f"line {line_no}: invalid JSON: {exc}") from exc
        try:
            groups.append(KeywordGroup(
                group_id=obj["group_id"],
                adas_category=obj["adas_category"],
                keywords=tuple(obj["keywords"]),
            ))
        except KeyError as exc:
            raise LexiconError(f"line {line_no}: missing field {exc}") from exc
    return validate_lexicon(groups)


def read_lexicon_file(path) -> list[KeywordGroup]:
    with open(path, encoding="utf-8") as fh:
        return load_lexicon(fh)


def default_lexicon() -> list[KeywordGroup]:
    """The shipped ADAS keyword lexicon (one group per published table row)."""
    text = (resources.files("cemine") / "data" / DEFAULT_LEXICON_RESOURCE
            ).read_text(encoding="utf-8")
    return load_lexicon(text.splitlines())


def _is_boundary(text: str, index: int) -> bool:
    # Positions outside the string count as boundaries.
    if index < 0 or index >= len(text):
        return True
    return not text[index].isalnum()


def phrase_occurs(text_lower: str, phrase: str) -> bool:
    """Whole-word-bounded substring test on pre-lowercased text."""
    start = 0
    while True:
        pos = text_lower.find(phrase, start)
        if pos < 0:
            return False
        if _is_boundary(text_lower, pos - 1) and _is_boundary(text_lower, pos + len(phrase)):
            return True
        start = pos + 1


def match_keywords(narrative: str, lexicon: list[KeywordGroup]) -> tuple[str, ...]:
    """Group ids whose phrases occur in the narrative, in lexicon order."""
    text = narrative.lower()
    return tuple(
        g.group_id for g in lexicon
        if any(phrase_occurs(text, kw) for kw in g.keywords)
    )


def assign_adas_category(matched_groups: Iterable[str],
                         lexicon: list[KeywordGroup]) -> str:
    """Category of the first matched group in lexicon (priority) order."""
    matched = set(matched_groups)
    if not matched:
        raise LexiconError("cannot assign a category without matches")
    by_id = {g.group_id: g for g in lexicon}
    unknown = matched - set(by_id)
    if unknown:
        raise LexiconError(f"matched groups not in lexicon: {sorted(unknown)}")
    for g in lexicon:
        if g.group_id in matched:
            return g.adas_category
    raise AssertionError("unreachable")


def match_complaint(complaint_id: str, narrative: str,
                    lexicon: list[KeywordGroup]) -> MatchResult:
    matched = match_keywords(narrative, lexicon)
    return MatchResult(
        complaint_id=complaint_id,
        matched_groups=matched,
        is_adas=bool(matched),
        adas_category=assign_adas_category(matched, lexicon) if matched else None,
    )


def keyword_distribution(results: Iterable[MatchResult]) -> dict[str, float]:
    """Percentage of ADAS complaints matching each group (overlaps double count)."""
    counts: dict[str, int] = {}
    adas_total = 0
    for res in results:
        if not res.is_adas:
            continue
        adas_total += 1
        for gid in res.matched_groups:
            counts[gid] = counts.get(gid, 0) + 1
    if adas_total == 0:
        return {}
    return {gid: 100.0 * n / adas_total for gid, n in counts.items()}


def match_to_json(res: MatchResult) -> str:
    payload = {
        "complaint_id": res.complaint_id,
        "matched_groups": list(res.matched_groups),
        "is_adas": res.is_adas,
        "adas_category": res.adas_category,
    }
    return json.dumps(payload, ensure_ascii=True, separators=(", ", ": "))


def match_from_json(line: str) -> MatchResult:
    obj = json.loads(line)
    return MatchResult(
        complaint_id=obj["complaint_id"],
        matched_groups=tuple(obj["matched_groups"]),
        is_adas=obj["is_adas"],
        adas_category=obj.get("adas_category"),
    )


def match_stream(records, lexicon: list[KeywordGroup]) -> Iterator[MatchResult]:
    """MatchResult per complaint record, ADAS or not."""
    for rec in records:
        yield match_complaint(rec.complaint_id, rec.narrative, lexicon)
