"""Staged end-to-end pipeline with a digest manifest.

Stages run in dependency order: ingest, filter, classify, tag, extract,
categorize, report.  Every stage reads only declared inputs and writes
newline-delimited JSON (or the rendered report), then appends a manifest
line recording the sha256 of each input and output plus the seed, so two
runs over identical inputs are byte-comparable.  A failing stage leaves its
outputs with a ".partial" suffix and aborts the run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Callable

from . import classifier as clf
from . import corpus as corpus_mod
from . import ingest as ingest_mod
from . import lexicon as lexicon_mod
from . import protocol as protocol_mod
from . import tagger as tagger_mod
from . import taxonomy as taxonomy_mod

STAGES = ("ingest", "filter", "classify", "tag", "extract",
          "categorize", "report")

logger = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """Configuration or stage failure; carries the stage name when known."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


@dataclass
class PipelineConfig:
    input: str
    annotations: str
    out_dir: str = "out"
    lexicon: str | None = None
    category_lexicon: str | None = None
    seed: int = 7
    format: str = "markdown"
    delimiter: str = "\t"
    header: bool = False
    date_start: str | None = None
    date_end: str | None = None
    date_field: str = "received_date"
    max_error_fraction: float | None = 0.01
    negative_ratio: int | None = None
    adapter: str | None = None
    classifier_epochs: int = clf.DEFAULT_EPOCHS
    classifier_learning_rate: float = clf.DEFAULT_LEARNING_RATE
    classifier_l2: float = clf.DEFAULT_L2
    classifier_batch_size: int = clf.DEFAULT_BATCH_SIZE
    classifier_dimension: int = clf.DEFAULT_DIMENSION
    tagger_epochs: int = tagger_mod.DEFAULT_EPOCHS
    tagger_learning_rate: float = tagger_mod.DEFAULT_LEARNING_RATE
    tagger_l2: float = tagger_mod.DEFAULT_L2
    tagger_batch_size: int = tagger_mod.DEFAULT_BATCH_SIZE
    base_dir: str = "."

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        obj.setdefault("base_dir", str(path.parent))
        return cls(**obj)

    def resolve(self, maybe_path: str | None) -> Path | None:
        if maybe_path is None:
            return None
        p = Path(maybe_path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> None:
        if self.format not in ("csv", "json", "markdown"):
            raise PipelineError(f"unknown report format {self.format!r}")
        if self.date_field not in ("received_date", "incident_date"):
            raise PipelineError(f"unknown date field {self.date_field!r}")
        for name in ("input", "annotations"):
            p = self.resolve(getattr(self, name))
            if p is None or not p.is_file():
                raise PipelineError(f"config {name} path not found: {p}")
        for name in ("lexicon", "category_lexicon"):
            p = self.resolve(getattr(self, name))
            if p is not None and not p.is_file():
                raise PipelineError(f"config {name} path not found: {p}")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class _StageWriter:
    """Collects declared outputs; commits .partial files only on success."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.outputs: list[Path] = []

    def path(self, name: str) -> Path:
        final = self.out_dir / name
        self.outputs.append(final)
        return final.with_name(final.name + ".partial")

    def commit(self) -> None:
        for final in self.outputs:
            partial = final.with_name(final.name + ".partial")
            os.replace(partial, final)


@dataclass
class _Context:
    config: PipelineConfig
    out_dir: Path

    def lexicon(self) -> list[lexicon_mod.KeywordGroup]:
        p = self.config.resolve(self.config.lexicon)
        return (lexicon_mod.read_lexicon_file(p) if p
                else lexicon_mod.default_lexicon())

    def category_lexicon(self) -> taxonomy_mod.CategoryLexicon:
        p = self.config.resolve(self.config.category_lexicon)
        return (taxonomy_mod.read_category_lexicon_file(p) if p
                else taxonomy_mod.default_category_lexicon())


def _stage_ingest(ctx: _Context, w: _StageWriter) -> list[Path]:
    cfg = ctx.config
    src = cfg.resolve(cfg.input)
    with open(src, "rb") as fh:
        results = list(ingest_mod.parse_complaints(
            fh, delimiter=cfg.delimiter, has_header=cfg.header,
            max_error_fraction=cfg.max_error_fraction))
    records, errors = ingest_mod.split_results(results)
    for err in errors:
        logger.warning("ingest: row %d: %s", err.row_index, err.message)
    records = ingest_mod.dedup_complaints(records)
    excluded = 0
    if cfg.date_start or cfg.date_end:
        if not (cfg.date_start and cfg.date_end):
            raise PipelineError("date_start and date_end must both be set",
                                stage="ingest")
        rng = ingest_mod.DateRange(date.fromisoformat(cfg.date_start),
                                   date.fromisoformat(cfg.date_end))
        records, excluded = ingest_mod.filter_by_date(records, rng,
                                                      cfg.date_field)
    logger.info("ingest: %d records, %d row errors, %d excluded by date",
                len(records), len(errors), excluded)
    ingest_mod.write_records(w.path("records.jsonl"), records)
    return [src]


def _stage_filter(ctx: _Context, w: _StageWriter) -> list[Path]:
    records_path = ctx.out_dir / "records.jsonl"
    records = ingest_mod.read_records(records_path)
    lex = ctx.lexicon()
    matches = list(lexicon_mod.match_stream(records, lex))
    with open(w.path("matches.jsonl"), "w", encoding="utf-8") as fh:
        for m in matches:
            fh.write(lexicon_mod.match_to_json(m) + "\n")
    adas = sum(1 for m in matches if m.is_adas)
    logger.info("filter: %d of %d records flagged", adas, len(matches))
    inputs = [records_path]
    lex_path = ctx.config.resolve(ctx.config.lexicon)
    if lex_path:
        inputs.append(lex_path)
    return inputs


def _stage_classify(ctx: _Context, w: _StageWriter) -> list[Path]:
    cfg = ctx.config
    records_path = ctx.out_dir / "records.jsonl"
    matches_path = ctx.out_dir / "matches.jsonl"
    records = ingest_mod.read_records(records_path)
    with open(matches_path, encoding="utf-8") as fh:
        matches = [lexicon_mod.match_from_json(line) for line in fh if line.strip()]
    flags = {m.complaint_id: m.is_adas for m in matches}
    labeled = [clf.LabeledExample(r.narrative, flags[r.complaint_id])
               for r in records]
    if cfg.negative_ratio:
        labeled = clf.subsample_negatives(labeled, cfg.negative_ratio, cfg.seed)
    model = clf.train_classifier(
        labeled, seed=cfg.seed, epochs=cfg.classifier_epochs,
        learning_rate=cfg.classifier_learning_rate, l2=cfg.classifier_l2,
        batch_size=cfg.classifier_batch_size,
        dimension=cfg.classifier_dimension)
    clf.save_classifier(model, w.path("classifier.json"))
    with open(w.path("predictions.jsonl"), "w", encoding="utf-8") as fh:
        for rec in records:
            prob, label = clf.predict(model, rec.narrative)
            fh.write(json.dumps(
                {"complaint_id": rec.complaint_id,
                 "label": "adas" if label else "non-adas",
                 "probability": prob},
                ensure_ascii=True, separators=(", ", ": ")) + "\n")
    return [records_path, matches_path]


def _stage_tag(ctx: _Context, w: _StageWriter) -> list[Path]:
    cfg = ctx.config
    records_path = ctx.out_dir / "records.jsonl"
    matches_path = ctx.out_dir / "matches.jsonl"
    annotations_path = cfg.resolve(cfg.annotations)
    records = ingest_mod.read_records(records_path)
    with open(matches_path, encoding="utf-8") as fh:
        adas_ids = {m.complaint_id
                    for m in (lexicon_mod.match_from_json(l)
                              for l in fh if l.strip())
                    if m.is_adas}
    targets = [r for r in records if r.complaint_id in adas_ids]
    token_lists = [corpus_mod.tokenize(r.narrative) for r in targets]
    inputs = [records_path, matches_path, annotations_path]
    if cfg.adapter:
        with protocol_mod.open_adapter(cfg.adapter) as client:
            tag_lists = client.tag_batch([t for t in token_lists if t])
    else:
        train = corpus_mod.read_annotation_file(annotations_path)
        model = tagger_mod.train_tagger(
            train, seed=cfg.seed, epochs=cfg.tagger_epochs,
            learning_rate=cfg.tagger_learning_rate, l2=cfg.tagger_l2,
            batch_size=cfg.tagger_batch_size)
        tagger_mod.save_tagger(model, w.path("tagger.json"))
        tag_lists = [tagger_mod.tag(model, t) for t in token_lists if t]
    tag_iter = iter(tag_lists)
    with open(w.path("tagged.jsonl"), "w", encoding="utf-8") as fh:
        for rec, tokens in zip(targets, token_lists):
            tags = list(next(tag_iter)) if tokens else []
            fh.write(json.dumps(
                {"complaint_id": rec.complaint_id,
                 "tokens": list(tokens), "tags": tags},
                ensure_ascii=True, separators=(", ", ": ")) + "\n")
    return inputs


def _stage_extract(ctx: _Context, w: _StageWriter) -> list[Path]:
    tagged_path = ctx.out_dir / "tagged.jsonl"
    matches_path = ctx.out_dir / "matches.jsonl"
    with open(matches_path, encoding="utf-8") as fh:
        categories = {m.complaint_id: m.adas_category
                      for m in (lexicon_mod.match_from_json(l)
                                for l in fh if l.strip())}
    with open(tagged_path, encoding="utf-8") as fh, \
            open(w.path("instances.jsonl"), "w", encoding="utf-8") as out:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if not obj["tokens"]:
                continue
            inst = tagger_mod.CauseEffectInstance.from_tags(
                obj["complaint_id"], obj["tokens"], obj["tags"],
                categories.get(obj["complaint_id"]))
            out.write(tagger_mod.instance_to_json(inst) + "\n")
    return [tagged_path, matches_path]


def _stage_categorize(ctx: _Context, w: _StageWriter) -> list[Path]:
    instances_path = ctx.out_dir / "instances.jsonl"
    lex = ctx.category_lexicon()
    with open(instances_path, encoding="utf-8") as fh, \
            open(w.path("categorized.jsonl"), "w", encoding="utf-8") as out:
        for line in fh:
            if not line.strip():
                continue
            inst = tagger_mod.instance_from_json(line)
            out.write(taxonomy_mod.categorized_to_json(
                taxonomy_mod.categorize_instance(inst, lex)) + "\n")
    inputs = [instances_path]
    lex_path = ctx.config.resolve(ctx.config.category_lexicon)
    if lex_path:
        inputs.append(lex_path)
    return inputs


_REPORT_EXT = {"csv": "csv", "json": "json", "markdown": "md"}


def _stage_report(ctx: _Context, w: _StageWriter) -> list[Path]:
    cfg = ctx.config
    categorized_path = ctx.out_dir / "categorized.jsonl"
    with open(categorized_path, encoding="utf-8") as fh:
        instances = [taxonomy_mod.categorized_from_json(l)
                     for l in fh if l.strip()]
    if instances:
        report = taxonomy_mod.aggregate(instances, len(instances))
    else:
        report = taxonomy_mod.TaxonomyReport(
            denominator=1, pairs=(), overall_causes=(), overall_effects=())
    rendered = taxonomy_mod.render_report(report, cfg.format)
    out = w.path(f"report.{_REPORT_EXT[cfg.format]}")
    with open(out, "wb") as fh:
        fh.write(rendered)
    return [categorized_path]


_STAGE_FUNCS: dict[str, Callable[[_Context, _StageWriter], list[Path]]] = {
    "ingest": _stage_ingest,
    "filter": _stage_filter,
    "classify": _stage_classify,
    "tag": _stage_tag,
    "extract": _stage_extract,
    "categorize": _stage_categorize,
    "report": _stage_report,
}


def run_pipeline(config: PipelineConfig,
                 stages: list[str] | None = None) -> list[dict]:
    """Run the requested stages in order; returns the manifest entries."""
    config.validate()
    selected = list(STAGES) if stages is None else list(stages)
    unknown = [s for s in selected if s not in STAGES]
    if unknown:
        raise PipelineError(f"unknown stages: {unknown}")
    selected = [s for s in STAGES if s in selected]
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = _Context(config, out_dir)
    manifest: list[dict] = []
    for name in selected:
        writer = _StageWriter(out_dir)
        try:
            inputs = _STAGE_FUNCS[name](ctx, writer)
        except (PipelineError, protocol_mod.ProtocolError):
            raise
        except Exception as exc:
            raise PipelineError(f"stage {name} failed: {exc}",
                                stage=name) from exc
        writer.commit()
        entry = {
            "stage": name,
            "inputs": {p.name: file_digest(p) for p in inputs},
            "outputs": {p.name: file_digest(p) for p in writer.outputs},
            "seed": config.seed,
        }
        manifest.append(entry)
        logger.info("stage %s done (%d outputs)", name, len(writer.outputs))
    manifest_path = out_dir / "manifest.jsonl"
    mode = "w" if (stages is None or selected == list(STAGES)) else "a"
    with open(manifest_path, mode, encoding="utf-8") as fh:
        for entry in manifest:
            fh.write(json.dumps(entry, ensure_ascii=True,
                                separators=(", ", ": ")) + "\n")
    return manifest
