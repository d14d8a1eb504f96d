"""End-to-end CLI behavior: stage chaining, exit codes, converters."""

import json
import shlex
import sys

import pytest

from cemine.corpus import read_annotation_file
from cemine.taxonomy import report_from_dict


def jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()
            if line.strip()]


def test_stage_chain_on_demo_data(run_cli, demo_dir, tmp_path):
    out = str(tmp_path)
    code, _, err = run_cli(
        "ingest", "--in", str(demo_dir / "complaints.tsv"), "--out", out,
        "--date-start", "2019-01-01", "--date-end", "2021-12-31")
    assert code == 0, err
    records = jsonl(tmp_path / "records.jsonl")
    assert len(records) == 60

    code, _, err = run_cli("filter", "--out", out)
    assert code == 0, err
    matches = jsonl(tmp_path / "matches.jsonl")
    assert len(matches) == 60
    flagged = [m for m in matches if m["is_adas"]]
    assert len(flagged) == 30

    code, _, err = run_cli(
        "train-tagger", "--in", str(demo_dir / "annotations.tsv"),
        "--out", out, "--epochs", "4")
    assert code == 0, err
    assert (tmp_path / "tagger.json").is_file()

    code, _, err = run_cli(
        "tag", "--out", out, "--model", str(tmp_path / "tagger.json"),
        "--matches", str(tmp_path / "matches.jsonl"))
    assert code == 0, err
    tagged = jsonl(tmp_path / "tagged.jsonl")
    assert len(tagged) == 30
    assert all(len(t["tokens"]) == len(t["tags"]) for t in tagged)

    code, _, err = run_cli("extract", "--out", out)
    assert code == 0, err
    instances = jsonl(tmp_path / "instances.jsonl")
    assert len(instances) == 30
    assert all(inst["adas_category"] for inst in instances)

    code, _, err = run_cli("categorize", "--out", out)
    assert code == 0, err
    categorized = jsonl(tmp_path / "categorized.jsonl")
    assert len(categorized) == 30

    code, _, err = run_cli("report", "--out", out, "--format", "json")
    assert code == 0, err
    report = report_from_dict(json.loads(
        (tmp_path / "report.json").read_text()))
    assert report.denominator == 30
    assert report.overall_causes and report.overall_effects


def test_report_denominator_and_truncation(run_cli, demo_dir, tmp_path):
    out = str(tmp_path)
    categorized = tmp_path / "categorized.jsonl"
    rows = [
        {"complaint_id": str(i), "adas_category": "Autopilot",
         "cause_categories": [f"cause_{i % 4}"],
         "effect_categories": ["crash"]}
        for i in range(10)
    ]
    categorized.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    code, _, err = run_cli(
        "report", "--out", out, "--format", "json",
        "--denominator", "100", "--top-causes", "2", "--top-pairs", "1")
    assert code == 0, err
    report = report_from_dict(json.loads(
        (tmp_path / "report.json").read_text()))
    assert report.denominator == 100
    assert len(report.overall_causes) == 2
    assert len(report.pairs) == 1
    # 10 crash effects over the forced denominator of 100
    assert report.overall_effects[0].percentage == 10.0

    code, _, err = run_cli("report", "--out", out, "--format", "csv")
    assert code == 0, err
    first = (tmp_path / "report.csv").read_text().splitlines()[0]
    assert first == "table,rank,item,count,percentage"


def test_exit_codes(run_cli, demo_dir, tmp_path):
    out = str(tmp_path)

    code, _, err = run_cli("frobnicate")
    assert code == 1 and "invalid choice" in err

    code, _, err = run_cli("ingest", "--out", out)
    assert code == 1 and "--in" in err

    code, _, err = run_cli(
        "ingest", "--in", str(demo_dir / "complaints.tsv"), "--out", out,
        "--date-start", "not-a-date", "--date-end", "2021-12-31")
    assert code == 1

    # no records.jsonl staged yet: data error
    code, _, err = run_cli("filter", "--out", str(tmp_path / "empty"))
    assert code == 2 and "input not found" in err

    code, _, err = run_cli(
        "ingest", "--in", str(demo_dir / "complaints.tsv"), "--out", out)
    assert code == 0

    code, _, err = run_cli("tag", "--out", out)
    assert code == 1 and "exactly one of" in err
    code, _, err = run_cli(
        "tag", "--out", out, "--model", "m.json", "--adapter", "cmd")
    assert code == 1 and "exactly one of" in err

    dead = f"{shlex.quote(sys.executable)} -c pass"
    code, _, err = run_cli("tag", "--out", out, "--adapter", dead)
    assert code == 3 and "protocol error" in err


def test_synth_corpus_template(run_cli, tmp_path):
    out = str(tmp_path)
    code, _, err = run_cli(
        "synth-corpus", "--kind", "template", "-n", "12", "--out", out,
        "--seed", "3")
    assert code == 0, err
    sentences = read_annotation_file(tmp_path / "synthetic.tsv")
    assert len(sentences) == 12
    assert all(set(s.tags) <= {"C", "E", "O"} for s in sentences)
    # same seed, same corpus
    code, _, _ = run_cli(
        "synth-corpus", "--kind", "template", "-n", "12",
        "--out-file", str(tmp_path / "again.tsv"), "--out", out,
        "--seed", "3")
    assert code == 0
    assert (tmp_path / "again.tsv").read_text() == \
        (tmp_path / "synthetic.tsv").read_text()


def test_synth_corpus_labeled(run_cli, tmp_path):
    out = str(tmp_path)
    code, _, err = run_cli(
        "synth-corpus", "--kind", "labeled", "--positives", "8",
        "--negatives", "9", "--out", out)
    assert code == 0, err
    rows = jsonl(tmp_path / "labeled.jsonl")
    assert len(rows) == 17
    labels = [r["label"] for r in rows]
    assert labels.count("adas") == 8 and labels.count("non-adas") == 9
    assert all(r["text"].strip() for r in rows)


@pytest.fixture
def labeled_corpus(run_cli, tmp_path):
    out = str(tmp_path)
    code, _, err = run_cli(
        "synth-corpus", "--kind", "labeled", "--positives", "30",
        "--negatives", "30", "--out", out, "--seed", "11")
    assert code == 0, err
    return tmp_path / "labeled.jsonl"


def test_train_classifier_with_folds(run_cli, tmp_path, labeled_corpus):
    out = str(tmp_path)
    code, _, err = run_cli(
        "train-classifier", "--in", str(labeled_corpus), "--out", out,
        "--folds", "3", "--dimension", "4096", "--epochs", "4",
        "--seed", "11")
    assert code == 0, err
    assert (tmp_path / "classifier.json").is_file()
    result = json.loads((tmp_path / "classifier_eval.json").read_text())
    assert result["k"] == 3 and result["seed"] == 11
    assert len(result["folds"]) == 3
    # synthetic vocabularies are disjoint, so this should be easy
    assert result["pooled"]["f1"] >= 0.9

    code, _, err = run_cli(
        "classify", "--out", out, "--model", str(tmp_path / "classifier.json"))
    assert code == 2  # no records.jsonl in this out dir yet


def test_eval_classifier_with_ratio(run_cli, tmp_path, labeled_corpus):
    out = str(tmp_path)
    code, _, err = run_cli(
        "eval-classifier", "--in", str(labeled_corpus), "--out", out,
        "--folds", "3", "--ratio", "1", "--dimension", "4096",
        "--epochs", "4", "--seed", "11",
        "--report", str(tmp_path / "eval.json"))
    assert code == 0, err
    result = json.loads((tmp_path / "eval.json").read_text())
    assert result["dataset_size"] == 60  # 30 positives + 30 sampled negatives
    assert result["pooled"]["f1"] >= 0.9


def test_classify_via_model_on_records(run_cli, demo_dir, tmp_path,
                                       quick_classifier_path):
    out = str(tmp_path)
    code, _, _ = run_cli(
        "ingest", "--in", str(demo_dir / "complaints.tsv"), "--out", out)
    assert code == 0
    code, _, err = run_cli(
        "classify", "--out", out, "--model", str(quick_classifier_path))
    assert code == 0, err
    predictions = jsonl(tmp_path / "predictions.jsonl")
    assert len(predictions) == 60
    for row in predictions:
        assert row["label"] in ("adas", "non-adas")
        assert 0.0 <= row["probability"] <= 1.0


def test_eval_tagger_reports_fold_metrics(run_cli, demo_dir, tmp_path):
    out = str(tmp_path)
    code, _, err = run_cli(
        "eval-tagger", "--in", str(demo_dir / "annotations.tsv"),
        "--out", out, "--folds", "2", "--epochs", "2", "--seed", "3")
    assert code == 0, err
    result = json.loads((tmp_path / "tagger_eval.json").read_text())
    assert result["k"] == 2 and result["external"] is False
    assert len(result["folds"]) == 2
    assert "mean_evaluation_loss" in result
    assert result["mean_evaluation_loss"] > 0
    pooled = result["pooled"]
    assert set(pooled["per_label"]) == {"C", "E", "O"}
    assert 0.0 <= pooled["macro"]["f1"] <= 1.0


def _write_annotations(path, tag_rows):
    lines = []
    for sid, pairs in tag_rows:
        lines.append(f"# id: {sid}")
        lines.extend(f"{tok}\t{tag}" for tok, tag in pairs)
        lines.append("")
    path.write_text("\n".join(lines) + "\n")


def test_agreement_scores(run_cli, demo_dir, tmp_path):
    same = str(demo_dir / "annotations.tsv")
    code, out, err = run_cli("agreement", same, same)
    assert code == 0, err
    result = json.loads(out)
    assert result == {"agreement": 1.0, "raters": 2, "pairs": 1,
                      "level": "token"}

    a = tmp_path / "a.tsv"
    b = tmp_path / "b.tsv"
    _write_annotations(a, [("s1", [("x", "C"), ("y", "E"), ("z", "O")])])
    _write_annotations(b, [("s1", [("x", "C"), ("y", "E"), ("z", "E")])])
    code, out, _ = run_cli("agreement", str(a), str(b))
    assert code == 0
    assert json.loads(out)["agreement"] == pytest.approx(2 / 3)

    code, _, err = run_cli("agreement", str(a))
    assert code == 1 and "at least two" in err


def test_convert_dmv(run_cli, tmp_path):
    src = tmp_path / "disengagements.csv"
    src.write_text(
        "Manufacturer,Description of Facts Causing Disengagement\n"
        'Acme,"The car drifted toward the barrier."\n'
        "Acme,\n"
        'Acme,"Sensor dropout in heavy rain"\n'
    )
    out = str(tmp_path)
    code, _, err = run_cli("convert-dmv", "--in", str(src), "--out", out)
    assert code == 0, err
    sentences = read_annotation_file(tmp_path / "dmv.tsv")
    assert [s.sentence_id for s in sentences] == ["dmv-1", "dmv-3"]
    assert all(s.source == "dmv" for s in sentences)
    assert all(set(s.tags) == {"O"} for s in sentences)
    assert sentences[0].tokens[0] == "the"

    bad = tmp_path / "headerless.csv"
    bad.write_text("Maker,Notes\nAcme,something\n")
    code, _, err = run_cli("convert-dmv", "--in", str(bad), "--out", out)
    assert code == 2 and "not in CSV header" in err


SEMEVAL_SAMPLE = '''1\t"The <e1>storm</e1> caused extensive <e2>flooding</e2> in town."
Cause-Effect(e1,e2)
Comment:

2\t"The <e1>panic</e1> resulted from the sudden <e2>alarm</e2> nearby."
Cause-Effect(e2,e1)
Comment: reversed direction

3\t"He moved the <e1>chair</e1> into the <e2>kitchen</e2> yesterday."
Entity-Destination(e1,e2)
Comment:
'''


def test_convert_semeval(run_cli, tmp_path):
    src = tmp_path / "relations.txt"
    src.write_text(SEMEVAL_SAMPLE)
    out = str(tmp_path)
    code, _, err = run_cli("convert-semeval", "--in", str(src), "--out", out)
    assert code == 0, err
    sentences = read_annotation_file(tmp_path / "semeval.tsv")
    assert [s.sentence_id for s in sentences] == ["semeval-1", "semeval-2"]
    assert all(s.source == "semeval" for s in sentences)

    first = dict(zip(sentences[0].tokens, sentences[0].tags))
    assert first["storm"] == "C" and first["flooding"] == "E"
    # e2,e1 swaps the roles
    second = dict(zip(sentences[1].tokens, sentences[1].tags))
    assert second["panic"] == "E" and second["alarm"] == "C"

    broken = tmp_path / "broken.txt"
    broken.write_text("99\tno quotes or markers here\n")
    code, _, err = run_cli("convert-semeval", "--in", str(broken), "--out", out)
    assert code == 2 and "unparseable" in err


def test_run_subcommand_with_overrides(run_cli, demo_dir, tmp_path):
    out = tmp_path / "pipe"
    code, _, err = run_cli(
        "run", "--config", str(demo_dir / "config.json"), "--out", str(out))
    assert code == 0, err
    manifest = out / "manifest.jsonl"
    assert len(manifest.read_text().splitlines()) == 7
    assert (out / "report.json").is_file()

    code, _, err = run_cli(
        "run", "--config", str(demo_dir / "config.json"), "--out", str(out),
        "--stages", "report")
    assert code == 0, err
    lines = manifest.read_text().splitlines()
    assert len(lines) == 8
    assert json.loads(lines[-1])["stage"] == "report"

    code, _, err = run_cli("run", "--out", str(out))
    assert code == 1 and "needs --config" in err

    code, _, err = run_cli(
        "run", "--config", str(demo_dir / "config.json"), "--out", str(out),
        "--stages", "report,polish")
    assert code == 2 and "unknown stages" in err


def test_adapter_check_conformance(run_cli, ref_adapter_cmd,
                                   ref_adapter_classify_cmd):
    code, out, err = run_cli("adapter-check", "--adapter", ref_adapter_cmd)
    assert code == 0, err
    verdict = json.loads(out)
    assert verdict["conformant"] is True and verdict["checks"] == 3
    assert "tag-batch: ok" in err and "empty-line: ok" in err

    code, out, err = run_cli(
        "adapter-check", "--adapter", ref_adapter_classify_cmd, "--classify")
    assert code == 0, err
    assert json.loads(out)["checks"] == 4
    assert "classify: ok" in err

    dead = f"{shlex.quote(sys.executable)} -c pass"
    code, _, err = run_cli("adapter-check", "--adapter", dead)
    assert code == 3
