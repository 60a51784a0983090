import json
import re

import pytest

from notetopics.cli import main
from notetopics.corpus import load_notes
from notetopics.lexicon import KeywordLexicon
from notetopics.synthetic import clinical_demo_corpus
from pipeline_helpers import run, run_pipeline, tree_digest

LONG = "Patient reports feeling isolated from family and friends since the diagnosis last year."


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    return clinical_demo_corpus(tmp_path_factory.mktemp("demo"), n_notes=120, n_patients=30, seed=2)


@pytest.fixture(scope="module")
def pipeline(demo, tmp_path_factory):
    return run_pipeline(demo, tmp_path_factory.mktemp("run"))


def ten_notes(path):
    texts = [f"{LONG} Visit number {i}." for i in range(7)]
    texts += [texts[0], texts[1], "Too short."]
    rows = [{"note_id": f"n{i}", "patient_id": f"p{i % 3}", "text": t} for i, t in enumerate(texts)]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def test_ingest_counts_and_idempotence(tmp_path):
    notes = ten_notes(tmp_path / "notes.jsonl")
    run("ingest", "--notes", notes, "--out", tmp_path / "a")
    stats = json.loads((tmp_path / "a" / "ingest_stats.json").read_text())
    assert (stats["kept"], stats["dup"], stats["short"]) == (7, 2, 1)
    run("ingest", "--notes", notes, "--out", tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    # a cleaned corpus passes through unchanged
    run("ingest", "--notes", tmp_path / "a" / "notes.clean.jsonl", "--out", tmp_path / "c")
    assert (tmp_path / "a" / "notes.clean.jsonl").read_bytes() == (tmp_path / "c" / "notes.clean.jsonl").read_bytes()


def test_ingest_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["ingest", "--notes", str(empty), "--out", str(tmp_path / "o")]) == 2
    assert "no notes loaded" in capsys.readouterr().err


def test_usage_errors_exit_one(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["ingest", "--out", str(tmp_path)])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_lexicon_all_rejected_is_converged(demo, tmp_path, capsys):
    run("lexicon", "--seeds", demo["seeds"], "--embeddings", demo["embeddings"],
        "--auto-accept", "2", "--out", tmp_path)
    assert "converged" in capsys.readouterr().out
    assert KeywordLexicon.load(tmp_path / "lexicon.csv").accepted_terms() == KeywordLexicon.load(demo["seeds"]).accepted_terms()


def test_lexicon_decisions_file(demo, tmp_path, capsys):
    run("lexicon", "--seeds", demo["seeds"], "--embeddings", demo["embeddings"],
        "--auto-accept", "2", "--out", tmp_path / "probe")
    proposed = [l.split(",")[1] for l in (tmp_path / "probe" / "proposals.csv").read_text().splitlines()[1:]]
    dec = tmp_path / "dec.csv"
    dec.write_text("term,decision\n" + "".join(
        f"{t},{'accept' if i == 0 else 'reject'}\n" for i, t in enumerate(proposed)))
    run("lexicon", "--seeds", demo["seeds"], "--embeddings", demo["embeddings"],
        "--decisions", dec, "--out", tmp_path / "one")
    grown = KeywordLexicon.load(tmp_path / "one" / "lexicon.csv")
    assert len(grown) == len(KeywordLexicon.load(demo["seeds"])) + 1
    assert proposed[0] in grown.accepted_terms()


def test_lexicon_missing_embeddings(demo, tmp_path, capsys):
    missing = tmp_path / "nope.vec"
    assert main(["lexicon", "--embeddings", str(missing), "--auto-accept", "0.5", "--out", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_prepare_strategies_against_scan(pipeline, demo, tmp_path):
    clean = pipeline["ingest"] / "notes.clean.jsonl"
    lex = pipeline["lexicon"] / "lexicon.csv"
    for s in ("s1", "s2", "s3"):
        run("prepare", "--notes", clean, "--lexicon", lex, "--strategy", s, "--out", tmp_path / s)
    stats = {s: json.loads((tmp_path / s / "prepare_stats.json").read_text()) for s in ("s1", "s2", "s3")}
    notes = load_notes(clean).notes
    assert stats["s1"]["units"] == len(notes)
    assert stats["s2"]["distinct_notes"] >= stats["s3"]["distinct_notes"]
    assert stats["s2"]["units"] == stats["s2"]["distinct_notes"]
    assert stats["s1"]["distinct_notes"] >= stats["s2"]["distinct_notes"]

    # the demo notes contain no abbreviations, so a plain regex split is exact
    terms = KeywordLexicon.load(lex).accepted_terms()
    pattern = re.compile(r"\b(?:" + "|".join(map(re.escape, terms)) + r")\b", re.I)
    hits = sum(bool(pattern.search(s)) for n in notes for s in re.split(r"(?<=[.!?])\s+", n.text))
    assert stats["s3"]["units"] >= hits


def test_pipeline_outputs(pipeline):
    sweep = json.loads((pipeline["sweep"] / "sweep.json").read_text())
    K = sweep["selected_k"]
    assert [e["K"] for e in sweep["evaluations"]] == [3, 4, 5]
    lines = (pipeline["analyze"] / "top_words.tsv").read_text().splitlines()
    assert len(lines) == K + 1
    heat = (pipeline["analyze"] / "heatmap_sex.tsv").read_text().splitlines()
    assert heat[0].split("\t")[1:3] == ["female", "male"] and len(heat) == K + 1
    manifest = json.loads((pipeline["train"] / "manifest.json").read_text())
    assert manifest["subcommand"] == "train" and "model.lda" in manifest["outputs"]


def test_reruns_are_byte_identical(demo, pipeline, tmp_path):
    again = run_pipeline(demo, tmp_path)
    root_a, root_b = pipeline["ingest"].parent, again["ingest"].parent
    assert tree_digest(root_a) == tree_digest(root_b)


def test_verify_manifest_pass_and_tamper(pipeline, tmp_path, capsys):
    for step in ("ingest", "prepare", "train", "analyze"):
        assert main(["verify-manifest", str(pipeline[step])]) == 0
    # tampering with a recorded output hash is detected
    import shutil
    copy = tmp_path / "train"
    shutil.copytree(pipeline["train"], copy)
    m = json.loads((copy / "manifest.json").read_text())
    m["outputs"]["phi.tsv"] = "0" * 64
    (copy / "manifest.json").write_text(json.dumps(m))
    assert main(["verify-manifest", str(copy)]) == 3
    assert "phi.tsv" in capsys.readouterr().err


def test_train_needs_k(pipeline, tmp_path):
    assert main(["train", "--dtm", str(pipeline["prepare"] / "dtm.txt"),
                 "--vocab", str(pipeline["prepare"] / "vocab.tsv"), "--out", str(tmp_path)]) == 1
