"""Command-line pipeline: ingest -> lexicon -> prepare -> sweep/train -> analyze.

Every subcommand writes its outputs plus ``manifest.json`` into ``--out``.
``verify-manifest`` replays a run from its manifest in a scratch directory
and compares output hashes.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 invariant violation or
non-reproducible output.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path
from typing import Callable

from . import __version__
from .analysis import (
    DEFAULT_AGE_EDGES, heatmap_export, load_labels, stratify, topic_reports,
    wordcloud_export, write_top_words,
)
from .corpus import dedup_and_filter, load_notes, load_patients, write_notes
from .errors import DataError, InvariantError
from .lda import LdaConfig, export_matrix_tsv, load_model, phi, save_model, theta, train
from .lexicon import (
    DocumentUnit, KeywordLexicon, apply_strategy, interactive_review, load_decisions,
    load_embeddings, propose_candidates, resolve_strategy, sample_matching_notes,
    save_decisions, snowball_review,
)
from .manifest import build_manifest, hash_outputs, now_utc, read_manifest, write_manifest
from .metrics import sweep_k
from .textprep import (
    DocTermMatrix, Vocabulary, build_vocabulary, dump_streams, load_stopwords,
    to_doc_term_matrix, token_stream,
)

logger = logging.getLogger("notetopics")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(obj, path: Path) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return path


def _abs(p: str | None) -> str | None:
    return str(Path(p).resolve()) if p else None


def _stopwords(params: dict):
    return load_stopwords(params.get("stopwords"))


# ------------------------------------------------------------------ handlers
#
# Each handler takes the resolved parameter dict and an output directory and
# returns (inputs, outputs, seeds, message). Handlers must be pure functions
# of their parameters and input files.


def run_ingest(p: dict, out: Path):
    loaded = load_notes(p["notes"])
    if not loaded.notes:
        raise DataError("no notes loaded")
    kept, stats = dedup_and_filter(loaded.notes, p["min_chars"])
    notes_out = out / "notes.clean.jsonl"
    write_notes(kept, notes_out)
    summary = {
        "loaded": len(loaded.notes), "skipped_malformed": loaded.skipped,
        "kept": stats.kept, "dup": stats.duplicates, "short": stats.short,
    }
    stats_out = _write_json(summary, out / "ingest_stats.json")
    msg = f"kept {stats.kept} of {len(loaded.notes)} notes ({stats.duplicates} duplicate, {stats.short} short)"
    return {"notes": p["notes"]}, [notes_out, stats_out], [], msg


def run_lexicon(p: dict, out: Path):
    inputs = {"embeddings": p["embeddings"]}
    if p.get("seeds"):
        inputs["seeds"] = p["seeds"]
    if p.get("decisions"):
        inputs["decisions"] = p["decisions"]
    if p.get("stopwords"):
        inputs["stopwords"] = p["stopwords"]
    lexicon = KeywordLexicon.load(p.get("seeds"))
    embeddings = load_embeddings(p["embeddings"])
    stopwords = _stopwords(p)
    file_decisions = load_decisions(p["decisions"]) if p.get("decisions") else {}
    sample = []
    if p.get("notes"):
        inputs["notes"] = p["notes"]
        if p.get("interactive"):
            sample = sample_matching_notes(load_notes(p["notes"]).notes, lexicon, p["sample_size"], p["seed"])

    all_proposals, used = [], {}
    additions = list(p.get("add") or [])
    converged = False
    rounds = 0
    while rounds < p["max_rounds"] and not converged:
        rounds += 1
        proposals = propose_candidates(lexicon, embeddings, p["top_n"], p["min_cosine"], stopwords)
        if p.get("interactive"):
            decisions, extra = interactive_review(proposals, sample)
            additions += extra
        else:
            decisions = {}
            for prop in proposals:
                if prop.term in file_decisions:
                    decisions[prop.term] = file_decisions[prop.term]
                elif p.get("auto_accept") is not None:
                    decisions[prop.term] = "accept" if prop.cosine >= p["auto_accept"] else "reject"
            if rounds == 1 and p.get("decisions"):
                stale = sorted(set(file_decisions) - {x.term for x in proposals})
                if stale:
                    raise DataError("decision for term(s) that were not proposed: " + ", ".join(stale))
        lexicon, converged = snowball_review(lexicon, proposals, decisions, additions)
        additions = []
        all_proposals += [(rounds, x) for x in proposals]
        used.update(decisions)
        if p.get("interactive"):
            break

    lex_out = out / "lexicon.csv"
    lexicon.save(lex_out)
    prop_out = out / "proposals.csv"
    with prop_out.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("round,term,nearest_seed,cosine,decision\n")
        for r, x in all_proposals:
            fh.write(f"{r},{x.term},{x.nearest_seed},{x.cosine!r},{used.get(x.term, '')}\n")
    dec_out = out / "decisions_used.csv"
    save_decisions(used, dec_out)
    if p.get("interactive"):
        # replays read back what the reviewer typed
        p["interactive"] = False
        p["decisions"] = str(dec_out)
        p["add"] = [e.term for e in lexicon.entries if e.provenance == "reviewer_added"]
    msg = ("converged" if converged else "not converged") + f" after {rounds} round(s); lexicon has {len(lexicon)} terms"
    return inputs, [lex_out, prop_out, dec_out], [], msg


def run_prepare(p: dict, out: Path):
    inputs = {"notes": p["notes"]}
    strategy = resolve_strategy(p["strategy"])
    if p.get("lexicon"):
        inputs["lexicon"] = p["lexicon"]
    if p.get("stopwords"):
        inputs["stopwords"] = p["stopwords"]
    if strategy != "S1_all_notes" and not p.get("lexicon"):
        raise UsageError(f"strategy {p['strategy']} needs --lexicon")
    notes = load_notes(p["notes"]).notes
    lexicon = KeywordLexicon.load(p["lexicon"]) if p.get("lexicon") else KeywordLexicon()
    units = apply_strategy(notes, lexicon, strategy)
    if not units:
        raise DataError(f"strategy {strategy} produced no document units")
    stopwords = _stopwords(p)
    streams = [token_stream(u.unit_id, u.text, stopwords) for u in units]
    vocab = build_vocabulary(streams, p["min_df"], p["max_df"])
    dtm = to_doc_term_matrix(streams, vocab)

    outputs = [out / "units.jsonl", out / "vocab.tsv", out / "dtm.txt"]
    with outputs[0].open("w", encoding="utf-8", newline="\n") as fh:
        for u in units:
            fh.write(json.dumps(u.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
    vocab.save(outputs[1])
    dtm.save(outputs[2])
    if p.get("dump_tokens"):
        outputs.append(out / "tokens.jsonl")
        dump_streams(streams, outputs[-1])
    stats = {
        "strategy": strategy, "notes": len(notes), "units": len(units),
        "units_in_matrix": dtm.num_docs, "dropped_empty_units": len(units) - dtm.num_docs,
        "distinct_notes": len({u.note_id for u in units}), "vocab_size": len(vocab),
        "total_tokens": dtm.total_tokens,
    }
    outputs.append(_write_json(stats, out / "prepare_stats.json"))
    msg = f"{strategy}: {len(units)} units, {dtm.num_docs} in matrix, vocabulary {len(vocab)}"
    return inputs, outputs, [], msg


def _base_config(p: dict, K: int, seed: int | None = None) -> LdaConfig:
    return LdaConfig(
        K=K, alpha=p.get("alpha"), beta=p["beta"], passes=p["passes"],
        burn_in=p.get("burn_in", 0), seed=p["seed"] if seed is None else seed,
        average=bool(p.get("average")),
    )


def run_sweep(p: dict, out: Path):
    dtm = DocTermMatrix.load(p["dtm"])
    vocab = Vocabulary.load(p["vocab"])
    if dtm.vocab_size != len(vocab):
        raise DataError("matrix and vocabulary sizes disagree")
    report, models = sweep_k(
        dtm, p["k_min"], p["k_max"], _base_config(p, max(p["k_min"], 2)),
        alpha=p.get("alpha"), vocab_hash=vocab.content_hash(), workers=p["workers"],
        similarity_top_n=p["similarity_top_n"], diversity_top_n=p["diversity_top_n"],
    )
    outputs = [out / "sweep.tsv", out / "sweep.json"]
    report.save(*outputs)
    if p.get("save_models"):
        (out / "models").mkdir(exist_ok=True)
        for K, m in sorted(models.items()):
            path = out / "models" / f"model_K{K}.lda"
            save_model(m, path)
            outputs.append(path)
    seeds = [ev.seed for ev in report.evaluations]
    return {"dtm": p["dtm"], "vocab": p["vocab"]}, outputs, seeds, f"selected K={report.selected_k}"


def run_train(p: dict, out: Path):
    dtm = DocTermMatrix.load(p["dtm"])
    vocab = Vocabulary.load(p["vocab"])
    K = p["k"]
    if K is None and p.get("sweep"):
        K = json.loads(Path(p["sweep"]).read_text(encoding="utf-8"))["selected_k"]
    if K is None:
        raise UsageError("train needs --k or --sweep")
    model = train(dtm, _base_config(p, K), vocab_hash=vocab.content_hash(), check_invariants=p.get("check", False))
    outputs = [out / "model.lda", out / "phi.tsv", out / "theta.tsv"]
    save_model(model, outputs[0])
    export_matrix_tsv(phi(model), range(K), vocab.terms, outputs[1], corner="topic_id")
    export_matrix_tsv(theta(model), dtm.unit_ids, [f"topic_{k}" for k in range(K)], outputs[2], corner="unit_id")
    inputs = {"dtm": p["dtm"], "vocab": p["vocab"]}
    if p.get("sweep"):
        inputs["sweep"] = p["sweep"]
    return inputs, outputs, [model.config.seed], f"trained K={K} for {model.config.passes} passes"


def run_analyze(p: dict, out: Path):
    vocab = Vocabulary.load(p["vocab"])
    model = load_model(p["model"], expected_vocab_hash=vocab.content_hash())
    inputs = {"model": p["model"], "vocab": p["vocab"]}
    labels = None
    if p.get("labels"):
        inputs["labels"] = p["labels"]
        labels = load_labels(p["labels"])
    ph = phi(model)
    reports = topic_reports(ph, vocab.terms, p["top_n"], labels)
    outputs = [out / "top_words.tsv", out / "top_words.json", out / "wordcloud.csv"]
    write_top_words(reports, outputs[0], outputs[1])
    wordcloud_export(ph, vocab.terms, outputs[2], p["top_n"])

    if p.get("demographics"):
        for key in ("dtm", "units"):
            if not p.get(key):
                raise UsageError(f"stratified analysis needs --{key}")
        inputs.update(demographics=p["demographics"], dtm=p["dtm"], units=p["units"])
        dtm = DocTermMatrix.load(p["dtm"])
        if dtm.num_docs != model.num_docs:
            raise DataError(f"model has {model.num_docs} documents but the matrix has {dtm.num_docs}")
        unit_patient = {}
        with Path(p["units"]).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    u = DocumentUnit.from_json(json.loads(line))
                    unit_patient[u.unit_id] = u.patient_id
        missing = [uid for uid in dtm.unit_ids if uid not in unit_patient]
        if missing:
            raise DataError(f"{len(missing)} matrix unit(s) missing from the units file, e.g. {missing[0]}")
        patients = load_patients(p["demographics"])
        th = theta(model)
        axes = ["sex", "age"] if p["axis"] == "both" else [p["axis"]]
        groups_json = {}
        for axis in axes:
            groups = stratify(
                th, [unit_patient[u] for u in dtm.unit_ids], patients, axis,
                age_edges=DEFAULT_AGE_EDGES, reference_year=p.get("reference_year"),
                weighting=p["weighting"],
            )
            path = out / f"heatmap_{axis}.tsv"
            heatmap_export(groups, path, labels)
            outputs.append(path)
            groups_json[axis] = [
                {"group": g.key, "unit_count": g.unit_count, "patient_count": g.patient_count,
                 "mean_theta": g.mean_theta.tolist()}
                for g in groups
            ]
        outputs.append(_write_json(groups_json, out / "groups.json"))
    return inputs, outputs, [model.config.seed], f"wrote {len(outputs)} analysis files for K={model.K}"


HANDLERS: dict[str, Callable] = {
    "ingest": run_ingest,
    "lexicon": run_lexicon,
    "prepare": run_prepare,
    "sweep": run_sweep,
    "train": run_train,
    "analyze": run_analyze,
}

_PATH_PARAMS = {
    "notes", "embeddings", "seeds", "decisions", "stopwords", "lexicon", "dtm", "vocab",
    "model", "labels", "demographics", "units", "sweep",
}


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="notetopics", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", required=True, help="output directory")
        return sp

    sp = cmd("ingest", "load, deduplicate and length-filter a notes file")
    sp.add_argument("--notes", required=True, help="JSON-lines notes file")
    sp.add_argument("--min-chars", type=int, default=50)

    sp = cmd("lexicon", "expand the keyword lexicon from embedding neighbors")
    sp.add_argument("--seeds", help="seed lexicon (CSV or word-per-line); default: bundled list")
    sp.add_argument("--embeddings", required=True, help="word-vector text file")
    sp.add_argument("--top-n", type=int, default=10, help="neighbors proposed per lexicon term")
    sp.add_argument("--min-cosine", type=float, default=0.5)
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--interactive", action="store_true", help="review candidates at the terminal")
    mode.add_argument("--decisions", help="CSV term,decision (accept|reject)")
    sp.add_argument("--auto-accept", type=float, help="accept undecided candidates with cosine >= this")
    sp.add_argument("--add", action="append", default=[], metavar="TERM", help="reviewer-added keyword")
    sp.add_argument("--max-rounds", type=int, default=1)
    sp.add_argument("--notes", help="notes to sample for reviewer context")
    sp.add_argument("--sample-size", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--stopwords")

    sp = cmd("prepare", "apply a filtering strategy and build the document-term matrix")
    sp.add_argument("--notes", required=True, help="cleaned notes from ingest")
    sp.add_argument("--lexicon", help="lexicon CSV (required for s2/s3)")
    sp.add_argument("--strategy", required=True, choices=["s1", "s2", "s3"])
    sp.add_argument("--min-df", type=int, default=2)
    sp.add_argument("--max-df", type=float, default=0.5, help="maximum document-frequency fraction")
    sp.add_argument("--stopwords")
    sp.add_argument("--dump-tokens", action="store_true")

    def lda_flags(sp):
        sp.add_argument("--dtm", required=True)
        sp.add_argument("--vocab", required=True)
        sp.add_argument("--alpha", type=float, help="document-topic prior (default 50/K)")
        sp.add_argument("--beta", type=float, default=0.01)
        sp.add_argument("--passes", type=int, default=10)
        sp.add_argument("--burn-in", type=int, default=0)
        sp.add_argument("--average", action="store_true", help="posterior-mean phi/theta after burn-in")
        sp.add_argument("--seed", type=int, default=0)

    sp = cmd("sweep", "train one model per K and pick K by coherence/similarity/diversity")
    lda_flags(sp)
    sp.add_argument("--k-min", type=int, default=5)
    sp.add_argument("--k-max", type=int, default=30)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--similarity-top-n", type=int, default=10)
    sp.add_argument("--diversity-top-n", type=int, default=25)
    sp.add_argument("--save-models", action="store_true")

    sp = cmd("train", "train a single model")
    lda_flags(sp)
    sp.add_argument("--k", type=int, help="number of topics")
    sp.add_argument("--sweep", help="take K from a sweep.json instead of --k")
    sp.add_argument("--check", action="store_true", help="verify count invariants after every pass")

    sp = cmd("analyze", "top words, word-cloud weights and demographic heatmaps")
    sp.add_argument("--model", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--dtm")
    sp.add_argument("--units")
    sp.add_argument("--top-n", "--n-top", dest="top_n", type=int, default=10)
    sp.add_argument("--labels", help="CSV topic_id,label")
    sp.add_argument("--demographics", help="patients CSV")
    sp.add_argument("--axis", choices=["sex", "age", "both"], default="both")
    sp.add_argument("--reference-year", type=int)
    sp.add_argument("--weighting", choices=["unit", "patient"], default="unit")

    sp = sub.add_parser("verify-manifest", help="re-run a recorded run and compare outputs")
    sp.add_argument("manifest", help="manifest.json or the run directory holding it")
    return parser


def _params_from_args(args: argparse.Namespace) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in ("command", "out", "verbose")}
    for k in _PATH_PARAMS & params.keys():
        params[k] = _abs(params[k])
    return params


def execute(command: str, params: dict, out: Path) -> tuple[dict, str]:
    out.mkdir(parents=True, exist_ok=True)
    started = now_utc()
    inputs, outputs, seeds, message = HANDLERS[command](params, out)
    manifest = build_manifest(command, params, inputs, out, outputs, seeds, started)
    write_manifest(manifest, out)
    return manifest, message


def verify_manifest(path: str | Path) -> list[str]:
    """Replay a recorded run; returns a list of differences (empty when reproducible)."""
    manifest = read_manifest(path)
    problems = []
    from .manifest import sha256_file

    for name, rec in manifest["inputs"].items():
        if not Path(rec["path"]).exists():
            raise DataError(f"input {name} is gone: {rec['path']}")
        if sha256_file(rec["path"]) != rec["sha256"]:
            problems.append(f"input {name} changed since the run: {rec['path']}")
    with tempfile.TemporaryDirectory(prefix="notetopics-verify-") as tmp:
        out = Path(tmp)
        params = dict(manifest["params"])
        _, outputs, _, _ = HANDLERS[manifest["subcommand"]](params, out)
        fresh = hash_outputs(out, outputs)
    recorded = manifest["outputs"]
    for name in sorted(set(recorded) | set(fresh)):
        if recorded.get(name) != fresh.get(name):
            problems.append(f"output {name} differs")
    return problems


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "verify-manifest":
            problems = verify_manifest(args.manifest)
            for line in problems:
                print(line, file=sys.stderr)
            if problems:
                return EXIT_INTERNAL
            print("manifest verified: outputs reproduced exactly")
            return EXIT_OK
        _, message = execute(args.command, _params_from_args(args), Path(args.out))
        print(message)
        return EXIT_OK
    except UsageError as exc:
        print(f"notetopics: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"notetopics: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"notetopics: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"notetopics: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
