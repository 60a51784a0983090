"""Stigma keyword lexicon: embedding-based expansion, snowball review, corpus filtering."""

from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import NoteRecord, segment_sentences
from .errors import DataError
from .textprep import DEFAULT_STOPWORDS, lemmatize, tokenize

logger = logging.getLogger(__name__)

PROVENANCES = ("seed", "embedding_proposed", "reviewer_added")
STRATEGIES = ("S1_all_notes", "S2_keyword_notes", "S3_keyword_sentences")
_STRATEGY_ALIASES = {"s1": STRATEGIES[0], "s2": STRATEGIES[1], "s3": STRATEGIES[2]}


def normalize_term(term: str) -> str:
    return " ".join(term.lower().split())


@dataclass(frozen=True)
class KeywordEntry:
    term: str
    provenance: str = "seed"
    accepted: bool = True


class KeywordLexicon:
    """Ordered, duplicate-free keyword list with per-term provenance."""

    def __init__(self, entries: Iterable[KeywordEntry] = ()):
        self.entries: list[KeywordEntry] = []
        self._index: dict[str, int] = {}
        for e in entries:
            if not self.add(e.term, e.provenance, e.accepted):
                raise DataError(f"duplicate lexicon term {e.term!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, term: object) -> bool:
        return isinstance(term, str) and normalize_term(term) in self._index

    def copy(self) -> "KeywordLexicon":
        return KeywordLexicon(self.entries)

    def add(self, term: str, provenance: str = "seed", accepted: bool = True) -> bool:
        """Append a term; returns False (and changes nothing) if it is already present."""
        if provenance not in PROVENANCES:
            raise DataError(f"unknown provenance {provenance!r}")
        term = normalize_term(term)
        if not term:
            raise DataError("empty lexicon term")
        if term in self._index:
            return False
        self._index[term] = len(self.entries)
        self.entries.append(KeywordEntry(term, provenance, accepted))
        return True

    def accepted_terms(self) -> list[str]:
        return [e.term for e in self.entries if e.accepted]

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", "provenance", "accepted"])
            for e in self.entries:
                w.writerow([e.term, e.provenance, "true" if e.accepted else "false"])

    @classmethod
    def load(cls, path: str | Path | None = None) -> "KeywordLexicon":
        """Read a ``term,provenance,accepted`` CSV or a plain word-per-line list.

        With no path the bundled starter seed list is returned.
        """
        if path is None:
            text = resources.files("notetopics").joinpath("data/seed_keywords.txt").read_text("utf-8")
            where = "bundled seed list"
        else:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise DataError(f"cannot read lexicon file {path}: {exc}") from exc
            where = str(path)
        lines = text.splitlines()
        first = lines[0].strip().lower().replace(" ", "") if lines else ""
        lex = cls()
        if first.startswith("term,provenance"):
            for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise DataError(f"{where}:{lineno}: expected term,provenance,accepted")
                term, prov, acc = (c.strip() for c in row)
                if acc.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise DataError(f"{where}:{lineno}: bad accepted flag {acc!r}")
                if not lex.add(term, prov, acc.lower() in ("true", "1", "yes")):
                    raise DataError(f"{where}:{lineno}: duplicate term {term!r}")
        else:
            for lineno, line in enumerate(lines, start=1):
                term = line.split("#", 1)[0].strip()
                if term and not lex.add(term):
                    raise DataError(f"{where}:{lineno}: duplicate term {term!r}")
        return lex


# ------------------------------------------------------------------ embeddings


@dataclass
class EmbeddingTable:
    words: list[str]
    vectors: np.ndarray

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, word: object) -> bool:
        return word in self.index

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self.index[word]]


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load a word-vector text file: ``<count> <dim>`` header, then ``word v1 .. vdim`` lines."""
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read embeddings file {path}: {exc}") from exc
    with fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}:1: header must be '<vocab_size> <dimension>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataError(f"{path}:1: header must hold two integers") from None
        if dim <= 0:
            raise DataError(f"{path}:1: dimension must be positive")
        words: list[str] = []
        rows: list[list[float]] = []
        seen: set[str] = set()
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise DataError(f"{path}:{lineno}: expected {dim} components, got {len(parts) - 1}")
            try:
                vec = [float(x) for x in parts[1:]]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric component") from None
            if not all(math.isfinite(x) for x in vec):
                raise DataError(f"{path}:{lineno}: NaN or infinite component")
            word = parts[0].lower()
            if word in seen:
                logger.warning("%s:%d: duplicate word %r ignored", path, lineno, word)
                continue
            seen.add(word)
            words.append(word)
            rows.append(vec)
    if count != len(words):
        logger.warning("%s: header announces %d words, read %d", path, count, len(words))
    return EmbeddingTable(words, np.array(rows, dtype=np.float64).reshape(len(rows), dim))


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


@dataclass(frozen=True)
class CandidateProposal:
    term: str
    nearest_seed: str
    cosine: float


def propose_candidates(
    lexicon: KeywordLexicon,
    embeddings: EmbeddingTable,
    top_n: int = 10,
    min_cosine: float = 0.5,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
) -> list[CandidateProposal]:
    """Nearest embedding neighbors of accepted single-word lexicon terms.

    Up to ``top_n`` neighbors per lexicon term with cosine at least
    ``min_cosine``; terms already in the lexicon (accepted or not) and
    stopwords are never proposed. Each candidate keeps its best seed.
    Sorted by cosine descending, then term.
    """
    seeds = [t for t in lexicon.accepted_terms() if " " not in t]
    present = [t for t in seeds if t in embeddings]
    missing = [t for t in seeds if t not in embeddings]
    if not present:
        raise DataError(
            "no lexicon term found in the embedding table; missing: " + ", ".join(missing)
        )
    if missing:
        logger.warning("%d lexicon term(s) not in embeddings: %s", len(missing), ", ".join(missing))

    norms = np.linalg.norm(embeddings.vectors, axis=1)
    usable = norms > 0
    unit = np.zeros_like(embeddings.vectors)
    unit[usable] = embeddings.vectors[usable] / norms[usable, None]
    eligible = np.array(
        [usable[i] and w not in lexicon and w not in stopwords for i, w in enumerate(embeddings.words)],
        dtype=bool,
    )

    best: dict[str, CandidateProposal] = {}
    for seed in present:
        i = embeddings.index[seed]
        if not usable[i]:
            raise DataError(f"lexicon term {seed!r} has a zero embedding vector")
        sims = np.clip(unit @ unit[i], -1.0, 1.0)
        cand = [j for j in np.flatnonzero(eligible & (sims >= min_cosine)) if j != i]
        cand.sort(key=lambda j: (-sims[j], embeddings.words[j]))
        for j in cand[:top_n]:
            p = CandidateProposal(embeddings.words[j], seed, float(sims[j]))
            old = best.get(p.term)
            if old is None or (p.cosine, old.nearest_seed) > (old.cosine, p.nearest_seed):
                best[p.term] = p
    return sorted(best.values(), key=lambda p: (-p.cosine, p.term))


# ------------------------------------------------------------- snowball review


def load_decisions(path: str | Path) -> dict[str, str]:
    """Read a ``term,decision`` CSV with decision in {accept, reject}."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read decisions file {path}: {exc}") from exc
    decisions: dict[str, str] = {}
    rows = list(csv.reader(text.splitlines()))
    if rows and [c.strip().lower() for c in rows[0]] == ["term", "decision"]:
        rows = rows[1:]
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 2 or row[1].strip().lower() not in ("accept", "reject"):
            raise DataError(f"{path}: bad decision row {row!r}")
        decisions[normalize_term(row[0])] = row[1].strip().lower()
    return decisions


def save_decisions(decisions: Mapping[str, str], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", "decision"])
        for term, d in decisions.items():
            w.writerow([term, d])


def snowball_review(
    lexicon: KeywordLexicon,
    proposals: Sequence[CandidateProposal],
    decisions: Mapping[str, str],
    additions: Iterable[str] = (),
) -> tuple[KeywordLexicon, bool]:
    """Apply one review round; returns the new lexicon and a converged flag.

    Accepted proposals enter as ``embedding_proposed``, free-text
    ``additions`` (terms spotted while reading sampled notes) as
    ``reviewer_added``. The round has converged when nothing new was added.
    """
    proposed = {p.term for p in proposals}
    decisions = {normalize_term(t): d for t, d in decisions.items()}
    unknown = sorted(set(decisions) - proposed)
    if unknown:
        raise DataError("decision for term(s) that were not proposed: " + ", ".join(unknown))
    undecided = [p.term for p in proposals if p.term not in decisions]
    if undecided:
        raise DataError("no decision for proposed term(s): " + ", ".join(undecided))

    out = lexicon.copy()
    added = 0
    for p in proposals:
        d = decisions[p.term]
        if d not in ("accept", "reject"):
            raise DataError(f"decision for {p.term!r} must be accept or reject, got {d!r}")
        if d == "accept" and out.add(p.term, "embedding_proposed"):
            added += 1
    for term in additions:
        if out.add(term, "reviewer_added"):
            added += 1
        else:
            logger.warning("reviewer term %r is already in the lexicon", normalize_term(term))
    return out, added == 0


def sample_matching_notes(
    notes: Sequence[NoteRecord], lexicon: KeywordLexicon, k: int, seed: int = 0
) -> list[NoteRecord]:
    """Random batch of ``k`` notes that match the current lexicon, for reviewer reading."""
    matcher = KeywordMatcher(lexicon)
    hits = [n for n in notes if matcher.match(n.text)]
    rng = random.Random(seed)
    return rng.sample(hits, min(k, len(hits)))


def interactive_review(
    proposals: Sequence[CandidateProposal],
    sample: Sequence[NoteRecord] = (),
    input_fn: Callable[[str], str] = input,
    print_fn: Callable[[str], None] = print,
) -> tuple[dict[str, str], list[str]]:
    """Terminal loop: accept/reject each candidate, add free-text terms, or quit.

    Quitting rejects every remaining candidate.
    """
    decisions: dict[str, str] = {}
    additions: list[str] = []
    for note in sample:
        print_fn(f"--- note {note.note_id} ---")
        print_fn(note.text[:400])
    quit_ = False
    for p in proposals:
        if quit_:
            decisions[p.term] = "reject"
            continue
        for note in sample:
            if p.term in tokenize(note.text):
                print_fn(f"  e.g. [{note.note_id}] {note.text[:160]}")
                break
        while True:
            ans = input_fn(
                f"{p.term} (near {p.nearest_seed}, cos={p.cosine:.3f}) [a]ccept/[r]eject/[q]uit: "
            ).strip().lower()
            if ans in ("a", "accept", "r", "reject", "q", "quit"):
                break
        if ans.startswith("q"):
            quit_ = True
            decisions[p.term] = "reject"
        else:
            decisions[p.term] = "accept" if ans.startswith("a") else "reject"
    while True:
        extra = input_fn("add a keyword seen in the sampled notes (blank to finish): ").strip()
        if not extra:
            break
        additions.append(extra)
    return decisions, additions


# ---------------------------------------------------------------- matching


class KeywordMatcher:
    """Whole-token keyword matcher over raw and lemmatized token sequences."""

    def __init__(self, lexicon: KeywordLexicon):
        self.terms = lexicon.accepted_terms()
        self._raw: dict[str, list[tuple[tuple[str, ...], str]]] = {}
        self._lemma: dict[str, list[tuple[tuple[str, ...], str]]] = {}
        for term in self.terms:
            toks = tuple(tokenize(term))
            if not toks:
                continue
            lem = tuple(lemmatize(t) for t in toks)
            self._raw.setdefault(toks[0], []).append((toks, term))
            self._lemma.setdefault(lem[0], []).append((lem, term))

    @staticmethod
    def _scan(seq: Sequence[str], index, hits: set[str]) -> None:
        n = len(seq)
        for i, tok in enumerate(seq):
            for pattern, term in index.get(tok, ()):
                m = len(pattern)
                if i + m <= n and tuple(seq[i : i + m]) == pattern:
                    hits.add(term)

    def match(self, text: str) -> list[str]:
        raw = tokenize(text)
        hits: set[str] = set()
        self._scan(raw, self._raw, hits)
        self._scan([lemmatize(t) for t in raw], self._lemma, hits)
        return [t for t in self.terms if t in hits]


def match_text(text: str, lexicon: KeywordLexicon) -> list[str]:
    """Accepted lexicon terms found in ``text``, in lexicon order.

    Negated mentions ("denies isolation") still match.
    """
    return KeywordMatcher(lexicon).match(text)


# ---------------------------------------------------------------- strategies


@dataclass(frozen=True)
class DocumentUnit:
    unit_id: str
    patient_id: str
    note_id: str
    sentence_index: int | None
    text: str
    strategy: str

    def to_json(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "patient_id": self.patient_id,
            "note_id": self.note_id,
            "sentence_index": self.sentence_index,
            "strategy": self.strategy,
            "text": self.text,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DocumentUnit":
        return cls(
            obj["unit_id"], obj["patient_id"], obj["note_id"],
            obj.get("sentence_index"), obj["text"], obj["strategy"],
        )


def resolve_strategy(name: str) -> str:
    if name in STRATEGIES:
        return name
    try:
        return _STRATEGY_ALIASES[name.lower()]
    except KeyError:
        raise DataError(f"unknown strategy {name!r}; use s1, s2 or s3") from None


def apply_strategy(
    notes: Iterable[NoteRecord], lexicon: KeywordLexicon, strategy: str
) -> list[DocumentUnit]:
    """Turn notes into modeling units.

    S1 keeps every note, S2 keeps notes with at least one keyword hit, S3
    keeps only the keyword-bearing sentences (one unit per sentence).
    """
    strategy = resolve_strategy(strategy)
    if strategy == STRATEGIES[0]:
        return [DocumentUnit(n.note_id, n.patient_id, n.note_id, None, n.text, strategy) for n in notes]
    if not lexicon.accepted_terms():
        raise DataError(f"strategy {strategy} needs a non-empty lexicon")
    matcher = KeywordMatcher(lexicon)
    units = []
    for n in notes:
        if strategy == STRATEGIES[1]:
            if matcher.match(n.text):
                units.append(DocumentUnit(n.note_id, n.patient_id, n.note_id, None, n.text, strategy))
        else:
            for s in segment_sentences(n):
                if matcher.match(s.text):
                    units.append(
                        DocumentUnit(
                            f"{n.note_id}#{s.index}", n.patient_id, n.note_id, s.index, s.text, strategy
                        )
                    )
    return units
