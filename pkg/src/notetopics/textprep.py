"""Text normalization and bag-of-words construction.

Normalization is tokenize, drop stopwords, lemmatize, then drop stopwords
again (a lemma such as "have" can itself be a stopword).
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z]+(?:['-][a-z]+)*")
TOKEN_GRAMMAR = re.compile(r"[a-z][a-z'-]*\Z")


@dataclass(frozen=True)
class TokenStream:
    unit_id: str
    tokens: tuple[str, ...]


@dataclass
class Vocabulary:
    terms: list[str]
    doc_freq: list[int]
    term_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.term_to_id = {t: i for i, t in enumerate(self.terms)}
        if len(self.term_to_id) != len(self.terms):
            raise DataError("vocabulary terms are not unique")

    def __len__(self) -> int:
        return len(self.terms)

    def content_hash(self) -> bytes:
        """SHA-256 over the ordered term list; ties saved models to a vocabulary."""
        return hashlib.sha256("\n".join(self.terms).encode("utf-8")).digest()

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("term_id\tterm\tdoc_freq\n")
            for i, (t, df) in enumerate(zip(self.terms, self.doc_freq)):
                fh.write(f"{i}\t{t}\t{df}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        terms, dfs = [], []
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"cannot read vocabulary {path}: {exc}") from exc
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != 3 or int(parts[0]) != len(terms):
                raise DataError(f"{path}:{lineno}: malformed vocabulary row")
            terms.append(parts[1])
            dfs.append(int(parts[2]))
        return cls(terms, dfs)


@dataclass
class DocTermMatrix:
    """Sparse bag-of-words rows, one per modeling unit.

    Each row is a pair of parallel int arrays (term ids ascending, counts).
    """

    unit_ids: list[str]
    rows: list[tuple[np.ndarray, np.ndarray]]
    vocab_size: int

    @property
    def num_docs(self) -> int:
        return len(self.rows)

    @property
    def total_tokens(self) -> int:
        return int(sum(int(c.sum()) for _, c in self.rows))

    def doc_lengths(self) -> np.ndarray:
        return np.array([int(c.sum()) for _, c in self.rows], dtype=np.int64)

    def token_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Expand rows into a flat token sequence.

        Returns ``(doc_ptr, words)``: tokens of document ``d`` are
        ``words[doc_ptr[d]:doc_ptr[d+1]]``, each row's term ids repeated by
        their counts in row order.
        """
        lengths = self.doc_lengths()
        doc_ptr = np.zeros(len(lengths) + 1, dtype=np.int64)
        np.cumsum(lengths, out=doc_ptr[1:])
        if self.rows:
            words = np.concatenate([np.repeat(ids, cnt) for ids, cnt in self.rows])
        else:
            words = np.zeros(0)
        return doc_ptr, words.astype(np.int32)

    def to_csr(self):
        from scipy import sparse

        indptr = np.zeros(self.num_docs + 1, dtype=np.int64)
        np.cumsum([len(ids) for ids, _ in self.rows], out=indptr[1:])
        if self.rows:
            indices = np.concatenate([ids for ids, _ in self.rows])
            data = np.concatenate([cnt for _, cnt in self.rows])
        else:
            indices = data = np.zeros(0, dtype=np.int64)
        return sparse.csr_matrix(
            (data, indices, indptr), shape=(self.num_docs, self.vocab_size)
        )

    @classmethod
    def from_dense(cls, counts, unit_ids: Sequence[str] | None = None) -> "DocTermMatrix":
        counts = np.asarray(counts)
        rows = []
        for r in counts:
            ids = np.flatnonzero(r).astype(np.int32)
            rows.append((ids, r[ids].astype(np.int64)))
        if unit_ids is None:
            unit_ids = [f"d{i}" for i in range(len(rows))]
        return cls(list(unit_ids), rows, counts.shape[1])

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(
                f"# units={self.num_docs} vocab={self.vocab_size} "
                f"total_tokens={self.total_tokens}\n"
            )
            for uid, (ids, cnt) in zip(self.unit_ids, self.rows):
                pairs = " ".join(f"{i}:{c}" for i, c in zip(ids.tolist(), cnt.tolist()))
                fh.write(f"{uid}\t{pairs}\n")

    @classmethod
    def load(cls, path: str | Path) -> "DocTermMatrix":
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"cannot read document-term matrix {path}: {exc}") from exc
        if not lines or not lines[0].startswith("#"):
            raise DataError(f"{path}: missing header line")
        header = dict(kv.split("=", 1) for kv in lines[0][1:].split())
        vocab_size = int(header["vocab"])
        unit_ids, rows = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            uid, _, body = line.partition("\t")
            pairs = [p.split(":") for p in body.split()]
            ids = np.array([int(i) for i, _ in pairs], dtype=np.int32)
            cnt = np.array([int(c) for _, c in pairs], dtype=np.int64)
            if len(ids) == 0 or (cnt < 1).any() or (ids >= vocab_size).any():
                raise DataError(f"{path}:{lineno}: malformed matrix row")
            unit_ids.append(uid)
            rows.append((ids, cnt))
        dtm = cls(unit_ids, rows, vocab_size)
        if dtm.total_tokens != int(header["total_tokens"]):
            raise DataError(f"{path}: token total does not match header")
        return dtm


# ------------------------------------------------------------------ tokenizing


def tokenize(text: str) -> list[str]:
    """Lowercase ASCII letter runs; internal ``'`` and ``-`` stay inside a token."""
    text = text.lower().replace("’", "'")
    return _TOKEN.findall(text)


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Bundled English list, or a one-word-per-line file with ``#`` comments."""
    if path is None:
        text = resources.files("notetopics").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read stopword file {path}: {exc}") from exc
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.add(line)
    return frozenset(words)


DEFAULT_STOPWORDS = load_stopwords()


def remove_stopwords(tokens: Iterable[str], stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> list[str]:
    return [t for t in tokens if t not in stopwords]


# ----------------------------------------------------------------- lemmatizing

_EXCEPTIONS = {
    # irregular plurals
    "feet": "foot", "teeth": "tooth", "geese": "goose", "mice": "mouse",
    "children": "child", "men": "man", "women": "woman", "people": "people",
    "wives": "wife", "knives": "knife", "lives": "life", "leaves": "leaf",
    "halves": "half", "selves": "self", "analyses": "analysis",
    "diagnoses": "diagnosis", "prognoses": "prognosis", "crises": "crisis",
    "criteria": "criterion", "data": "data", "phenomena": "phenomenon",
    # words that look inflected but are not
    "aids": "aids", "diabetes": "diabetes", "herpes": "herpes", "news": "news",
    "always": "always", "perhaps": "perhaps", "series": "series",
    "species": "species", "lupus": "lupus", "scabies": "scabies",
    "rabies": "rabies", "feces": "feces", "measles": "measles",
    "mumps": "mumps", "morning": "morning", "evening": "evening",
    "nothing": "nothing", "something": "something", "anything": "anything",
    "everything": "everything", "thing": "thing", "things": "thing",
    "bring": "bring", "ring": "ring", "sing": "sing", "spring": "spring",
    "string": "string", "king": "king", "wing": "wing", "sibling": "sibling",
    "siblings": "sibling", "ceiling": "ceiling", "building": "building",
    "clothing": "clothing", "wedding": "wedding", "during": "during",
    "bed": "bed", "red": "red", "shed": "shed", "need": "need",
    "speed": "speed", "seed": "seed", "feed": "feed", "breed": "breed",
    "indeed": "indeed", "hundred": "hundred", "sacred": "sacred",
    "naked": "naked", "wicked": "wicked",
    # irregular verbs
    "was": "be", "were": "be", "is": "be", "are": "be", "been": "be",
    "went": "go", "gone": "go", "goes": "go", "took": "take", "taken": "take",
    "taking": "take", "gave": "give", "given": "give", "giving": "give",
    "felt": "feel", "told": "tell", "said": "say", "says": "say",
    "ate": "eat", "eaten": "eat", "drank": "drink", "drunk": "drink",
    "came": "come", "coming": "come", "became": "become", "becoming": "become",
    "made": "make", "making": "make", "using": "use", "used": "use",
    "having": "have", "had": "have", "has": "have", "did": "do", "done": "do",
    "does": "do", "saw": "see", "seen": "see", "thought": "think",
    "brought": "bring", "bought": "buy", "sought": "seek", "found": "find",
    "lost": "lose", "kept": "keep", "slept": "sleep", "left": "left",
    "met": "meet", "paid": "pay", "sent": "send", "spent": "spend",
    "knew": "know", "known": "know", "wrote": "write", "written": "write",
    "began": "begin", "begun": "begin", "fell": "fall", "fallen": "fall",
    "living": "live", "lived": "live", "hid": "hide",
    "hidden": "hide", "changed": "change", "changing": "change",
    "increased": "increase", "increasing": "increase", "decreased": "decrease",
    "decreasing": "decrease", "released": "release", "pleased": "please",
    "ceased": "cease", "diseased": "disease", "housed": "house",
    "focused": "focus", "focusing": "focus", "visited": "visit",
    "visiting": "visit", "monitored": "monitor", "monitoring": "monitor",
    "considered": "consider", "questioned": "question", "threatened": "threaten",
    "worsened": "worsen", "worsening": "worsen", "arranged": "arrange",
    "engaged": "engage", "engaging": "engage", "housing": "housing",
    "ashamed": "ashamed", "controlled": "control", "controlling": "control",
    "cancelled": "cancel", "labelled": "label", "travelled": "travel",
}

_VOWELS = frozenset("aeiouy")
_KEEP_DOUBLE = frozenset({"ll", "ss", "zz", "ff"})
# two-letter stem endings that take back a silent "e" when preceded by a consonant
_E_AFTER_SINGLE_VOWEL = frozenset(
    {"at", "iz", "yz", "ag", "ac", "uc", "ic", "ak", "ik", "ok", "am", "um",
     "ap", "op", "yp", "ar", "ir", "ur", "id", "ud", "in", "os", "us", "as",
     "ot", "ut", "ib", "ul", "ol", "il", "yl", "ov", "iv", "av", "ev",
     "uv"}
)
_E_ENDINGS = ("bl", "dg", "rs", "rc", "rg", "ls", "ns", "ps", "v", "gu", "qu")
_MIN_STEM = 3


def _restore_e(stem: str) -> str:
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS:
        if stem[-2:] not in _KEEP_DOUBLE:
            return stem[:-1]
        return stem
    if stem.endswith(_E_ENDINGS):
        return stem + "e"
    if len(stem) >= 3 and stem[-2:] in _E_AFTER_SINGLE_VOWEL and stem[-3] not in _VOWELS:
        return stem + "e"
    return stem


def _has_vowel(s: str) -> bool:
    return any(c in _VOWELS for c in s)


def _lemma_step(tok: str) -> str:
    if tok in _EXCEPTIONS:
        return _EXCEPTIONS[tok]
    n = len(tok)
    if tok.endswith("'s") and n - 2 >= _MIN_STEM:
        return tok[:-2]
    if tok.endswith("ies") and n - 3 >= _MIN_STEM - 1:
        return tok[:-3] + "y"
    if tok.endswith("ied") and n - 3 >= _MIN_STEM - 1:
        return tok[:-3] + "y"
    if tok.endswith("es") and n - 2 >= _MIN_STEM:
        if tok.endswith(("sses", "xes", "ches", "shes", "zzes")):
            return tok[:-2]
        return tok[:-1]
    if tok.endswith("s") and not tok.endswith(("ss", "us", "is", "'s")) and n - 1 >= _MIN_STEM:
        return tok[:-1]
    if tok.endswith("eed"):
        return tok
    if tok.endswith("ed") and n - 2 >= _MIN_STEM and _has_vowel(tok[:-2]):
        out = _restore_e(tok[:-2])
        return out if len(out) >= _MIN_STEM else tok
    if tok.endswith("ing") and n - 3 >= _MIN_STEM and _has_vowel(tok[:-3]):
        out = _restore_e(tok[:-3])
        return out if len(out) >= _MIN_STEM else tok
    return tok


def lemmatize(token: str) -> str:
    """Rule-based lemma: exception lexicon, then ordered suffix rules.

    Rules are reapplied until nothing changes, which makes the function
    idempotent. Every rule shortens the word or maps it into the exception
    table, so the loop terminates.
    """
    seen = {token}
    while True:
        nxt = _lemma_step(token)
        if nxt == token or nxt in seen:
            return nxt
        seen.add(nxt)
        token = nxt


def normalize(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> list[str]:
    tokens = remove_stopwords(tokenize(text), stopwords)
    return remove_stopwords((lemmatize(t) for t in tokens), stopwords)


def token_stream(unit_id: str, text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> TokenStream:
    return TokenStream(unit_id, tuple(normalize(text, stopwords)))


def dump_streams(streams: Iterable[TokenStream], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for s in streams:
            fh.write(json.dumps({"unit_id": s.unit_id, "tokens": list(s.tokens)}) + "\n")


# ------------------------------------------------------------------ vocabulary


def build_vocabulary(
    streams: Sequence[TokenStream], min_df: int = 2, max_df_fraction: float = 0.5
) -> Vocabulary:
    """Keep terms whose document frequency lies in ``[min_df, max_df_fraction * N]``.

    ``N`` counts every stream passed in. Terms are sorted so ids are stable.
    """
    if not any(s.tokens for s in streams):
        raise DataError("cannot build a vocabulary: no non-empty token streams")
    df: Counter[str] = Counter()
    for s in streams:
        df.update(set(s.tokens))
    max_df = max_df_fraction * len(streams)
    kept = sorted(t for t, n in df.items() if min_df <= n <= max_df)
    if not kept:
        raise DataError(
            f"vocabulary is empty after pruning (min_df={min_df}, "
            f"max_df_fraction={max_df_fraction}, {len(streams)} units); "
            "lower --min-df or raise --max-df"
        )
    return Vocabulary(kept, [df[t] for t in kept])


def to_doc_term_matrix(streams: Iterable[TokenStream], vocab: Vocabulary) -> DocTermMatrix:
    unit_ids, rows = [], []
    dropped = 0
    for s in streams:
        counts = Counter(vocab.term_to_id[t] for t in s.tokens if t in vocab.term_to_id)
        if not counts:
            dropped += 1
            logger.info("unit %s has no in-vocabulary tokens; dropped", s.unit_id)
            continue
        ids = sorted(counts)
        unit_ids.append(s.unit_id)
        rows.append(
            (np.array(ids, dtype=np.int32), np.array([counts[i] for i in ids], dtype=np.int64))
        )
    if dropped:
        logger.warning("dropped %d unit(s) with no in-vocabulary tokens", dropped)
    return DocTermMatrix(unit_ids, rows, len(vocab))
