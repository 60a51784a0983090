"""Loading, cleaning and sentence segmentation of raw clinical-note corpora."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import DataError

logger = logging.getLogger(__name__)

SEX_VALUES = ("female", "male", "unknown")
_SEX_ALIASES = {"f": "female", "female": "female", "m": "male", "male": "male"}


@dataclass(frozen=True)
class NoteRecord:
    note_id: str
    patient_id: str
    text: str
    note_date: str | None = None

    def to_json(self) -> dict:
        d = {"note_id": self.note_id, "patient_id": self.patient_id, "text": self.text}
        if self.note_date is not None:
            d["note_date"] = self.note_date
        return d


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    sex: str
    birth_year: int | None = None
    age_years: int | None = None

    def age(self, reference_year: int | None = None) -> int:
        if self.age_years is not None:
            return self.age_years
        if reference_year is None:
            raise DataError(
                f"patient {self.patient_id!r} has only a birth year; a reference year is required"
            )
        age = reference_year - self.birth_year
        if age < 0:
            raise DataError(
                f"patient {self.patient_id!r}: birth year {self.birth_year} is after "
                f"reference year {reference_year}"
            )
        return age


@dataclass(frozen=True)
class Sentence:
    note_id: str
    index: int
    text: str


class LoadResult(NamedTuple):
    notes: list[NoteRecord]
    skipped: int


class FilterStats(NamedTuple):
    kept: int
    duplicates: int
    short: int


class PatientTable:
    """Patient demographics keyed by patient id."""

    def __init__(self, records: Iterable[PatientRecord] = ()):
        self._records: dict[str, PatientRecord] = {}
        for rec in records:
            if rec.patient_id in self._records:
                raise DataError(f"duplicate patient_id {rec.patient_id!r}")
            self._records[rec.patient_id] = rec

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, patient_id: object) -> bool:
        return patient_id in self._records

    def __iter__(self):
        return iter(self._records.values())

    def get(self, patient_id: str) -> PatientRecord | None:
        return self._records.get(patient_id)

    def __getitem__(self, patient_id: str) -> PatientRecord:
        return self._records[patient_id]


# --------------------------------------------------------------------------- notes


def _parse_note(line: str) -> NoteRecord:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    fields = {}
    for key in ("note_id", "patient_id", "text"):
        if key not in obj:
            raise ValueError(f"missing key {key!r}")
        if not isinstance(obj[key], str):
            raise ValueError(f"key {key!r} is not a string")
        fields[key] = obj[key]
    if not fields["note_id"]:
        raise ValueError("empty note_id")
    if not fields["text"].strip():
        raise ValueError("empty text")
    note_date = obj.get("note_date")
    if note_date is not None:
        if not isinstance(note_date, str):
            raise ValueError("note_date is not a string")
        dt.date.fromisoformat(note_date[:10])
    return NoteRecord(fields["note_id"], fields["patient_id"], fields["text"], note_date)


def load_notes(path: str | Path, format: str = "jsonl") -> LoadResult:
    """Read a JSON-lines notes file.

    Malformed lines are skipped with a warning that names the line number.
    A repeated ``note_id`` means the file is corrupt and raises
    :class:`DataError`.
    """
    if format != "jsonl":
        raise DataError(f"unsupported notes format {format!r}")
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read notes file {path}: {exc}") from exc

    notes: list[NoteRecord] = []
    seen: set[str] = set()
    skipped = 0
    with fh:
        try:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    note = _parse_note(line)
                except (ValueError, TypeError) as exc:
                    logger.warning("%s:%d: skipping malformed record (%s)", path, lineno, exc)
                    skipped += 1
                    continue
                if note.note_id in seen:
                    raise DataError(f"{path}:{lineno}: duplicate note_id {note.note_id!r}")
                seen.add(note.note_id)
                notes.append(note)
        except UnicodeDecodeError as exc:
            raise DataError(f"notes file {path} is not valid UTF-8: {exc}") from exc
    if skipped:
        logger.warning("%s: skipped %d malformed line(s)", path, skipped)
    return LoadResult(notes, skipped)


def write_notes(notes: Iterable[NoteRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for note in notes:
            fh.write(json.dumps(note.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def dedup_and_filter(
    notes: Iterable[NoteRecord], min_chars: int = 50
) -> tuple[list[NoteRecord], FilterStats]:
    """Drop repeated texts and texts shorter than ``min_chars``.

    Texts are compared after trimming surrounding whitespace and the length
    is the number of code points in the trimmed text. A note of exactly
    ``min_chars`` characters is kept. A repeat of an earlier text counts as
    a duplicate even when it is also short.
    """
    kept: list[NoteRecord] = []
    seen: set[str] = set()
    duplicates = short = 0
    for note in notes:
        key = note.text.strip()
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        if len(key) < min_chars:
            short += 1
            continue
        kept.append(note)
    return kept, FilterStats(len(kept), duplicates, short)


# ------------------------------------------------------------------- sentences


def load_abbreviations(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        text = resources.files("notetopics").joinpath("data/abbreviations.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(_read_word_list(text))


def _read_word_list(text: str) -> list[str]:
    words = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.append(line)
    return words


DEFAULT_ABBREVIATIONS = load_abbreviations()

# a run of terminal punctuation followed by whitespace or end of text, or a newline run
_BOUNDARY = re.compile(r"[.!?]+(?=\s|$)|\n+")


def _split_points(text: str, abbreviations: frozenset[str]) -> list[int]:
    cuts = []
    for m in _BOUNDARY.finditer(text):
        if m.group().startswith("\n"):
            cuts.append(m.start())
            continue
        if m.group() == ".":
            start = m.start()
            while start > 0 and not text[start - 1].isspace():
                start -= 1
            if text[start : m.end()].lower() in abbreviations:
                continue
        cuts.append(m.end())
    return cuts


def segment_sentences(
    note: NoteRecord, abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS
) -> list[Sentence]:
    """Rule-based sentence splitter.

    Splits after runs of ``.``, ``!`` or ``?`` that are followed by whitespace
    and at newline runs. A period ending a known abbreviation ("Dr.", "e.g.")
    does not split. Always returns at least one sentence.
    """
    text = note.text
    pieces = []
    prev = 0
    for cut in _split_points(text, abbreviations) + [len(text)]:
        piece = text[prev:cut].strip()
        if piece:
            pieces.append(piece)
        prev = cut
    if not pieces:
        pieces = [text.strip() or text]
    return [Sentence(note.note_id, i, s) for i, s in enumerate(pieces)]


# -------------------------------------------------------------------- patients


def _parse_int(value: str, what: str, where: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise DataError(f"{where}: {what} {value!r} is not an integer") from None
    if number < 0:
        raise DataError(f"{where}: {what} {value!r} is negative")
    return number


def load_patients(path: str | Path, format: str = "csv") -> PatientTable:
    """Read the demographics CSV (``patient_id,sex,birth_year`` or ``...,age``)."""
    if format != "csv":
        raise DataError(f"unsupported demographics format {format!r}")
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read demographics file {path}: {exc}") from exc

    records = []
    with fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        missing = [c for c in ("patient_id", "sex") if c not in header]
        if missing:
            raise DataError(f"{path}: missing required column(s) {', '.join(missing)}")
        if "birth_year" not in header and "age" not in header:
            raise DataError(f"{path}: needs a birth_year or an age column")
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            pid = (row.get("patient_id") or "").strip()
            if not pid:
                raise DataError(f"{where}: empty patient_id")
            if pid in seen:
                raise DataError(f"{where}: duplicate patient_id {pid!r}")
            seen.add(pid)
            raw_sex = (row.get("sex") or "").strip()
            sex = _SEX_ALIASES.get(raw_sex.lower())
            if sex is None:
                logger.warning("%s: sex value %r mapped to unknown", where, raw_sex)
                sex = "unknown"
            year = (row.get("birth_year") or "").strip()
            age = (row.get("age") or "").strip()
            if bool(year) == bool(age):
                raise DataError(f"{where}: exactly one of birth_year and age must be given")
            records.append(
                PatientRecord(
                    pid,
                    sex,
                    birth_year=_parse_int(year, "birth_year", where) if year else None,
                    age_years=_parse_int(age, "age", where) if age else None,
                )
            )
    return PatientTable(records)
