"""Review artifacts from a trained model: top words, word-cloud weights, group heatmaps."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import PatientTable
from .errors import DataError
from .metrics import top_word_ids

logger = logging.getLogger(__name__)

DEFAULT_AGE_EDGES = (10, 20, 30, 40, 50, 60, 70, 80, 90)
OUT_OF_RANGE = "out_of_range"
SEX_ORDER = ("female", "male", "unknown")


def top_words(phi: np.ndarray, terms: Sequence[str], topic_id: int, n: int = 10) -> list[tuple[str, float]]:
    """The ``n`` most probable words of one topic with their phi weights."""
    if n > phi.shape[1]:
        raise ValueError(f"n={n} exceeds the vocabulary size {phi.shape[1]}")
    row = phi[topic_id]
    return [(terms[w], float(row[w])) for w in top_word_ids(row, n)[0]]


@dataclass
class TopicReport:
    topic_id: int
    top_words: list[tuple[str, float]]
    label: str | None = None


def topic_reports(phi: np.ndarray, terms: Sequence[str], n: int = 10,
                  labels: Mapping[int, str] | None = None) -> list[TopicReport]:
    labels = labels or {}
    return [TopicReport(k, top_words(phi, terms, k, n), labels.get(k)) for k in range(phi.shape[0])]


def write_top_words(reports: Sequence[TopicReport], tsv_path: str | Path, json_path: str | Path | None = None) -> None:
    n = len(reports[0].top_words) if reports else 0
    with Path(tsv_path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(["topic_id", "label", *(f"word_{i + 1}" for i in range(n))]) + "\n")
        for r in reports:
            fh.write("\t".join([str(r.topic_id), r.label or "", *(w for w, _ in r.top_words)]) + "\n")
    if json_path is not None:
        payload = [
            {"topic_id": r.topic_id, "label": r.label,
             "top_words": [{"word": w, "weight": x} for w, x in r.top_words]}
            for r in reports
        ]
        Path(json_path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8", newline="\n")


def wordcloud_export(phi: np.ndarray, terms: Sequence[str], path: str | Path, n: int = 10) -> int:
    """Write ``word,topic_id,weight`` rows for every topic's top ``n`` words.

    A word in several topics' top lists gets one row per topic. Weights are
    written with ``repr`` so they read back equal to the phi entries.
    Returns the number of records.
    """
    count = 0
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["word", "topic_id", "weight"])
        for k in range(phi.shape[0]):
            for word, weight in top_words(phi, terms, k, n):
                w.writerow([word, k, repr(weight)])
                count += 1
    return count


def load_labels(path: str | Path) -> dict[int, str]:
    """Read a ``topic_id,label`` CSV of human-assigned topic names."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read labels file {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if rows and rows[0] and rows[0][0].strip().lower() == "topic_id":
        rows = rows[1:]
    labels = {}
    for row in rows:
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"{path}: bad label row {row!r}")
        labels[int(row[0])] = row[1].strip()
    return labels


# ------------------------------------------------------------- stratification


def age_bin_labels(edges: Sequence[int] = DEFAULT_AGE_EDGES) -> list[str]:
    labels = [f"{lo}-{hi - 1}" for lo, hi in zip(edges[:-2], edges[1:-1])]
    labels.append(f"{edges[-2]}-{edges[-1]}")
    return labels


def age_bin(age: int, edges: Sequence[int] = DEFAULT_AGE_EDGES) -> str:
    """Left-closed bins, the last one closed on the right; else ``out_of_range``."""
    labels = age_bin_labels(edges)
    if age < edges[0] or age > edges[-1]:
        return OUT_OF_RANGE
    for label, hi in zip(labels, edges[1:-1]):
        if age < hi:
            return label
    return labels[-1]


@dataclass
class GroupTopicDistribution:
    key: str
    mean_theta: np.ndarray
    unit_count: int
    patient_count: int = 0


def stratify(
    theta: np.ndarray,
    unit_patients: Sequence[str],
    patients: PatientTable,
    axis: str,
    *,
    age_edges: Sequence[int] = DEFAULT_AGE_EDGES,
    reference_year: int | None = None,
    weighting: str = "unit",
) -> list[GroupTopicDistribution]:
    """Average document-topic rows within sex or age groups.

    ``unit_patients[d]`` is the patient behind row ``d`` of ``theta``. Units
    whose patient is missing from the table are dropped with a warning. With
    ``weighting="patient"`` each patient's units are averaged first so every
    patient counts once. Groups come back in display order (female, male,
    unknown; age bins ascending, then ``out_of_range``); empty ones are
    omitted and logged.
    """
    if axis not in ("sex", "age"):
        raise ValueError(f"axis must be 'sex' or 'age', got {axis!r}")
    if weighting not in ("unit", "patient"):
        raise ValueError(f"weighting must be 'unit' or 'patient', got {weighting!r}")
    theta = np.asarray(theta, dtype=np.float64)
    if len(unit_patients) != theta.shape[0]:
        raise ValueError("one patient id per theta row is required")

    if axis == "sex":
        order = list(SEX_ORDER)
    else:
        order = age_bin_labels(age_edges) + [OUT_OF_RANGE]
    members: dict[str, list[int]] = {g: [] for g in order}
    unresolved = 0
    for d, pid in enumerate(unit_patients):
        rec = patients.get(pid)
        if rec is None:
            unresolved += 1
            continue
        key = rec.sex if axis == "sex" else age_bin(rec.age(reference_year), age_edges)
        members[key].append(d)
    if unresolved:
        logger.warning("%d unit(s) have no demographics record and were excluded", unresolved)
    if not any(members.values()):
        raise DataError("no unit could be linked to a patient record")

    groups = []
    for key in order:
        rows = members[key]
        if not rows:
            logger.info("group %s is empty and omitted", key)
            continue
        if key == OUT_OF_RANGE:
            logger.warning("%d unit(s) fall outside the age range %d-%d", len(rows), age_edges[0], age_edges[-1])
        pids = [unit_patients[d] for d in rows]
        if weighting == "unit":
            mean = theta[rows].mean(axis=0)
        else:
            per_patient: dict[str, list[int]] = {}
            for d, pid in zip(rows, pids):
                per_patient.setdefault(pid, []).append(d)
            mean = np.mean([theta[idx].mean(axis=0) for idx in per_patient.values()], axis=0)
        groups.append(GroupTopicDistribution(key, mean, len(rows), len(set(pids))))
    return groups


def heatmap_export(
    groups: Sequence[GroupTopicDistribution],
    path: str | Path,
    labels: Mapping[int, str] | None = None,
    include_out_of_range: bool = False,
) -> list[str]:
    """Topics-by-groups TSV of mean probabilities (6 significant digits).

    Returns the column keys written. The ``out_of_range`` age group is left
    out unless asked for.
    """
    cols = [g for g in groups if include_out_of_range or g.key != OUT_OF_RANGE]
    if not cols:
        raise DataError("no groups to export")
    K = len(cols[0].mean_theta)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        head = ["topic_id"] + (["label"] if labels else []) + [g.key for g in cols]
        fh.write("\t".join(head) + "\n")
        for k in range(K):
            row = [str(k)] + ([labels.get(k, "")] if labels else [])
            row += [f"{g.mean_theta[k]:.6g}" for g in cols]
            fh.write("\t".join(row) + "\n")
    return [g.key for g in cols]
