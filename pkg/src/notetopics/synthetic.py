"""Synthetic fixtures with known ground truth.

``planted_lda_corpus`` samples from the LDA generative process with
well-separated topics; ``clinical_demo_corpus`` writes a small note corpus,
demographics table, seed lexicon and embedding file for end-to-end runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .textprep import DocTermMatrix


@dataclass
class PlantedCorpus:
    matrix: DocTermMatrix
    phi: np.ndarray  # K x V generating topic-word matrix
    theta: np.ndarray  # D x K generating document-topic matrix
    token_topics: list[np.ndarray]  # per-document generating topic of each token


def planted_lda_corpus(
    K: int = 5,
    V: int = 100,
    D: int = 500,
    doc_len: int = 100,
    alpha: float = 0.1,
    support: int | None = 20,
    seed: int = 0,
) -> PlantedCorpus:
    """Sample a corpus from LDA with disjoint topic supports.

    Topic ``k`` puts its mass on words ``k*support .. (k+1)*support - 1``
    with weights proportional to ``support, support-1, .., 1`` in a random
    order, so each topic has a well-defined top-10. Document mixtures are
    ``Dirichlet(alpha)``.
    """
    support = support or V // K
    if K * support > V:
        raise ValueError("K * support must not exceed V")
    rng = np.random.default_rng(seed)
    phi = np.zeros((K, V))
    profile = np.arange(support, 0, -1, dtype=np.float64)
    profile /= profile.sum()
    for k in range(K):
        phi[k, k * support + rng.permutation(support)] = profile
    theta = rng.dirichlet(np.full(K, alpha), size=D)
    counts = np.zeros((D, V), dtype=np.int64)
    token_topics = []
    for d in range(D):
        z = rng.choice(K, size=doc_len, p=theta[d])
        w = np.array([rng.choice(V, p=phi[k]) for k in z]) if doc_len else np.zeros(0, int)
        np.add.at(counts[d], w, 1)
        token_topics.append(z)
    keep = counts.sum(axis=1) > 0
    matrix = DocTermMatrix.from_dense(counts[keep], [f"d{i}" for i in np.flatnonzero(keep)])
    return PlantedCorpus(matrix, phi, theta[keep], [t for t, k in zip(token_topics, keep) if k])


def planted_vocabulary(V: int) -> list[str]:
    """Letter-only term names ``waa, wab, ..`` for ``V`` planted words."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    out = []
    for i in range(V):
        a, b = divmod(i, 26)
        c, a = divmod(a, 26)
        out.append("w" + letters[c % 26] + letters[a] + letters[b])
    return out


# ----------------------------------------------------------- clinical fixture

_FILLER = [
    "Patient seen in clinic for routine follow up of chronic conditions.",
    "Vital signs were stable and within normal limits during the visit.",
    "Medication list reviewed and refills were sent to the pharmacy.",
    "Labs drawn today include viral load and metabolic panel results.",
    "Physical exam shows no acute distress and lungs are clear bilaterally.",
    "Plan to continue current antiretroviral regimen and recheck in three months.",
    "Reports mild back pain after lifting boxes at work last week.",
    "Discussed diet, exercise and sleep hygiene with the patient today.",
    "Blood pressure remains elevated and amlodipine dose was increased.",
    "No fever, chills, cough or shortness of breath reported.",
]

_STIGMA = [
    "Patient expresses fear of disclosure of status to family members.",
    "Reports feeling isolated and lonely since moving to the new town.",
    "States a deep sense of shame about the diagnosis and avoids friends.",
    "Describes discrimination at work after coworkers learned of the illness.",
    "Experienced rejection from partner and feels judged by the community.",
    "Patient blames self for the infection and reports guilt and sadness.",
    "Worried about stigma in church and keeps the diagnosis a secret.",
    "Feels embarrassed to pick up medications at the local pharmacy.",
]

_SOCIAL = [
    "Lacks transportation to appointments and missed the last two visits.",
    "Food insecurity reported and referral placed to the food pantry.",
    "Currently homeless and staying at a shelter downtown.",
    "Unable to afford copays and asks about assistance programs.",
]


def clinical_demo_corpus(out_dir: str | Path, n_notes: int = 200, n_patients: int = 40, seed: int = 0) -> dict[str, Path]:
    """Write ``notes.jsonl``, ``patients.csv``, ``seeds.txt`` and ``embeddings.txt``.

    Notes mix routine sentences with stigma and social sentences; a few exact
    duplicates and one short note are planted so ingest has work to do.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    notes = []
    for i in range(n_notes):
        n_sent = int(rng.integers(3, 7))
        sents = [_FILLER[j] for j in rng.choice(len(_FILLER), size=n_sent, replace=False)]
        if rng.random() < 0.45:
            sents.insert(int(rng.integers(0, len(sents) + 1)), _STIGMA[int(rng.integers(len(_STIGMA)))])
        if rng.random() < 0.3:
            sents.insert(int(rng.integers(0, len(sents) + 1)), _SOCIAL[int(rng.integers(len(_SOCIAL)))])
        notes.append({
            "note_id": f"n{i:04d}",
            "patient_id": f"p{int(rng.integers(n_patients)):03d}",
            "text": " ".join(sents),
        })
    notes.append({"note_id": f"n{n_notes:04d}", "patient_id": "p000", "text": notes[0]["text"]})
    notes.append({"note_id": f"n{n_notes + 1:04d}", "patient_id": "p001", "text": notes[1]["text"]})
    notes.append({"note_id": f"n{n_notes + 2:04d}", "patient_id": "p002", "text": "Phone call."})
    paths = {k: out / v for k, v in {
        "notes": "notes.jsonl", "patients": "patients.csv",
        "seeds": "seeds.txt", "embeddings": "embeddings.txt",
    }.items()}
    with paths["notes"].open("w", encoding="utf-8", newline="\n") as fh:
        for n in notes:
            fh.write(json.dumps(n) + "\n")
    with paths["patients"].open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("patient_id,sex,birth_year\n")
        for p in range(n_patients):
            fh.write(f"p{p:03d},{'F' if p % 2 else 'M'},{int(rng.integers(1940, 2005))}\n")
    paths["seeds"].write_text("disclosure\nisolated\nshame\nstigma\n", encoding="utf-8")
    # 4-d toy vectors: stigma words cluster on axis 0, social words on axis 1
    vecs = {
        "disclosure": [1.0, 0.1, 0.0, 0.0], "secret": [0.95, 0.15, 0.05, 0.0],
        "isolated": [0.9, 0.0, 0.3, 0.0], "lonely": [0.88, 0.05, 0.35, 0.0],
        "shame": [1.0, 0.0, 0.0, 0.2], "guilt": [0.9, 0.0, 0.05, 0.3],
        "stigma": [1.0, 0.05, 0.1, 0.1], "discrimination": [0.85, 0.2, 0.1, 0.1],
        "food": [0.0, 1.0, 0.0, 0.0], "transportation": [0.05, 0.9, 0.2, 0.0],
        "pressure": [0.0, 0.0, 0.0, 1.0], "the": [0.7, 0.7, 0.0, 0.0],
    }
    with paths["embeddings"].open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(vecs)} 4\n")
        for w, v in vecs.items():
            fh.write(w + " " + " ".join(f"{x:g}" for x in v) + "\n")
    return paths
