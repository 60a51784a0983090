"""Topic quality metrics and selection of the number of topics."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .lda import LdaConfig, LdaModel, phi, train
from .rng import derive_seed
from .textprep import DocTermMatrix

logger = logging.getLogger(__name__)


def top_word_ids(weights: np.ndarray, n: int) -> np.ndarray:
    """Indices of the ``n`` largest entries per row; ties go to the lower index."""
    weights = np.atleast_2d(weights)
    if n > weights.shape[1]:
        raise ValueError(f"asked for {n} top words but only {weights.shape[1]} exist")
    return np.argsort(-weights, axis=1, kind="stable")[:, :n]


def umass_coherence(model: LdaModel, matrix: DocTermMatrix, top_n: int = 10) -> tuple[np.ndarray, float]:
    """UMass coherence per topic and its mean.

    For top words ``w_1..w_N`` of a topic (by phi), sums
    ``log((D(w_i, w_j) + 1) / D(w_j))`` over ``j < i``, where ``D`` counts
    training documents containing the word(s).
    """
    top = top_word_ids(phi(model), top_n)
    binary = matrix.to_csr()
    binary.data[:] = 1
    binary = binary.tocsc()
    scores = np.zeros(model.K)
    for k, words in enumerate(top):
        sub = binary[:, words]
        co = (sub.T @ sub).toarray()
        s = 0.0
        for i in range(1, len(words)):
            for j in range(i):
                s += math.log((co[i, j] + 1) / co[j, j])
        scores[k] = s
    return scores, float(scores.mean())


def jaccard(a: set, b: set) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def mean_pairwise_jaccard(top_sets: Sequence[set]) -> float:
    if len(top_sets) < 2:
        raise ValueError("topic similarity needs at least two topics")
    pairs = list(combinations(top_sets, 2))
    return sum(jaccard(a, b) for a, b in pairs) / len(pairs)


def jaccard_topic_similarity(model: LdaModel, top_n: int = 10) -> float:
    """Mean Jaccard index between the top-``top_n`` word sets of all topic pairs."""
    return mean_pairwise_jaccard([set(r.tolist()) for r in top_word_ids(phi(model), top_n)])


def diversity_of(top_sets: Sequence[set], top_n: int) -> float:
    return len(set().union(*top_sets)) / (len(top_sets) * top_n)


def topic_diversity(model: LdaModel, top_n: int = 25) -> float:
    """Fraction of distinct words among the top-``top_n`` words of all topics."""
    if model.vocab_size < top_n:
        raise DataError(
            f"vocabulary has {model.vocab_size} terms, fewer than top_n={top_n}; use a smaller top_n"
        )
    return diversity_of([set(r.tolist()) for r in top_word_ids(phi(model), top_n)], top_n)


@dataclass
class TopicEvaluation:
    K: int
    coherence: float
    similarity: float
    diversity: float
    topic_coherence: list[float] = field(default_factory=list)
    seed: int | None = None


@dataclass
class SweepReport:
    evaluations: list[TopicEvaluation]
    selected_k: int
    composite_scores: list[float]

    def to_tsv(self) -> str:
        lines = ["K\tcoherence\tsimilarity\tdiversity\tcomposite\tselected"]
        for ev, comp in zip(self.evaluations, self.composite_scores):
            lines.append(
                f"{ev.K}\t{ev.coherence:.6g}\t{ev.similarity:.6g}\t{ev.diversity:.6g}\t"
                f"{comp:.6g}\t{'yes' if ev.K == self.selected_k else 'no'}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "selected_k": self.selected_k,
            "evaluations": [
                {
                    "K": ev.K, "seed": ev.seed, "coherence": ev.coherence,
                    "similarity": ev.similarity, "diversity": ev.diversity,
                    "composite": comp, "topic_coherence": ev.topic_coherence,
                }
                for ev, comp in zip(self.evaluations, self.composite_scores)
            ],
        }

    def save(self, tsv_path: str | Path, json_path: str | Path) -> None:
        Path(tsv_path).write_text(self.to_tsv(), encoding="utf-8", newline="\n")
        Path(json_path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8", newline="\n")

    @classmethod
    def from_json(cls, obj: dict) -> "SweepReport":
        evs = [
            TopicEvaluation(e["K"], e["coherence"], e["similarity"], e["diversity"],
                            e.get("topic_coherence", []), e.get("seed"))
            for e in obj["evaluations"]
        ]
        return cls(evs, obj["selected_k"], [e["composite"] for e in obj["evaluations"]])


def evaluate(model: LdaModel, matrix: DocTermMatrix, coherence_top_n: int = 10,
             similarity_top_n: int = 10, diversity_top_n: int = 25) -> TopicEvaluation:
    per_topic, coh = umass_coherence(model, matrix, coherence_top_n)
    return TopicEvaluation(
        K=model.K,
        coherence=coh,
        similarity=jaccard_topic_similarity(model, similarity_top_n),
        diversity=topic_diversity(model, diversity_top_n),
        topic_coherence=per_topic.tolist(),
        seed=model.config.seed,
    )


def _zscores(values: Sequence[float]) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    sd = x.std()
    if sd == 0 or not np.isfinite(sd):
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def composite_scores(evaluations: Sequence[TopicEvaluation]) -> np.ndarray:
    """``z(coherence) + z(diversity) - z(similarity)`` with population z-scores across K."""
    return (
        _zscores([e.coherence for e in evaluations])
        + _zscores([e.diversity for e in evaluations])
        - _zscores([e.similarity for e in evaluations])
    )


def select_k(evaluations: Sequence[TopicEvaluation]) -> int:
    """K with the highest composite score; ties go to the smallest K."""
    if not evaluations:
        raise ValueError("no evaluations to select from")
    comp = composite_scores(evaluations)
    best = max(range(len(evaluations)), key=lambda i: (comp[i], -evaluations[i].K))
    return evaluations[best].K


def sweep_k(
    matrix: DocTermMatrix,
    k_min: int = 5,
    k_max: int = 30,
    base_config: LdaConfig | None = None,
    *,
    alpha: float | None = None,
    vocab_hash: bytes | None = None,
    workers: int = 1,
    coherence_top_n: int = 10,
    similarity_top_n: int = 10,
    diversity_top_n: int = 25,
) -> tuple[SweepReport, dict[int, LdaModel]]:
    """Train and evaluate one model per K in ``k_min..k_max``.

    ``base_config`` supplies beta, passes, burn-in and the base seed; its K
    and alpha are ignored. Each K trains with seed ``derive_seed(base_seed, K)``
    and with ``alpha`` (default ``50 / K``). Models are independent, so
    ``workers > 1`` trains them on threads without changing any result.
    """
    if k_min < 2 or k_max < k_min:
        raise ValueError(f"need 2 <= k_min <= k_max, got {k_min}..{k_max}")
    base = base_config or LdaConfig(K=k_min)
    configs = [
        replace(base, K=k, seed=derive_seed(base.seed, k), alpha=alpha)
        for k in range(k_min, k_max + 1)
    ]

    def fit(cfg: LdaConfig) -> LdaModel:
        logger.info("training K=%d (seed %d)", cfg.K, cfg.seed)
        return train(matrix, cfg, vocab_hash=vocab_hash)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(fit, configs))
    else:
        models = [fit(c) for c in configs]
    evals = [evaluate(m, matrix, coherence_top_n, similarity_top_n, diversity_top_n) for m in models]
    comp = composite_scores(evals)
    report = SweepReport(evals, select_k(evals), comp.tolist())
    return report, {m.K: m for m in models}
