"""Latent Dirichlet allocation trained by collapsed Gibbs sampling.

Tokens are visited in a fixed order (documents in matrix order, each
document's tokens in row order) and every random draw comes from the
seeded xoshiro256** stream in :mod:`notetopics.rng`, so a given matrix and
config always produce the same integer count tables.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit
from scipy.special import gammaln

from .errors import DataError, InvariantError, ModelFormatError
from .rng import next_double, seed_state
from .textprep import DocTermMatrix

logger = logging.getLogger(__name__)

MAGIC = b"NTLDAGS\x00"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class LdaConfig:
    K: int
    alpha: float | None = None  # None -> 50 / K
    beta: float = 0.01
    passes: int = 10
    burn_in: int = 0
    seed: int = 0
    average: bool = False  # posterior-mean phi/theta over post-burn-in sweeps

    def __post_init__(self):
        if self.alpha is None:
            object.__setattr__(self, "alpha", 50.0 / self.K if self.K > 0 else 1.0)
        if self.K < 2:
            raise ValueError(f"K must be at least 2, got {self.K}")
        if not self.alpha > 0 or not self.beta > 0:
            raise ValueError("alpha and beta must be positive")
        if self.passes < 1:
            raise ValueError("passes must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.average and self.burn_in >= self.passes:
            raise ValueError("averaging needs burn_in < passes")


@dataclass
class LdaModel:
    config: LdaConfig
    vocab_size: int
    doc_ptr: np.ndarray  # int64[D+1]
    words: np.ndarray  # int32[N]
    assignments: np.ndarray  # int32[N]
    n_dk: np.ndarray  # int64[D, K]
    n_kw: np.ndarray  # int64[K, V]
    n_k: np.ndarray  # int64[K]
    vocab_hash: bytes = b"\x00" * 32
    loglik: list[tuple[int, float]] = field(default_factory=list)
    phi_sum: np.ndarray | None = None
    theta_sum: np.ndarray | None = None
    n_averaged: int = 0

    @property
    def K(self) -> int:
        return self.config.K

    @property
    def num_docs(self) -> int:
        return len(self.doc_ptr) - 1

    @property
    def total_tokens(self) -> int:
        return len(self.words)

    def doc_lengths(self) -> np.ndarray:
        return np.diff(self.doc_ptr)


# --------------------------------------------------------------- conditional


def conditional_topic_distribution(n_dk_row, n_kw_col, n_k, alpha: float, beta: float, vocab_size: int) -> np.ndarray:
    """Full conditional of one token's topic given all other assignments.

    ``p(k) ∝ (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)``; the counts
    must already exclude the token being resampled.
    """
    n_dk_row = np.asarray(n_dk_row, dtype=np.float64)
    n_kw_col = np.asarray(n_kw_col, dtype=np.float64)
    n_k = np.asarray(n_k, dtype=np.float64)
    p = (n_dk_row + alpha) * (n_kw_col + beta) / (n_k + vocab_size * beta)
    return p / p.sum()


@njit(cache=True, nogil=True)
def _init_assignments(doc_ptr, words, z, n_dk, n_kw, n_k, state):
    K = n_k.shape[0]
    for d in range(doc_ptr.shape[0] - 1):
        for i in range(doc_ptr[d], doc_ptr[d + 1]):
            k = int(next_double(state) * K)
            if k >= K:
                k = K - 1
            z[i] = k
            n_dk[d, k] += 1
            n_kw[k, words[i]] += 1
            n_k[k] += 1


@njit(cache=True, nogil=True)
def _gibbs_sweep(doc_ptr, words, z, n_dk, n_kw, n_k, alpha, beta, vbeta, state, cdf):
    K = n_k.shape[0]
    for d in range(doc_ptr.shape[0] - 1):
        for i in range(doc_ptr[d], doc_ptr[d + 1]):
            w = words[i]
            k = z[i]
            n_dk[d, k] -= 1
            n_kw[k, w] -= 1
            n_k[k] -= 1
            total = 0.0
            for t in range(K):
                total += (n_dk[d, t] + alpha) * (n_kw[t, w] + beta) / (n_k[t] + vbeta)
                cdf[t] = total
            u = next_double(state) * total
            k = 0
            while k < K - 1 and cdf[k] <= u:
                k += 1
            z[i] = k
            n_dk[d, k] += 1
            n_kw[k, w] += 1
            n_k[k] += 1


# ------------------------------------------------------------------- training


def check_counts(model: LdaModel) -> None:
    """Raise :class:`InvariantError` unless the count tables are consistent."""
    if (model.n_dk < 0).any() or (model.n_kw < 0).any() or (model.n_k < 0).any():
        raise InvariantError("negative topic count")
    if not np.array_equal(model.n_dk.sum(axis=1), model.doc_lengths()):
        raise InvariantError("document-topic counts do not sum to document lengths")
    if not np.array_equal(model.n_kw.sum(axis=1), model.n_k):
        raise InvariantError("topic-word counts do not sum to topic totals")
    if int(model.n_k.sum()) != model.total_tokens:
        raise InvariantError("topic totals do not sum to the corpus token count")


def log_likelihood(model: LdaModel) -> float:
    """Collapsed ``log p(words | assignments)`` with phi integrated out."""
    V, beta = model.vocab_size, model.config.beta
    return float(
        model.K * (gammaln(V * beta) - V * gammaln(beta))
        + gammaln(model.n_kw + beta).sum()
        - gammaln(model.n_k + V * beta).sum()
    )


def train(
    matrix: DocTermMatrix,
    config: LdaConfig,
    *,
    vocab_hash: bytes | None = None,
    check_invariants: bool = False,
    loglik_every: int = 10,
    callback: Callable[[int, LdaModel], None] | None = None,
) -> LdaModel:
    """Fit LDA to ``matrix``.

    Assignments start uniformly at random, then ``config.passes`` full
    sweeps resample every token. ``callback(pass_index, model)`` runs after
    each sweep (pass_index starts at 1) and sees the live count tables.
    """
    if matrix.num_docs == 0 or matrix.total_tokens == 0:
        raise DataError("cannot train on an empty document-term matrix")
    K, V = config.K, matrix.vocab_size
    doc_ptr, words = matrix.token_arrays()
    model = LdaModel(
        config=config,
        vocab_size=V,
        doc_ptr=doc_ptr,
        words=words,
        assignments=np.zeros(len(words), dtype=np.int32),
        n_dk=np.zeros((matrix.num_docs, K), dtype=np.int64),
        n_kw=np.zeros((K, V), dtype=np.int64),
        n_k=np.zeros(K, dtype=np.int64),
        vocab_hash=vocab_hash or b"\x00" * 32,
    )
    state = seed_state(config.seed)
    _init_assignments(doc_ptr, words, model.assignments, model.n_dk, model.n_kw, model.n_k, state)
    if check_invariants:
        check_counts(model)

    alpha, beta = float(config.alpha), float(config.beta)
    cdf = np.zeros(K, dtype=np.float64)
    if config.average:
        model.phi_sum = np.zeros((K, V))
        model.theta_sum = np.zeros((matrix.num_docs, K))
    for it in range(1, config.passes + 1):
        _gibbs_sweep(
            doc_ptr, words, model.assignments, model.n_dk, model.n_kw, model.n_k,
            alpha, beta, V * beta, state, cdf,
        )
        if check_invariants:
            check_counts(model)
        if loglik_every and it % loglik_every == 0:
            model.loglik.append((it, log_likelihood(model)))
        if config.average and it > config.burn_in:
            model.phi_sum += phi(model)
            model.theta_sum += theta(model)
            model.n_averaged += 1
        if callback is not None:
            callback(it, model)
    return model


# ------------------------------------------------------------------ estimates


def phi(model: LdaModel, posterior_mean: bool = False) -> np.ndarray:
    """Topic-word matrix, ``(n_kw + beta) / (n_k + V * beta)``."""
    if posterior_mean:
        if not model.n_averaged:
            raise ValueError("model was trained without posterior averaging")
        return model.phi_sum / model.n_averaged
    beta = model.config.beta
    return (model.n_kw + beta) / (model.n_k[:, None] + model.vocab_size * beta)


def theta(model: LdaModel, posterior_mean: bool = False) -> np.ndarray:
    """Document-topic matrix, ``(n_dk + alpha) / (len_d + K * alpha)``."""
    if posterior_mean:
        if not model.n_averaged:
            raise ValueError("model was trained without posterior averaging")
        return model.theta_sum / model.n_averaged
    alpha = model.config.alpha
    return (model.n_dk + alpha) / (model.doc_lengths()[:, None] + model.K * alpha)


def export_matrix_tsv(matrix: np.ndarray, row_ids, col_names, path: str | Path, corner: str = "id") -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join([corner, *col_names]) + "\n")
        for rid, row in zip(row_ids, matrix):
            fh.write(str(rid) + "\t" + "\t".join(f"{x:.9g}" for x in row.tolist()) + "\n")


# ------------------------------------------------------------------ model file
#
# Little-endian layout:
#   magic[8] version:u16 flags:u16
#   K:u32 V:u32 D:u32 N:u64 alpha:f64 beta:f64 passes:u32 burn_in:u32 seed:u64
#   vocab_sha256[32]
#   doc_ptr:i64[D+1] words:i32[N] assignments:i32[N]
#   n_dk:i64[D*K] n_kw:i64[K*V] n_k:i64[K]
#   n_loglik:u32 (pass:u32 value:f64)*n_loglik
#   if flags & 1: n_averaged:u32 phi_sum:f64[K*V] theta_sum:f64[D*K]
#   checksum:u64 = first 8 bytes of BLAKE2b over everything above

_HEADER = struct.Struct("<8sHHIIIQddIIQ32s")
_FLAG_AVERAGED = 1


def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def model_to_bytes(model: LdaModel) -> bytes:
    c = model.config
    averaged = model.n_averaged > 0
    parts = [
        _HEADER.pack(
            MAGIC, FORMAT_VERSION, _FLAG_AVERAGED if averaged else 0,
            c.K, model.vocab_size, model.num_docs, model.total_tokens,
            float(c.alpha), float(c.beta), c.passes, c.burn_in, c.seed, model.vocab_hash,
        ),
        model.doc_ptr.astype("<i8").tobytes(),
        model.words.astype("<i4").tobytes(),
        model.assignments.astype("<i4").tobytes(),
        model.n_dk.astype("<i8").tobytes(),
        model.n_kw.astype("<i8").tobytes(),
        model.n_k.astype("<i8").tobytes(),
        struct.pack("<I", len(model.loglik)),
        b"".join(struct.pack("<Id", it, v) for it, v in model.loglik),
    ]
    if averaged:
        parts += [
            struct.pack("<I", model.n_averaged),
            model.phi_sum.astype("<f8").tobytes(),
            model.theta_sum.astype("<f8").tobytes(),
        ]
    body = b"".join(parts)
    return body + _checksum(body)


def save_model(model: LdaModel, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("model file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def array(self, dtype: str, count: int) -> np.ndarray:
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(item * count), dtype=dtype).astype(dtype[1:]).copy()


def model_from_bytes(data: bytes, expected_vocab_hash: bytes | None = None) -> LdaModel:
    if len(data) < _HEADER.size + 8:
        raise ModelFormatError("model file is truncated (checksum mismatch)")
    body, trailer = data[:-8], data[-8:]
    if _checksum(body) != trailer:
        raise ModelFormatError("model file checksum mismatch (truncated or corrupt)")
    r = _Reader(body)
    (magic, version, flags, K, V, D, N, alpha, beta, passes, burn_in, seed, vhash) = _HEADER.unpack(
        r.take(_HEADER.size)
    )
    if magic != MAGIC:
        raise ModelFormatError("not a model file (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    config = LdaConfig(K=K, alpha=alpha, beta=beta, passes=passes, burn_in=burn_in, seed=seed,
                       average=bool(flags & _FLAG_AVERAGED))
    model = LdaModel(
        config=config,
        vocab_size=V,
        doc_ptr=r.array("<i8", D + 1),
        words=r.array("<i4", N),
        assignments=r.array("<i4", N),
        n_dk=r.array("<i8", D * K).reshape(D, K),
        n_kw=r.array("<i8", K * V).reshape(K, V),
        n_k=r.array("<i8", K),
        vocab_hash=vhash,
    )
    (n_ll,) = struct.unpack("<I", r.take(4))
    model.loglik = [struct.unpack("<Id", r.take(12)) for _ in range(n_ll)]
    if flags & _FLAG_AVERAGED:
        (model.n_averaged,) = struct.unpack("<I", r.take(4))
        model.phi_sum = r.array("<f8", K * V).reshape(K, V)
        model.theta_sum = r.array("<f8", D * K).reshape(D, K)
    if r.pos != len(body):
        raise ModelFormatError("model file has trailing bytes")
    if expected_vocab_hash is not None and expected_vocab_hash != vhash:
        logger.warning("model was trained on a different vocabulary than the one supplied")
    return model


def load_model(path: str | Path, expected_vocab_hash: bytes | None = None) -> LdaModel:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    return model_from_bytes(data, expected_vocab_hash)
