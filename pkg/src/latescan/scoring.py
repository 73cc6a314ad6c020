"""Exact MaxSim late-interaction scoring.

score(q, doc) = sum over query tokens of the maximum inner product
against all document vectors. Arithmetic is float32 end to end; FP16
storage is widened before the multiply. Both the exhaustive scan and
the rerank stage go through the same per-document kernel, so a rerank
over the full collection reproduces the scan bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class QueryEmbedding:
    """A query's token matrix (Q x d, float32) plus its identifier."""

    tokens: np.ndarray
    query_id: str
    dataset_id: str = ""

    def __post_init__(self) -> None:
        toks = np.ascontiguousarray(self.tokens, dtype=np.float32)
        object.__setattr__(self, "tokens", toks)
        if toks.ndim != 2 or toks.shape[0] < 1:
            raise ScoringError(f"query {self.query_id!r}: expected non-empty 2D token matrix")
        if not np.isfinite(toks).all():
            raise ScoringError(f"query {self.query_id!r}: non-finite token components")

    @property
    def q(self) -> int:
        return int(self.tokens.shape[0])


def _query_tokens(query: QueryEmbedding | np.ndarray) -> np.ndarray:
    if isinstance(query, QueryEmbedding):
        return query.tokens
    return np.ascontiguousarray(query, dtype=np.float32)


def widen(mat: np.ndarray) -> np.ndarray:
    """FP16 (or anything else) -> contiguous float32 for the kernels."""
    return np.ascontiguousarray(mat, dtype=np.float32)


def maxsim(query: QueryEmbedding | np.ndarray, doc: np.ndarray) -> float:
    """Sum over query tokens of the max inner product with doc vectors."""
    tokens = _query_tokens(query)
    doc32 = widen(doc)
    if doc32.ndim != 2 or doc32.shape[0] < 1:
        raise ScoringError(f"doc matrix must be non-empty 2D, got shape {doc32.shape}")
    if doc32.shape[1] != tokens.shape[1]:
        raise ScoringError(f"dim mismatch: query d={tokens.shape[1]}, doc d={doc32.shape[1]}")
    sims = tokens @ doc32.T
    return float(sims.max(axis=1).sum())


def maxsim_batch(query: QueryEmbedding | np.ndarray, docs: list[np.ndarray]) -> list[float]:
    """Elementwise maxsim over a batch of doc matrices."""
    tokens = _query_tokens(query)
    return [maxsim(tokens, doc) for doc in docs]


def count_multiply_adds(q_tokens: int, doc_vectors: int, n_docs: int, d: int) -> int:
    """Exact multiply-add count of an exhaustive scan: Q * D * N * d."""
    for label, value in (("Q", q_tokens), ("D", doc_vectors), ("N", n_docs), ("d", d)):
        if value < 1:
            raise ScoringError(f"{label} must be >= 1, got {value}")
    return q_tokens * doc_vectors * n_docs * d


def format_multiply_adds(count: int) -> str:
    """Human-friendly rendering, e.g. 13107200000 -> '1.31e10'."""
    if count < 1000:
        return str(count)
    exponent = int(math.floor(math.log10(count)))
    return f"{count / 10**exponent:.2f}e{exponent}"
