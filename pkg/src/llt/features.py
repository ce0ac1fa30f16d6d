"""Token/n-gram count features and Euclidean dissimilarity.

The vocabulary is built once over a fixed corpus: distinct tokens, plus
distinct contiguous 2- and 3-token tuples (never spanning log boundaries),
each section indexed densely in first-occurrence order. A log embeds as the
exact occurrence counts of its in-vocabulary terms — raw counts, unweighted,
so the metric stays sensitive to repetition, not just presence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .encoding import escape_bytes, unescape_bytes
from .tokenizer import Token, tokenize


class DimensionMismatch(Exception):
    """Vectors built against different vocabularies cannot be compared."""


def _texts(seq: Sequence) -> list[bytes]:
    """Token byte-strings of a sequence of Token (or raw bytes) items."""
    return [t.text if isinstance(t, Token) else t for t in seq]


@dataclass
class Vocabulary:
    unigrams: list[bytes] = field(default_factory=list)
    bigrams: list[tuple[bytes, bytes]] = field(default_factory=list)
    trigrams: list[tuple[bytes, bytes, bytes]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._index: dict[tuple, int] = {}
        self._reindex()

    def _reindex(self) -> None:
        self._index.clear()
        offset = 0
        for section in (self.unigrams, self.bigrams, self.trigrams):
            for i, term in enumerate(section):
                key = (term,) if not isinstance(term, tuple) else term
                self._index[key] = offset + i
            offset += len(section)

    @property
    def total_dims(self) -> int:
        return len(self.unigrams) + len(self.bigrams) + len(self.trigrams)

    def index_of(self, term: tuple) -> int | None:
        return self._index.get(term)

    def to_dict(self) -> dict:
        return {
            "unigrams": [escape_bytes(t) for t in self.unigrams],
            "bigrams": [[escape_bytes(x) for x in t] for t in self.bigrams],
            "trigrams": [[escape_bytes(x) for x in t] for t in self.trigrams],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        return cls(
            unigrams=[unescape_bytes(t) for t in data["unigrams"]],
            bigrams=[tuple(unescape_bytes(x) for x in t) for t in data["bigrams"]],
            trigrams=[tuple(unescape_bytes(x) for x in t) for t in data["trigrams"]],
        )


@dataclass
class FeatureVector:
    counts: dict[int, int]
    dims: int

    def dense(self) -> np.ndarray:
        v = np.zeros(self.dims, dtype=np.float64)
        for dim, count in self.counts.items():
            v[dim] = count
        return v


def build_vocab(corpus_tokens: Iterable[Sequence]) -> Vocabulary:
    """Joint vocabulary in first-occurrence order, one left-to-right pass."""
    vocab = Vocabulary()
    seen_uni: set[bytes] = set()
    seen_bi: set[tuple] = set()
    seen_tri: set[tuple] = set()
    for seq in corpus_tokens:
        texts = _texts(seq)
        n = len(texts)
        for i, tok in enumerate(texts):
            if tok not in seen_uni:
                seen_uni.add(tok)
                vocab.unigrams.append(tok)
            if i + 1 < n:
                bi = (tok, texts[i + 1])
                if bi not in seen_bi:
                    seen_bi.add(bi)
                    vocab.bigrams.append(bi)
            if i + 2 < n:
                tri = (tok, texts[i + 1], texts[i + 2])
                if tri not in seen_tri:
                    seen_tri.add(tri)
                    vocab.trigrams.append(tri)
    vocab._reindex()
    return vocab


def vectorize(seq: Sequence, vocab: Vocabulary) -> FeatureVector:
    """Exact in-vocabulary term counts; out-of-vocabulary terms contribute 0."""
    texts = _texts(seq)
    n = len(texts)
    counts: dict[int, int] = {}
    for i, tok in enumerate(texts):
        for width in (1, 2, 3):
            if i + width > n:
                break
            term = tuple(texts[i : i + width])
            dim = vocab.index_of(term)
            if dim is not None:
                counts[dim] = counts.get(dim, 0) + 1
    return FeatureVector(counts=counts, dims=vocab.total_dims)


def euclidean(u: FeatureVector, v: FeatureVector) -> float:
    """sqrt of the sum of squared per-dimension count differences."""
    if u.dims != v.dims:
        raise DimensionMismatch(f"{u.dims} vs {v.dims} dimensions")
    total = 0
    for dim, count in u.counts.items():
        total += (count - v.counts.get(dim, 0)) ** 2
    for dim, count in v.counts.items():
        if dim not in u.counts:
            total += count * count
    return math.sqrt(total)


def count_matrix(corpus_tokens: Sequence[Sequence], vocab: Vocabulary) -> np.ndarray:
    """Dense (n_logs, total_dims) float64 count matrix."""
    rows = len(corpus_tokens)
    X = np.zeros((rows, vocab.total_dims), dtype=np.float64)
    for r, seq in enumerate(corpus_tokens):
        for dim, count in vectorize(seq, vocab).counts.items():
            X[r, dim] = count
    return X


def distance_matrix(corpus_or_tokens, vocab: Vocabulary) -> np.ndarray:
    """Symmetric zero-diagonal matrix of pairwise Euclidean distances.

    Accepts a Corpus (tokenized here) or pre-tokenized sequences. Counts are
    small integers, so the Gram-based computation below is exact in float64
    up to the final square root.
    """
    if hasattr(corpus_or_tokens, "logs"):
        token_seqs = [tokenize(log.raw) for log in corpus_or_tokens.logs]
    else:
        token_seqs = list(corpus_or_tokens)
    X = count_matrix(token_seqs, vocab)
    sq = np.einsum("ij,ij->i", X, X)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    D = np.sqrt(d2)
    D = (D + D.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return D
