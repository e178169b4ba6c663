"""Loading, validation, normalization, and batch sampling of word embeddings.

Embeddings are kept in float64 throughout; Sinkhorn fixed points at small
entropy regularization are sensitive to precision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

_NORM_TOL = 1e-9


@dataclass
class EmbeddingMatrix:
    """A vocabulary (frequency-ranked, most frequent first) plus its n x d vector matrix."""

    vocab: list[str]
    vectors: np.ndarray
    _index: dict[str, int] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-dimensional, got shape {self.vectors.shape}")
        if len(self.vocab) != self.vectors.shape[0]:
            raise ValueError(
                f"vocab length {len(self.vocab)} != vector row count {self.vectors.shape[0]}"
            )
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocab contains duplicate entries")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def word_index(self) -> dict[str, int]:
        """Word -> row index lookup, built lazily and cached."""
        if self._index is None:
            self._index = {w: i for i, w in enumerate(self.vocab)}
        return self._index


@dataclass
class Batch:
    """Row indices into an EmbeddingMatrix together with the sliced vectors."""

    indices: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.indices.ndim != 1 or self.indices.shape[0] < 1:
            raise ValueError("a batch needs at least one index")
        if self.matrix.shape[0] != self.indices.shape[0]:
            raise ValueError("index count and row count disagree")

    @property
    def b(self) -> int:
        return self.indices.shape[0]


def load_fasttext_vec(path: str, max_words: int) -> EmbeddingMatrix:
    """Read a fastText text ``.vec`` file.

    The first line must be ``<count> <dim>``; every following line is a word
    plus ``dim`` whitespace-separated floats.  Words repeated after their
    first occurrence are skipped with a warning and do not count toward
    ``max_words``.  A row whose value count differs from ``dim`` is a hard
    error: silent truncation would corrupt alignment downstream.
    """
    if max_words <= 0:
        raise ValueError(f"max_words must be positive, got {max_words}")
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header {header!r}, expected '<count> <dim>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValueError(f"{path}: malformed header {header!r}") from exc
        if count < 0 or dim < 1:
            raise ValueError(f"{path}: malformed header values count={count} dim={dim}")

        target = min(max_words, count)
        vocab: list[str] = []
        rows: list[np.ndarray] = []
        seen: set[str] = set()
        for lineno, line in enumerate(fh, start=2):
            if len(vocab) >= target:
                break
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split()
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(
                    f"{path}:{lineno}: row has {len(values)} values, header says dim={dim}"
                )
            if word in seen:
                warnings.warn(f"{path}:{lineno}: duplicate word {word!r} skipped")
                continue
            try:
                vec = np.array(values, dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric vector value") from exc
            seen.add(word)
            vocab.append(word)
            rows.append(vec)

    vectors = np.vstack(rows) if rows else np.empty((0, dim))
    return EmbeddingMatrix(vocab, vectors)


def _unit_rows(vectors: np.ndarray, stage: str) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmax(norms == 0.0))
        raise ValueError(f"zero-vector row {bad} before {stage} normalization")
    return vectors / norms[:, None]


def normalize(emb: EmbeddingMatrix) -> EmbeddingMatrix:
    """Unit-normalize rows, subtract the column mean, unit-normalize again.

    The double renormalization keeps every row on the unit sphere, which the
    cosine-based retrieval costs assume.  Raises if any row is (or becomes)
    the zero vector, since such a row cannot be renormalized.
    """
    v = _unit_rows(emb.vectors, "first")
    v = v - v.mean(axis=0)
    v = _unit_rows(v, "second")
    assert np.all(np.abs(np.linalg.norm(v, axis=1) - 1.0) <= _NORM_TOL)
    return EmbeddingMatrix(emb.vocab, v)


def sample_batch(
    emb: EmbeddingMatrix, pool_size: int, b: int, rng: np.random.Generator
) -> Batch:
    """Draw ``b`` distinct row indices uniformly from the first ``min(pool_size, n)`` rows."""
    if pool_size <= 0:
        raise ValueError(f"pool_size must be positive, got {pool_size}")
    if b <= 0:
        raise ValueError(f"batch size must be positive, got {b}")
    pool = min(pool_size, emb.n)
    if b > pool:
        raise ValueError(f"batch size {b} exceeds sampling pool {pool}")
    indices = np.sort(rng.choice(pool, size=b, replace=False))
    return Batch(indices, emb.vectors[indices])
