"""CSLS / nearest-neighbor retrieval, lexicon induction, and P@1 evaluation.

Similarity scans run in fixed-size source blocks so memory stays bounded at
large vocabularies; results do not depend on the block size.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingMatrix
from .mapping import OrthogonalMap
from .ot import _topk_row_mean

_BLOCK_ROWS = 1024


@dataclass
class BilingualDictionary:
    """Source word -> nonempty set of accepted target translations."""

    entries: dict[str, set[str]]

    def __post_init__(self):
        for src, tgts in self.entries.items():
            if not tgts:
                raise ValueError(f"empty translation set for {src!r}")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class EvalReport:
    """Precision@1 over the evaluable gold entries."""

    precision_at_1: float | None
    evaluated: int
    skipped_oov: int

    @property
    def undefined(self) -> bool:
        return self.evaluated == 0

    def to_json_line(self) -> str:
        payload: dict = {
            "p_at_1": self.precision_at_1,
            "evaluated": self.evaluated,
            "skipped_oov": self.skipped_oov,
        }
        if self.undefined:
            payload["undefined"] = True
        return json.dumps(payload)


def csls_retrieve(
    s: np.ndarray, t: np.ndarray, k: int = 10, block_size: int = _BLOCK_ROWS
) -> np.ndarray:
    """Top-1 target index per source row under CSLS.

    score(i, j) = 2 cos(s_i, t_j) - mean cos of s_i to its k nearest targets
                  - mean cos of t_j to its k nearest sources

    Rows are assumed unit-normalized (cosine == dot).  Ties break to the
    lowest target index.
    """
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if s.ndim != 2 or t.ndim != 2 or s.shape[1] != t.shape[1]:
        raise ValueError(f"dimension mismatch: {s.shape} vs {t.shape}")
    m, n = s.shape[0], t.shape[0]
    if k < 1 or k > n or k > m:
        raise ValueError(f"k={k} out of range for m={m}, n={n}")

    r_tgt = np.empty(n)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        r_tgt[start:stop] = _topk_row_mean(t[start:stop] @ s.T, k)

    out = np.empty(m, dtype=np.int64)
    for start in range(0, m, block_size):
        stop = min(start + block_size, m)
        sims = s[start:stop] @ t.T
        r_src = _topk_row_mean(sims, k)
        scores = 2.0 * sims - r_src[:, None] - r_tgt[None, :]
        out[start:stop] = np.argmax(scores, axis=1)
    return out


def nn_retrieve(s: np.ndarray, t: np.ndarray, block_size: int = _BLOCK_ROWS) -> np.ndarray:
    """Top-1 target index per source row by plain cosine; ties to lowest index."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if s.ndim != 2 or t.ndim != 2 or s.shape[1] != t.shape[1]:
        raise ValueError(f"dimension mismatch: {s.shape} vs {t.shape}")
    out = np.empty(s.shape[0], dtype=np.int64)
    for start in range(0, s.shape[0], block_size):
        stop = min(start + block_size, s.shape[0])
        out[start:stop] = np.argmax(s[start:stop] @ t.T, axis=1)
    return out


def induce_lexicon(
    x: EmbeddingMatrix,
    y: EmbeddingMatrix,
    q: OrthogonalMap,
    source_count: int,
    k: int = 10,
) -> BilingualDictionary:
    """CSLS top-1 translations for the first ``source_count`` source words."""
    if source_count < 0 or source_count > x.n:
        raise ValueError(f"source_count={source_count} out of range for n={x.n}")
    if source_count == 0:
        return BilingualDictionary({})
    mapped = x.vectors[:source_count] @ q.q
    top1 = csls_retrieve(mapped, y.vectors, k)
    return BilingualDictionary(
        {x.vocab[i]: {y.vocab[top1[i]]} for i in range(source_count)}
    )


def load_muse_dictionary(path: str) -> BilingualDictionary:
    """Parse a two-column (source target) text dictionary; lines group by source."""
    entries: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 tokens, got {len(tokens)}")
            entries.setdefault(tokens[0], set()).add(tokens[1])
    return BilingualDictionary(entries)


def write_muse_dictionary(path: str, dictionary: BilingualDictionary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for src, tgts in dictionary.entries.items():
            for tgt in sorted(tgts):
                fh.write(f"{src}\t{tgt}\n")


def evaluate_p_at_1(predictions: dict[str, str], gold: BilingualDictionary) -> EvalReport:
    """Score top-1 predictions against gold translation sets.

    A prediction is correct if it lies in the gold set.  Gold source words
    with no prediction are treated as out-of-vocabulary: counted in
    ``skipped_oov`` and excluded from the denominator.
    """
    correct = 0
    evaluated = 0
    skipped = 0
    for src, tgts in gold.entries.items():
        pred = predictions.get(src)
        if pred is None:
            skipped += 1
            continue
        evaluated += 1
        if pred in tgts:
            correct += 1
    if evaluated == 0:
        warnings.warn("no gold source word is covered by the predictions; precision undefined")
        return EvalReport(None, 0, skipped)
    return EvalReport(correct / evaluated, evaluated, skipped)
