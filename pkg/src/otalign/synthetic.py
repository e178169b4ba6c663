"""Synthetic embedding pairs with known ground truth.

The target space is a row-permuted orthogonal transform of the source space,
optionally with additive noise and target-only outlier rows.  The permutation
shuffles ranks only within fixed-size windows, mimicking the rough
frequency-rank correspondence across real languages that head-word
initialization relies on.
"""

from __future__ import annotations

import numpy as np

from .embeddings import EmbeddingMatrix, _unit_rows, normalize
from .mapping import OrthogonalMap
from .retrieval import (
    BilingualDictionary,
    csls_retrieve,
    evaluate_p_at_1,
    nn_retrieve,
)


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via sign-fixed QR."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))[None, :]


def window_permutation(n: int, window: int, rng: np.random.Generator) -> np.ndarray:
    """Permutation of range(n) that shuffles only within consecutive windows."""
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    perm = np.arange(n)
    for start in range(0, n, window):
        stop = min(start + window, n)
        perm[start:stop] = start + rng.permutation(stop - start)
    return perm


def _source_matrix(n: int, d: int, rng: np.random.Generator) -> EmbeddingMatrix:
    raw = rng.standard_normal((n, d))
    return normalize(EmbeddingMatrix([f"s{i:05d}" for i in range(n)], raw))


def make_rotation_pair(
    n: int,
    d: int,
    seed: int,
    noise: float = 0.0,
    window: int = 100,
) -> tuple[EmbeddingMatrix, EmbeddingMatrix, np.ndarray, np.ndarray]:
    """Source X, target Y = window-permuted X @ R (+ noise), truth perm, and R.

    Source word i translates to target word ``perm[i]``.  With zero noise the
    correspondence is exact (target rows are not re-normalized, a rotation
    already preserves unit norms); with noise, rows are re-unit-normalized.
    """
    rng = np.random.default_rng(seed)
    x = _source_matrix(n, d, rng)
    rot = random_orthogonal(d, rng)
    perm = window_permutation(n, window, rng)
    target = np.empty((n, d))
    target[perm] = x.vectors @ rot
    if noise > 0.0:
        target = target + noise * rng.standard_normal(target.shape)
        target = _unit_rows(target, "noise")
    y = EmbeddingMatrix([f"t{i:05d}" for i in range(n)], target)
    return x, y, perm, rot


def make_outlier_pair(
    n: int,
    d: int,
    seed: int,
    outlier_frac: float = 0.1,
    noise: float = 0.0,
    window: int = 100,
) -> tuple[EmbeddingMatrix, EmbeddingMatrix, np.ndarray, np.ndarray, np.ndarray]:
    """Rotation pair plus target-only outlier rows scattered through the ranks.

    Returns (X, Y, perm, R, outlier_positions) where Y has
    ``n + round(n * outlier_frac)`` rows; ``perm[i]`` is the target row of
    source word i and ``outlier_positions`` are target rows with no source
    counterpart.
    """
    if not 0.0 <= outlier_frac < 1.0:
        raise ValueError(f"outlier_frac must be in [0, 1), got {outlier_frac}")
    rng = np.random.default_rng(seed)
    x = _source_matrix(n, d, rng)
    rot = random_orthogonal(d, rng)
    n_out = int(round(n * outlier_frac))
    total = n + n_out
    outlier_positions = np.sort(rng.choice(total, size=n_out, replace=False))
    inlier_positions = np.setdiff1d(np.arange(total), outlier_positions)
    perm = inlier_positions[window_permutation(n, window, rng)]

    target = np.empty((total, d))
    target[perm] = x.vectors @ rot
    target[outlier_positions] = _unit_rows(rng.standard_normal((n_out, d)), "outlier")
    if noise > 0.0:
        target[perm] = target[perm] + noise * rng.standard_normal((n, d))
    target = _unit_rows(target, "target")
    y = EmbeddingMatrix([f"t{i:05d}" for i in range(total)], target)
    return x, y, perm, rot, outlier_positions


def permutation_gold(x: EmbeddingMatrix, y: EmbeddingMatrix, perm: np.ndarray) -> BilingualDictionary:
    return BilingualDictionary({x.vocab[i]: {y.vocab[perm[i]]} for i in range(len(perm))})


def p_at_1_against_permutation(
    x: EmbeddingMatrix,
    y: EmbeddingMatrix,
    q: OrthogonalMap,
    perm: np.ndarray,
    method: str = "nn",
    k: int = 10,
    source_count: int | None = None,
) -> float:
    """P@1 of retrieval under map ``q`` against the known permutation.

    Scoring goes through the same evaluation path as dictionary-based
    evaluation; ``method`` picks plain cosine ("nn") or "csls" retrieval.
    """
    m = len(perm) if source_count is None else source_count
    mapped = x.vectors[:m] @ q.q
    if method == "nn":
        top1 = nn_retrieve(mapped, y.vectors)
    elif method == "csls":
        top1 = csls_retrieve(mapped, y.vectors, k)
    else:
        raise ValueError(f"unknown retrieval method {method!r}")
    predictions = {x.vocab[i]: y.vocab[top1[i]] for i in range(m)}
    gold = BilingualDictionary({x.vocab[i]: {y.vocab[perm[i]]} for i in range(m)})
    report = evaluate_p_at_1(predictions, gold)
    assert report.precision_at_1 is not None
    return report.precision_at_1
