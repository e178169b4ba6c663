"""Orthogonal-map estimation: closed-form Procrustes, projection, gradient steps.

The map is the artifact exchanged between pipeline stages; it is serialized
as plain text (first line "d", then d rows of d decimals) so runs compose
file-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ot import TransportPlan

ORTHOGONALITY_TOL = 1e-6


@dataclass
class OrthogonalMap:
    """A d x d matrix constrained to the orthogonal group.

    Orthogonality is validated on every construction, so each pipeline update
    re-checks the constraint by building a fresh map.
    """

    q: np.ndarray
    rank_deficient: bool = False

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.q.ndim != 2 or self.q.shape[0] != self.q.shape[1]:
            raise ValueError(f"map must be square, got shape {self.q.shape}")
        if not np.all(np.isfinite(self.q)):
            raise ValueError("map contains non-finite entries")
        gram_err = float(np.max(np.abs(self.q.T @ self.q - np.eye(self.q.shape[0]))))
        if gram_err > ORTHOGONALITY_TOL:
            raise ValueError(f"matrix is not orthogonal: max |Q'Q - I| = {gram_err:.3e}")

    @property
    def d(self) -> int:
        return self.q.shape[0]

    @classmethod
    def identity(cls, d: int) -> "OrthogonalMap":
        return cls(np.eye(d))

    def transpose(self) -> "OrthogonalMap":
        return OrthogonalMap(self.q.T.copy(), rank_deficient=self.rank_deficient)


def procrustes(x: np.ndarray, y: np.ndarray) -> OrthogonalMap:
    """Orthogonal map minimizing ||X Q - Y||_F, from the SVD of X'Y.

    A rank-deficient cross-covariance still yields a valid map but a
    non-unique one; that case is flagged, not raised.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input to procrustes")
    cross = x.T @ y
    u, s, vt = np.linalg.svd(cross)
    rank_deficient = bool(s[-1] <= max(cross.shape) * np.finfo(np.float64).eps * s[0]) or s[0] == 0.0
    return OrthogonalMap(u @ vt, rank_deficient=rank_deficient)


def project_orthogonal(m: np.ndarray) -> OrthogonalMap:
    """Nearest orthogonal matrix in Frobenius norm, via SVD."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"projection needs a square matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite input to project_orthogonal")
    u, s, vt = np.linalg.svd(m)
    rank_deficient = bool(s[-1] <= max(m.shape) * np.finfo(np.float64).eps * s[0]) or s[0] == 0.0
    return OrthogonalMap(u @ vt, rank_deficient=rank_deficient)


def gradient_step(
    q: OrthogonalMap,
    xb: np.ndarray,
    yb: np.ndarray,
    plan: TransportPlan | np.ndarray,
    lr: float,
) -> OrthogonalMap:
    """One projected gradient step on ||Xb Q - P Yb||_F^2 / b.

    The gradient carries a 1/b factor so the learning rate is batch-size
    independent; the plan is consumed exactly as the solver returned it
    (no renormalization, which would undo the relaxation).
    """
    if lr < 0:
        raise ValueError(f"learning rate must be nonnegative, got {lr}")
    xb = np.asarray(xb, dtype=np.float64)
    yb = np.asarray(yb, dtype=np.float64)
    p = plan.values if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    b = xb.shape[0]
    if xb.ndim != 2 or yb.ndim != 2 or xb.shape[1] != q.d or yb.shape[1] != q.d:
        raise ValueError(f"batch shapes {xb.shape}, {yb.shape} do not fit map d={q.d}")
    if p.shape != (xb.shape[0], yb.shape[0]):
        raise ValueError(f"plan shape {p.shape} does not match batches")
    if lr == 0.0:
        return q
    grad = (2.0 / b) * xb.T @ (xb @ q.q - p @ yb)
    return project_orthogonal(q.q - lr * grad)


def write_map(path: str, m: OrthogonalMap) -> None:
    """Serialize as text: first line d, then d rows of d decimals (exact repr)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{m.d}\n")
        for row in m.q:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_map(path: str) -> OrthogonalMap:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        try:
            d = int(header)
        except ValueError as exc:
            raise ValueError(f"{path}: first line must be the dimension, got {header!r}") from exc
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            values = line.split()
            if len(values) != d:
                raise ValueError(f"{path}:{lineno}: expected {d} values, got {len(values)}")
            rows.append([float(v) for v in values])
    if len(rows) != d:
        raise ValueError(f"{path}: expected {d} rows, got {len(rows)}")
    return OrthogonalMap(np.array(rows))
