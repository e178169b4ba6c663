"""Cost matrices and entropic optimal-transport solvers.

Two solvers share one scaling-iteration core: the balanced solver enforces
both marginals exactly (in the limit), and the generalized solver dampens
each scaling update by lambda/(epsilon + lambda), which relaxes the marginal
constraints into KL penalties and lets mass vanish rather than be matched at
high cost.

Numerics: iterations run on scaling vectors with periodic absorption of
large factors into log-domain potentials (the kernel is rebuilt from the
potentials, never from the raw cost), and fall back to pure log-sum-exp
sweeps whenever the cost range over epsilon would underflow the plain
kernel.  Either path survives epsilon down to 1e-3 and below in float64.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

COST_METRICS = ("squared_euclidean", "rcsls")

# |C|/eps beyond which the plain kernel exp(-C/eps) is not trusted
_PLAIN_LIMIT = 350.0
# |log u| beyond which scaling factors are absorbed into the potentials
_ABSORB_LIMIT = 150.0
_BRUTEFORCE_MAX = 8


class _NumericalBreakdown(Exception):
    """Plain-kernel path hit a zero or non-finite intermediate; retry in log domain."""


@dataclass
class CostMatrix:
    """Dense pairwise-cost matrix tagged with the metric that produced it."""

    values: np.ndarray
    metric_tag: str = "squared_euclidean"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"cost matrix must be 2-dimensional, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("cost matrix contains non-finite entries")
        if self.metric_tag not in COST_METRICS:
            raise ValueError(f"unknown metric tag {self.metric_tag!r}")
        if self.metric_tag == "squared_euclidean" and np.any(self.values < 0):
            raise ValueError("squared-euclidean costs must be nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class MarginalWeights:
    """Strictly positive source/target masses, each summing to one."""

    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.nu = np.asarray(self.nu, dtype=np.float64)
        for name, w in (("mu", self.mu), ("nu", self.nu)):
            if w.ndim != 1 or w.shape[0] < 1:
                raise ValueError(f"{name} must be a nonempty vector")
            if np.any(w <= 0):
                raise ValueError(f"{name} entries must be strictly positive")
            if abs(float(w.sum()) - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1, got {float(w.sum())!r}")

    @classmethod
    def uniform(cls, i: int, j: int) -> "MarginalWeights":
        return cls(np.full(i, 1.0 / i), np.full(j, 1.0 / j))


@dataclass
class TransportPlan:
    """Nonnegative transport matrix plus convergence and marginal diagnostics."""

    values: np.ndarray
    converged: bool
    iterations_used: int
    marginal_row: np.ndarray
    marginal_col: np.ndarray

    @classmethod
    def from_values(cls, values: np.ndarray, converged: bool, iterations_used: int) -> "TransportPlan":
        values = np.asarray(values, dtype=np.float64)
        if np.any(values < 0):
            raise ValueError("transport plan has negative entries")
        return cls(values, converged, iterations_used, values.sum(axis=1), values.sum(axis=0))

    @property
    def total_mass(self) -> float:
        return float(self.marginal_row.sum())


@dataclass
class SinkhornParams:
    """Solver knobs: entropy regularizer, KL relaxation coefficients, stopping rule."""

    epsilon: float = 0.05
    lambda1: float = 1e-3
    lambda2: float = 1e-3
    tol: float = 1e-6
    max_iter: int = 1000

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda coefficients must be nonnegative")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")


def squared_euclidean_cost(a: np.ndarray, b: np.ndarray) -> CostMatrix:
    """Pairwise squared Euclidean distances between rows of ``a`` and rows of ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return CostMatrix(sq, "squared_euclidean")


def _topk_row_mean(sims: np.ndarray, k: int) -> np.ndarray:
    """Mean of the k largest entries of each row."""
    n = sims.shape[1]
    if k >= n:
        return sims.mean(axis=1)
    part = np.partition(sims, n - k, axis=1)[:, n - k :]
    return part.mean(axis=1)


def rcsls_cost(a: np.ndarray, b: np.ndarray, k: int = 10) -> CostMatrix:
    """Relaxed-CSLS transport cost between unit-normalized row sets.

    cost[i, j] = -2 a_i.b_j + mean of a_i's k largest dots into b
                 + mean of b_j's k largest dots into a

    Neighborhood terms penalize hubs: a row that is close to everything gets
    a uniform cost offset, so only genuinely mutual similarity stays cheap.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if k < 1 or k > min(a.shape[0], b.shape[0]):
        raise ValueError(f"k={k} out of range for shapes {a.shape}, {b.shape}")
    for name, m in (("a", a), ("b", b)):
        if np.any(np.abs(np.linalg.norm(m, axis=1) - 1.0) > 1e-6):
            raise ValueError(f"rows of {name} must be unit-normalized")
    sims = a @ b.T
    r_a = _topk_row_mean(sims, k)
    r_b = _topk_row_mean(sims.T, k)
    return CostMatrix(-2.0 * sims + r_a[:, None] + r_b[None, :], "rcsls")


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Generalized KL divergence sum(p log(p/q) - p + q), with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    if np.any(p < 0):
        raise ValueError("p has a negative entry")
    if np.any(q <= 0):
        raise ValueError("q has a nonpositive entry")
    mask = p > 0
    val = float(np.sum(p[mask] * np.log(p[mask] / q[mask])) - p.sum() + q.sum())
    return max(val, 0.0)


def transport_cost(d: CostMatrix | np.ndarray, plan: TransportPlan | np.ndarray) -> float:
    """Matrix inner product <D, P>."""
    dv = d.values if isinstance(d, CostMatrix) else np.asarray(d, dtype=np.float64)
    pv = plan.values if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    return float(np.sum(dv * pv))


def _cost_values(d: CostMatrix | np.ndarray) -> np.ndarray:
    v = d.values if isinstance(d, CostMatrix) else np.asarray(d, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"cost matrix must be 2-dimensional, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cost matrix contains non-finite entries")
    return v


def _logsumexp_rows(m: np.ndarray) -> np.ndarray:
    shift = np.max(m, axis=1)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    return np.log(np.exp(m - shift[:, None]).sum(axis=1)) + shift


def _solve_log(c, logmu, lognu, eps, k1, k2, tol, max_iter, marginal_mode):
    """Pure log-sum-exp sweeps.  Slow but safe for any cost range and epsilon."""
    g = -c / eps
    mu = np.exp(logmu)
    nu = np.exp(lognu)
    phi = np.zeros_like(logmu)
    psi = np.zeros_like(lognu)
    col = None
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        lse_rows = _logsumexp_rows(g + psi[None, :])
        if marginal_mode and it > 1:
            err = max(
                float(np.max(np.abs(np.exp(phi + lse_rows) - mu))),
                float(np.max(np.abs(col - nu))),
            )
            if err < tol:
                converged = True
                break
        phi_prev, psi_prev = phi, psi
        phi = k1 * (logmu - lse_rows)
        lse_cols = _logsumexp_rows((g + phi[:, None]).T)
        psi = k2 * (lognu - lse_cols)
        col = np.exp(psi + lse_cols)
        iterations = it
        if not marginal_mode:
            err = max(
                float(np.max(np.abs(phi - phi_prev))),
                float(np.max(np.abs(psi - psi_prev))),
            )
            if err < tol:
                converged = True
                break
    plan = np.exp(g + phi[:, None] + psi[None, :])
    return plan, iterations, converged


def _solve_scaling(c, logmu, lognu, eps, k1, k2, tol, max_iter, marginal_mode):
    """Matvec scaling sweeps with absorption of large factors into potentials."""
    mu = np.exp(logmu)
    nu = np.exp(lognu)
    i_n, j_n = c.shape
    alpha = np.zeros(i_n)
    beta = np.zeros(j_n)
    kern = np.exp(-c / eps)
    u = np.ones(i_n)
    v = np.ones(j_n)
    prev_logu = np.zeros(i_n)
    prev_logv = np.zeros(j_n)
    ktu = None
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        kv = kern @ v
        if marginal_mode and it > 1:
            err = max(
                float(np.max(np.abs(u * kv - mu))),
                float(np.max(np.abs(v * ktu - nu))),
            )
            if err < tol:
                converged = True
                break
        a_eps = alpha / eps
        b_eps = beta / eps
        if k1 > 0.0:
            with np.errstate(divide="ignore"):
                log_kv = np.log(kv)
            if not np.all(np.isfinite(log_kv)):
                raise _NumericalBreakdown
            log_u = k1 * (logmu + a_eps - log_kv) - a_eps
        else:
            log_u = -a_eps
        u = np.exp(log_u)
        ktu = kern.T @ u
        if k2 > 0.0:
            with np.errstate(divide="ignore"):
                log_ktu = np.log(ktu)
            if not np.all(np.isfinite(log_ktu)):
                raise _NumericalBreakdown
            log_v = k2 * (lognu + b_eps - log_ktu) - b_eps
        else:
            log_v = -b_eps
        v = np.exp(log_v)
        iterations = it
        logu_full = log_u + a_eps
        logv_full = log_v + b_eps
        if not marginal_mode:
            err = max(
                float(np.max(np.abs(logu_full - prev_logu))),
                float(np.max(np.abs(logv_full - prev_logv))),
            )
            if err < tol:
                converged = True
                break
        prev_logu, prev_logv = logu_full, logv_full
        if max(float(np.max(np.abs(log_u))), float(np.max(np.abs(log_v)))) > _ABSORB_LIMIT:
            alpha = alpha + eps * log_u
            beta = beta + eps * log_v
            expo = (alpha[:, None] + beta[None, :] - c) / eps
            if float(expo.max()) > 700.0:
                raise _NumericalBreakdown
            kern = np.exp(expo)
            u = np.ones(i_n)
            v = np.ones(j_n)
            ktu = kern.T @ u

    with np.errstate(divide="ignore"):
        log_plan = (alpha[:, None] + beta[None, :] - c) / eps + np.log(u)[:, None] + np.log(v)[None, :]
    plan = np.exp(log_plan)
    if not np.all(np.isfinite(plan)):
        raise _NumericalBreakdown
    return plan, iterations, converged


def _solve(c, w, params, k1, k2, marginal_mode):
    if c.shape != (w.mu.shape[0], w.nu.shape[0]):
        raise ValueError(
            f"cost shape {c.shape} does not match marginals ({w.mu.shape[0]}, {w.nu.shape[0]})"
        )
    logmu = np.log(w.mu)
    lognu = np.log(w.nu)
    args = (c, logmu, lognu, params.epsilon, k1, k2, params.tol, params.max_iter, marginal_mode)
    scale = float(np.max(np.abs(c))) / params.epsilon if c.size else 0.0
    spread = float(c.max() - c.min()) / params.epsilon if c.size else 0.0
    if max(scale, spread) <= _PLAIN_LIMIT:
        try:
            return _solve_scaling(*args)
        except _NumericalBreakdown:
            pass
    return _solve_log(*args)


def sinkhorn_balanced(
    d: CostMatrix | np.ndarray, w: MarginalWeights, params: SinkhornParams
) -> TransportPlan:
    """Entropic OT plan whose marginals match ``w`` within ``params.tol`` (L-inf).

    Returns the best iterate with ``converged=False`` if ``max_iter`` runs out.
    """
    c = _cost_values(d)
    plan, iters, converged = _solve(c, w, params, 1.0, 1.0, marginal_mode=True)
    return TransportPlan.from_values(plan, converged, iters)


def sinkhorn_generalized(
    d: CostMatrix | np.ndarray, w: MarginalWeights, params: SinkhornParams
) -> TransportPlan:
    """KL-relaxed entropic plan via damped scaling updates.

    Each half-update is raised to lambda/(epsilon + lambda); lambda -> inf
    recovers the balanced solver and lambda -> 0 lets all mass vanish on
    strictly positive costs.  Scaling vectors start at all-ones.  Convergence
    is declared when successive scaling vectors move less than ``params.tol``
    in L-inf on the log scale.
    """
    c = _cost_values(d)
    k1 = params.lambda1 / (params.epsilon + params.lambda1)
    k2 = params.lambda2 / (params.epsilon + params.lambda2)
    plan, iters, converged = _solve(c, w, params, k1, k2, marginal_mode=False)
    return TransportPlan.from_values(plan, converged, iters)


def exact_emd_bruteforce(d: CostMatrix | np.ndarray) -> tuple[float, tuple[int, ...]]:
    """Exact uniform-marginal OT on a small square cost matrix by enumeration.

    Returns the minimizing permutation and its average cost
    ``(1/n) * sum_i D[i, perm[i]]``; ties go to the lexicographically
    smallest permutation.  Guarded to n <= 8 (factorial blowup).
    """
    c = _cost_values(d)
    i_n, j_n = c.shape
    if i_n != j_n:
        raise ValueError(f"brute-force oracle needs a square matrix, got {c.shape}")
    if i_n > _BRUTEFORCE_MAX:
        raise ValueError(f"brute-force oracle limited to n <= {_BRUTEFORCE_MAX}, got {i_n}")
    best_cost = math.inf
    best_perm: tuple[int, ...] = ()
    for perm in itertools.permutations(range(i_n)):
        cost = sum(c[i, j] for i, j in enumerate(perm)) / i_n
        if cost < best_cost:
            best_cost = cost
            best_perm = perm
    return float(best_cost), best_perm
