"""Unsupervised alignment pipeline: head-word initialization, the stochastic
bidirectional relaxed-matching loop, and mutual-neighbor refinement.

One orthogonal map Q is trained for both directions: forward steps match
mapped source batches to target batches, backward steps run the same update
on swapped batches with Q transposed, so X Q tracks Y while Y Q' tracks X.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .embeddings import Batch, EmbeddingMatrix, sample_batch
from .mapping import OrthogonalMap, gradient_step, procrustes
from .ot import (
    COST_METRICS,
    MarginalWeights,
    SinkhornParams,
    rcsls_cost,
    sinkhorn_balanced,
    sinkhorn_generalized,
    squared_euclidean_cost,
    transport_cost,
)
from .retrieval import csls_retrieve


@dataclass
class AlignConfig:
    """Pipeline configuration.

    Schedule defaults: batches start at 500 for 2000 iterations, then the
    batch size doubles and the iteration count quarters each epoch; the
    first 2500 words initialize the map and samples come from the first
    20000 words; both KL relaxation coefficients default to 0.001.
    """

    epsilon: float = 0.05
    lambda1: float = 1e-3
    lambda2: float = 1e-3
    tol: float = 1e-6
    max_iter: int = 1000
    batch_size_init: int = 500
    iters_per_epoch_init: int = 2000
    epochs: int = 4
    init_words: int = 2500
    train_pool: int = 20000
    lr: float = 0.25
    seed: int = 0
    cost_metric: str = "rcsls"
    rcsls_k: int = 10
    bidirectional: bool = True
    init_rounds: int = 30
    init_epsilon_start: float = 1.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")
        if self.cost_metric not in COST_METRICS:
            raise ValueError(f"unknown cost metric {self.cost_metric!r}")
        if self.batch_size_init < 1 or self.iters_per_epoch_init < 1:
            raise ValueError("batch size and iteration count must be positive")
        if self.init_words < 1 or self.train_pool < 1:
            raise ValueError("init_words and train_pool must be positive")
        if self.init_words > self.train_pool:
            raise ValueError(
                f"init_words={self.init_words} exceeds train_pool={self.train_pool}"
            )
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.init_rounds < 0:
            raise ValueError(f"init_rounds must be nonnegative, got {self.init_rounds}")

    def sinkhorn_params(self) -> SinkhornParams:
        return SinkhornParams(
            epsilon=self.epsilon,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            tol=self.tol,
            max_iter=self.max_iter,
        )


@dataclass
class TrainState:
    """Snapshot of the training loop; replaced, never mutated, by each step."""

    q: OrthogonalMap
    epoch: int = 0
    iteration: int = 0
    direction_log: dict[str, int] = field(
        default_factory=lambda: {"forward": 0, "backward": 0}
    )
    loss_trace: list[float] = field(default_factory=list)


_SEED_EPSILON = 0.05
_SEED_SWEEPS = 8


def _clamped_pool(x: EmbeddingMatrix, y: EmbeddingMatrix, cfg: AlignConfig) -> int:
    pool = min(cfg.train_pool, x.n, y.n)
    if pool < cfg.train_pool:
        warnings.warn(f"train_pool clamped from {cfg.train_pool} to {pool}")
    return pool


def _structure_seed(xh: np.ndarray, yh: np.ndarray, cfg: AlignConfig) -> OrthogonalMap:
    """Map seeded from intra-language similarity structure, no correspondence needed.

    The Gram matrices X X' and Y Y' are invariant to any orthogonal transform,
    so a coupling that makes them agree identifies corresponding words before
    a map exists.  Mirror-descent sweeps on the structure objective
    -tr(P' Kx P Ky): each sweep re-solves a balanced entropic matching against
    the cost -Kx P Ky (rescaled to unit range), starting from the uniform
    coupling.  Procrustes on the final barycenters gives the seed map.
    """
    m = xh.shape[0]
    kx = xh @ xh.T
    ky = yh @ yh.T
    coupling = np.full((m, m), 1.0 / (m * m))
    weights = MarginalWeights.uniform(m, m)
    params = SinkhornParams(
        epsilon=_SEED_EPSILON, tol=cfg.tol, max_iter=cfg.max_iter
    )
    for _ in range(_SEED_SWEEPS):
        cost = -kx @ (coupling @ ky)
        cost /= max(float(np.abs(cost).max()), np.finfo(np.float64).tiny)
        coupling = sinkhorn_balanced(cost, weights, params).values
    return procrustes(xh, coupling @ yh * m)


def initialize(x: EmbeddingMatrix, y: EmbeddingMatrix, cfg: AlignConfig) -> OrthogonalMap:
    """Estimate a starting map from the head words of both languages.

    A similarity-structure seed proposes a first map, then the estimate
    alternates a balanced entropic matching of the mapped source heads to the
    target heads with a closed-form Procrustes fit to the barycentric
    targets.  The entropy regularizer anneals geometrically from a diffuse
    start down to the configured value, sharpening the matching as the map
    improves.  Deterministic; no sampling is involved.
    """
    pool = _clamped_pool(x, y, cfg)
    head = min(cfg.init_words, pool)
    if head < cfg.init_words:
        warnings.warn(f"init_words clamped from {cfg.init_words} to {head}")
    if head < x.d:
        raise ValueError(f"init_words={head} is smaller than dimension {x.d}")
    xh = x.vectors[:head]
    yh = y.vectors[:head]
    q = _structure_seed(xh, yh, cfg)
    if cfg.init_rounds == 0:
        return q
    weights = MarginalWeights.uniform(head, head)
    eps_hi = max(cfg.init_epsilon_start, cfg.epsilon)
    if cfg.init_rounds > 1:
        decay = (cfg.epsilon / eps_hi) ** (1.0 / (cfg.init_rounds - 1))
    else:
        decay = 1.0
    eps = eps_hi
    for _ in range(cfg.init_rounds):
        params = SinkhornParams(
            epsilon=eps,
            lambda1=cfg.lambda1,
            lambda2=cfg.lambda2,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
        )
        cost = squared_euclidean_cost(xh @ q.q, yh)
        plan = sinkhorn_balanced(cost, weights, params)
        barycenters = plan.values @ yh * head
        q = procrustes(xh, barycenters)
        eps = max(eps * decay, cfg.epsilon)
    return q


def _batch_cost(mapped: np.ndarray, target: np.ndarray, cfg: AlignConfig):
    if cfg.cost_metric == "rcsls":
        return rcsls_cost(mapped, target, cfg.rcsls_k)
    return squared_euclidean_cost(mapped, target)


def _relaxed_update(q: np.ndarray, source: np.ndarray, target: np.ndarray, cfg: AlignConfig):
    """Relaxed matching of the mapped source batch, then one projected step."""
    cost = _batch_cost(source @ q, target, cfg)
    weights = MarginalWeights.uniform(source.shape[0], target.shape[0])
    plan = sinkhorn_generalized(cost, weights, cfg.sinkhorn_params())
    loss = transport_cost(cost, plan)
    new_q = gradient_step(OrthogonalMap(q), source, target, plan, cfg.lr)
    return new_q.q, loss


def rmp_step(
    state: TrainState, xb: Batch, yb: Batch, cfg: AlignConfig, direction: str
) -> TrainState:
    """One relaxed-matching update of Q in the given direction.

    A backward step is the exact mirror of a forward step: the batches swap
    roles, Q is transposed for the update, and transposed back afterwards.
    """
    if direction == "forward":
        q_new, loss = _relaxed_update(state.q.q, xb.matrix, yb.matrix, cfg)
    elif direction == "backward":
        qt_new, loss = _relaxed_update(state.q.q.T, yb.matrix, xb.matrix, cfg)
        q_new = qt_new.T
    else:
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    log = dict(state.direction_log)
    log[direction] += 1
    return TrainState(
        q=OrthogonalMap(q_new),
        epoch=state.epoch,
        iteration=state.iteration + 1,
        direction_log=log,
        loss_trace=state.loss_trace + [loss],
    )


def align(x: EmbeddingMatrix, y: EmbeddingMatrix, cfg: AlignConfig) -> TrainState:
    """Initialize, then run the full stochastic alternating loop.

    Epoch e uses batch size ``batch_size_init * 2**e`` (clamped to the pool)
    for ``max(1, iters_per_epoch_init // 4**e)`` iterations.  Each iteration
    draws one batch per language from the head pool and flips a seeded coin
    for the update direction (always forward when bidirectional is off).
    """
    state = TrainState(q=initialize(x, y, cfg))
    rng = np.random.default_rng(cfg.seed)
    pool = _clamped_pool(x, y, cfg)
    clamp_warned = False
    for epoch in range(cfg.epochs):
        batch = cfg.batch_size_init * 2**epoch
        if batch > pool:
            if not clamp_warned:
                warnings.warn(f"batch size {batch} clamped to pool {pool}")
                clamp_warned = True
            batch = pool
        iters = max(1, cfg.iters_per_epoch_init // 4**epoch)
        state = replace(state, epoch=epoch)
        for _ in range(iters):
            xb = sample_batch(x, pool, batch, rng)
            yb = sample_batch(y, pool, batch, rng)
            flip = int(rng.integers(0, 2**31))
            if cfg.bidirectional and flip % 2 == 1:
                direction = "backward"
            else:
                direction = "forward"
            state = rmp_step(state, xb, yb, cfg, direction)
    return state


def refine(
    x: EmbeddingMatrix,
    y: EmbeddingMatrix,
    q: OrthogonalMap,
    rounds: int = 5,
    dict_size: int = 10000,
    csls_k: int = 10,
) -> OrthogonalMap:
    """Mutual-CSLS-neighbor refinement of an aligned map.

    Each round pairs head source word i with head target word j when each is
    the other's CSLS top-1 under the current map, then re-solves Procrustes
    on the paired vectors.  An empty mutual dictionary stops early with a
    warning and returns the map unchanged.
    """
    if rounds < 0:
        raise ValueError(f"rounds must be nonnegative, got {rounds}")
    m = min(dict_size, x.n, y.n)
    if m < dict_size:
        warnings.warn(f"dict_size clamped from {dict_size} to {m}")
    for _ in range(rounds):
        mapped = x.vectors[:m] @ q.q
        forward = csls_retrieve(mapped, y.vectors[:m], csls_k)
        backward = csls_retrieve(y.vectors[:m], mapped, csls_k)
        src = np.arange(m)
        mutual = backward[forward] == src
        if not np.any(mutual):
            warnings.warn("no mutual CSLS neighbors; refinement stopped")
            return q
        q = procrustes(x.vectors[src[mutual]], y.vectors[forward[mutual]])
    return q
