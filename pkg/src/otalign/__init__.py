"""Unsupervised word-embedding alignment via relaxed optimal-transport matching."""

from .align import AlignConfig, TrainState, align, initialize, refine, rmp_step
from .embeddings import (
    Batch,
    EmbeddingMatrix,
    load_fasttext_vec,
    normalize,
    sample_batch,
)
from .mapping import (
    OrthogonalMap,
    gradient_step,
    procrustes,
    project_orthogonal,
    read_map,
    write_map,
)
from .ot import (
    CostMatrix,
    MarginalWeights,
    SinkhornParams,
    TransportPlan,
    exact_emd_bruteforce,
    kl_divergence,
    rcsls_cost,
    sinkhorn_balanced,
    sinkhorn_generalized,
    squared_euclidean_cost,
    transport_cost,
)
from .retrieval import (
    BilingualDictionary,
    EvalReport,
    csls_retrieve,
    evaluate_p_at_1,
    induce_lexicon,
    load_muse_dictionary,
    nn_retrieve,
    write_muse_dictionary,
)

__version__ = "0.1.0"

__all__ = [
    "AlignConfig",
    "Batch",
    "BilingualDictionary",
    "CostMatrix",
    "EmbeddingMatrix",
    "EvalReport",
    "MarginalWeights",
    "OrthogonalMap",
    "SinkhornParams",
    "TrainState",
    "TransportPlan",
    "align",
    "csls_retrieve",
    "evaluate_p_at_1",
    "exact_emd_bruteforce",
    "gradient_step",
    "induce_lexicon",
    "initialize",
    "kl_divergence",
    "load_fasttext_vec",
    "load_muse_dictionary",
    "nn_retrieve",
    "normalize",
    "procrustes",
    "project_orthogonal",
    "rcsls_cost",
    "read_map",
    "refine",
    "rmp_step",
    "sample_batch",
    "sinkhorn_balanced",
    "sinkhorn_generalized",
    "squared_euclidean_cost",
    "transport_cost",
    "write_map",
    "write_muse_dictionary",
]
