"""Command-line front end: align | refine | evaluate | induce | solve-ot.

Numeric reports are JSON lines and matrices are plain text so runs can be
diffed and composed file-wise.  Configuration comes from flags only; the run
report echoes every resolved value, which is enough to reproduce a run.

numpy-backed modules are imported inside the command handlers, after the
--threads flag has pinned the BLAS thread-pool environment; --threads 1
guarantees bitwise determinism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

_THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


@dataclass
class RunReport:
    """Everything needed to audit or reproduce a pipeline run."""

    config: dict
    wall_time_seconds: float
    loss_trace_tail: list[float]
    output_paths: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "wall_time_seconds": self.wall_time_seconds,
                "loss_trace_tail": self.loss_trace_tail,
                "output_paths": self.output_paths,
            },
            indent=2,
        )


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise ValueError(f"--threads must be positive, got {threads}")
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(threads)


def _add_common_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-words", type=int, default=200000,
                   help="load at most this many words per language (default 200000)")
    p.add_argument("--threads", type=int, default=None,
                   help="BLAS thread count; 1 guarantees bitwise determinism")


def _add_align_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=0.05, help="entropy regularizer")
    p.add_argument("--lambda1", type=float, default=1e-3, help="source KL relaxation")
    p.add_argument("--lambda2", type=float, default=1e-3, help="target KL relaxation")
    p.add_argument("--tol", type=float, default=1e-6, help="solver convergence threshold")
    p.add_argument("--max-iter", type=int, default=1000, help="solver iteration cap")
    p.add_argument("--batch", type=int, default=500, help="initial batch size")
    p.add_argument("--iters", type=int, default=2000, help="iterations in the first epoch")
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--init-words", type=int, default=2500,
                   help="head words used for initialization")
    p.add_argument("--pool", type=int, default=20000,
                   help="batches are drawn from this many head words")
    p.add_argument("--lr", type=float, default=0.25, help="gradient step size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", choices=("sqeuclidean", "rcsls"), default="rcsls",
                   help="batch transport cost")
    p.add_argument("--rcsls-k", type=int, default=10)
    p.add_argument("--unidirectional", action="store_true",
                   help="disable backward (target-to-source) updates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otalign",
        description="Align two monolingual word-embedding spaces without parallel data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="train an orthogonal map from two .vec files")
    p.add_argument("src", help="source-language .vec file")
    p.add_argument("tgt", help="target-language .vec file")
    p.add_argument("--out", required=True, help="path for the map text file")
    p.add_argument("--report", default=None,
                   help="path for the run-report JSON (default: <out>.report.json)")
    _add_align_flags(p)
    _add_common_io_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("refine", help="mutual-neighbor refinement of a trained map")
    p.add_argument("src")
    p.add_argument("tgt")
    p.add_argument("map", help="map text file produced by align")
    p.add_argument("--out", required=True)
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--dict-size", type=int, default=10000)
    p.add_argument("--csls-k", type=int, default=10)
    _add_common_io_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="P@1 of a map against a gold dictionary")
    p.add_argument("src")
    p.add_argument("tgt")
    p.add_argument("map")
    p.add_argument("dictionary", help="two-column gold dictionary")
    p.add_argument("--csls-k", type=int, default=10)
    _add_common_io_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("induce", help="write a translation lexicon for the head words")
    p.add_argument("src")
    p.add_argument("tgt")
    p.add_argument("map")
    p.add_argument("--out", required=True)
    p.add_argument("--source-count", type=int, default=10000)
    p.add_argument("--csls-k", type=int, default=10)
    _add_common_io_flags(p)
    p.set_defaults(func=cmd_induce)

    p = sub.add_parser("solve-ot", help="run the relaxed solver on a plain-text cost matrix")
    p.add_argument("cost", help="text file: one row of decimals per line")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--lambda1", type=float, default=1e-3)
    p.add_argument("--lambda2", type=float, default=1e-3)
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=None,
                   help="set both relaxation coefficients at once")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_solve_ot)

    return parser


def _load_normalized(path: str, max_words: int):
    from . import embeddings

    return embeddings.normalize(embeddings.load_fasttext_vec(path, max_words))


def _config_from_args(args: argparse.Namespace):
    from .align import AlignConfig

    return AlignConfig(
        epsilon=args.epsilon,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        tol=args.tol,
        max_iter=args.max_iter,
        batch_size_init=args.batch,
        iters_per_epoch_init=args.iters,
        epochs=args.epochs,
        init_words=args.init_words,
        train_pool=args.pool,
        lr=args.lr,
        seed=args.seed,
        cost_metric="squared_euclidean" if args.metric == "sqeuclidean" else args.metric,
        rcsls_k=args.rcsls_k,
        bidirectional=not args.unidirectional,
    )


def cmd_align(args: argparse.Namespace) -> int:
    from .align import align
    from .mapping import write_map

    start = time.monotonic()
    cfg = _config_from_args(args)
    x = _load_normalized(args.src, args.max_words)
    y = _load_normalized(args.tgt, args.max_words)
    state = align(x, y, cfg)
    write_map(args.out, state.q)
    report_path = args.report or args.out + ".report.json"
    report = RunReport(
        config=asdict(cfg),
        wall_time_seconds=time.monotonic() - start,
        loss_trace_tail=state.loss_trace[-20:],
        output_paths={"map": args.out, "report": report_path},
    )
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    print(json.dumps({"map": args.out, "report": report_path,
                      "iterations": state.iteration}))
    return 0


def cmd_refine(args: argparse.Namespace) -> int:
    from .align import refine
    from .mapping import read_map, write_map

    x = _load_normalized(args.src, args.max_words)
    y = _load_normalized(args.tgt, args.max_words)
    q = read_map(args.map)
    _check_dim(q, x)
    refined = refine(x, y, q, rounds=args.rounds, dict_size=args.dict_size,
                     csls_k=args.csls_k)
    write_map(args.out, refined)
    print(json.dumps({"map": args.out, "rounds": args.rounds}))
    return 0


def _check_dim(q, emb) -> None:
    if q.d != emb.d:
        raise ValueError(f"map dimension {q.d} does not match embedding dimension {emb.d}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .mapping import read_map
    from .retrieval import csls_retrieve, evaluate_p_at_1, load_muse_dictionary

    x = _load_normalized(args.src, args.max_words)
    y = _load_normalized(args.tgt, args.max_words)
    q = read_map(args.map)
    _check_dim(q, x)
    _check_dim(q, y)
    gold = load_muse_dictionary(args.dictionary)
    index = x.word_index()
    present = [w for w in gold.entries if w in index]
    predictions: dict[str, str] = {}
    if present:
        rows = x.vectors[[index[w] for w in present]] @ q.q
        top1 = csls_retrieve(rows, y.vectors, args.csls_k)
        predictions = {w: y.vocab[top1[i]] for i, w in enumerate(present)}
    report = evaluate_p_at_1(predictions, gold)
    print(report.to_json_line())
    return 0


def cmd_induce(args: argparse.Namespace) -> int:
    from .mapping import read_map
    from .retrieval import induce_lexicon, write_muse_dictionary

    x = _load_normalized(args.src, args.max_words)
    y = _load_normalized(args.tgt, args.max_words)
    q = read_map(args.map)
    _check_dim(q, x)
    count = min(args.source_count, x.n)
    lexicon = induce_lexicon(x, y, q, count, k=args.csls_k)
    write_muse_dictionary(args.out, lexicon)
    print(json.dumps({"lexicon": args.out, "entries": len(lexicon)}))
    return 0


def _read_cost_matrix(path: str):
    import numpy as np

    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric cost entry") from exc
            if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                raise ValueError(
                    f"{path}:{lineno}: ragged row, expected {len(rows[0])} values"
                )
    if not rows:
        raise ValueError(f"{path}: empty cost matrix")
    return np.array(rows, dtype=np.float64)


def cmd_solve_ot(args: argparse.Namespace) -> int:
    from .ot import (
        MarginalWeights,
        SinkhornParams,
        sinkhorn_generalized,
        transport_cost,
    )

    cost = _read_cost_matrix(args.cost)
    lam1 = args.lam if args.lam is not None else args.lambda1
    lam2 = args.lam if args.lam is not None else args.lambda2
    params = SinkhornParams(epsilon=args.epsilon, lambda1=lam1, lambda2=lam2,
                            tol=args.tol, max_iter=args.max_iter)
    weights = MarginalWeights.uniform(cost.shape[0], cost.shape[1])
    plan = sinkhorn_generalized(cost, weights, params)
    for row in plan.values:
        print(" ".join(f"{v:.12g}" for v in row))
    print(
        f"cost={transport_cost(cost, plan):.12g} "
        f"converged={str(plan.converged).lower()} iters={plan.iterations_used}"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_threads(getattr(args, "threads", None))
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
