#!/usr/bin/env python3
"""Benchmark the compiled embedding kernels against the numpy fallback.

Times one training run and a full-entity scoring sweep for both models on
a synthetic graph.  The kernel backend is fixed at import, so the
comparison re-executes this script once per backend:

    python3 benchmarks/bench_kernels.py            # compare both backends
    python3 benchmarks/bench_kernels.py --single   # current backend only
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def run_single(args) -> None:
    from kgic import kernels
    from kgic.kge import KgeConfig, score_tails, train

    rng = np.random.default_rng(0)
    triples = np.stack([
        rng.integers(args.entities, size=args.triples),
        rng.integers(args.relations, size=args.triples),
        rng.integers(args.entities, size=args.triples),
    ], axis=1).astype(np.int64)

    print(f"backend={kernels.BACKEND}  entities={args.entities} relations={args.relations} "
          f"triples={args.triples} dim={args.dim}")
    for model in ("transe", "rotate"):
        cfg = KgeConfig(model=model, dim=args.dim, epochs=args.epochs, lr=0.05,
                        batch_size=args.batch_size, num_negatives=args.negatives, seed=0)
        start = time.perf_counter()
        table, _ = train(cfg, triples, args.entities, args.relations)
        train_s = time.perf_counter() - start

        p = 1 if model == "transe" else 2
        start = time.perf_counter()
        for q in range(args.queries):
            score_tails(table, q % args.entities, q % args.relations, p)
        sweep_s = time.perf_counter() - start

        triples_per_s = args.epochs * args.triples / train_s
        print(f"  {model:7s} train: {train_s:7.2f}s ({triples_per_s:9.0f} triples/s)   "
              f"rank-sweep x{args.queries}: {sweep_s:6.3f}s")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--single", action="store_true", help="run only the active backend")
    parser.add_argument("--entities", type=int, default=5000)
    parser.add_argument("--relations", type=int, default=100)
    parser.add_argument("--triples", type=int, default=50_000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--batch-size", type=int, default=512)
    parser.add_argument("--negatives", type=int, default=8)
    parser.add_argument("--queries", type=int, default=500)
    args = parser.parse_args()

    if args.single:
        run_single(args)
        return 0

    passthrough = [
        f"--{name.replace('_', '-')}={getattr(args, name)}"
        for name in ("entities", "relations", "triples", "dim", "epochs", "batch_size",
                     "negatives", "queries")
    ]
    for pure in ("0", "1"):
        env = dict(os.environ, KGIC_PURE_PYTHON=pure)
        code = subprocess.run(
            [sys.executable, __file__, "--single", *passthrough], env=env
        ).returncode
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
