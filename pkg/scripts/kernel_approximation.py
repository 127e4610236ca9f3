"""Fit exponential features to a Gaussian kernel on random unit vectors and report the error.

    python3 scripts/kernel_approximation.py --features 128 --alpha 0.5 --iterations 30000
"""
import argparse
import time

import numpy as np

from ckn.trainer import SgdConfig, TrainPairSet, gaussian_kernel, train_layer


def unit_rows(rng, n, q):
    X = rng.standard_normal((n, q))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("--dim", type=int, default=27)
    ap.add_argument("--features", type=int, default=128)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--pool", type=int, default=100_000)
    ap.add_argument("--iterations", type=int, default=30_000)
    ap.add_argument("--probe", type=int, default=200)
    ap.add_argument("--decay-every", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    pool = TrainPairSet(unit_rows(rng, args.pool, args.dim), args.seed)
    cfg = SgdConfig(iterations=args.iterations, probe_iterations=args.probe,
                    decay_every=args.decay_every, seed=args.seed)
    t0 = time.time()
    res = train_layer(pool, args.features, args.alpha, cfg)
    x, xp = unit_rows(rng, 10_000, args.dim), unit_rows(rng, 10_000, args.dim)
    W, b = res.params.W.astype(float), res.params.b.astype(float)
    approx = (np.exp(x @ W + b) * np.exp(xp @ W + b)).sum(1)
    mae = np.abs(approx - gaussian_kernel(x, xp, args.alpha)).mean()
    print(f"lr={res.lr:.4g} init={res.init_objective:.5g} final={res.final_objective:.5g} "
          f"reduction={1 - res.final_objective / res.init_objective:.3%} mae={mae:.4f} "
          f"seconds={time.time() - t0:.0f}")


if __name__ == "__main__":
    main()
