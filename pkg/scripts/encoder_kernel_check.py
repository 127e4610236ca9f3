"""Train a one-layer model on random maps and compare encoded inner products with the exact kernel."""
import argparse

import numpy as np

from ckn.oracles import encoder_vs_kernel
from ckn.trainer import SgdConfig, sample_pairs, train_layer


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--features", type=int, default=128)
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--pairs", type=int, default=200)
    ap.add_argument("--correlated", action="store_true",
                    help="second map = first map + noise of random strength")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    maps = [rng.standard_normal((6, 6, 2)) for _ in range(2000)]
    pool = sample_pairs(maps, 50_000, 2, seed=args.seed + 1)
    cfg = SgdConfig(iterations=args.iterations, probe_iterations=100, check_every=500,
                    decay_every=2000, validation_pairs=5000, seed=args.seed)
    res = train_layer(pool, args.features, args.alpha, cfg, subpatch=2, subsample=1, beta=1.0,
                      in_channels=2)
    pairs = []
    for _ in range(args.pairs):
        M = rng.standard_normal((6, 6, 2))
        noise = rng.standard_normal((6, 6, 2))
        pairs.append((M, M + rng.uniform(0, 2) * noise if args.correlated else noise))
    print(encoder_vs_kernel(res.params, pairs).to_dict())


if __name__ == "__main__":
    main()
