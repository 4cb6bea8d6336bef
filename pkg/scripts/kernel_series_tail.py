"""Gap between the closed-form Bernoulli kernel and its truncated cosine series.

Prints the worst gap over random pairs and on a dense grid, the analytic tail
bound ``2/pi^4 * sum_{k>L} k^-4``, and the share of [0,1]^2 above a threshold.
"""
import argparse
import math

import numpy as np

from kpflm.kernel import BERNOULLI


def series(s, t, terms):
    k = np.arange(1, terms + 1)
    return (2 * np.cos(np.pi * np.outer(s, k)) * np.cos(np.pi * np.outer(t, k)) / (k * np.pi) ** 4).sum(axis=1)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--terms", type=int, default=50)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--threshold", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()
    rng = np.random.default_rng(args.seed)
    s, t = rng.uniform(0, 1, args.pairs), rng.uniform(0, 1, args.pairs)
    gap = np.abs(BERNOULLI(s, t) - series(s, t, args.terms))
    g = (np.arange(400) + 0.5) / 400
    ss, tt = np.meshgrid(g, g)
    dense = np.abs(BERNOULLI(ss.ravel(), tt.ravel()) - series(ss.ravel(), tt.ravel(), args.terms))
    bound = 2 / math.pi**4 * sum(k**-4.0 for k in range(args.terms + 1, 1_000_000))
    print(f"terms={args.terms}")
    print(f"random pairs: max gap {gap.max():.3e}")
    print(f"dense grid:   max gap {dense.max():.3e}, share above {args.threshold:g}: {np.mean(dense > args.threshold):.1%}")
    print(f"tail bound:   {bound:.3e}")
    need = next(L for L in range(args.terms, 10_000) if 2 / math.pi**4 * sum(k**-4.0 for k in range(L + 1, 200_000)) <= args.threshold)
    print(f"terms needed for a uniform bound of {args.threshold:g}: {need}")


if __name__ == "__main__":
    main()
