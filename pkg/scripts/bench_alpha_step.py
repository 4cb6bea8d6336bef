"""Wall time of the sketched (m x m) alpha step against the full n x n step."""
import argparse
import time

import numpy as np

from kpflm.funcdata import make_grid
from kpflm.kernel import BERNOULLI, build_kc
from kpflm.simgen import SimSpec, generate
from kpflm.sketch import choose_sketch_dim, make_sketch
from kpflm.solver import FitConfig, Problem


def step_time(prob, cfg, reps):
    gamma = np.zeros(prob.p)
    out = []
    for _ in range(reps):
        prob._chol = None  # time the factorization too
        t0 = time.perf_counter()
        prob.alpha_step(gamma, cfg)
        out.append(time.perf_counter() - t0)
    return float(np.median(out))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n-list", default="512,1024,2048,4096")
    p.add_argument("--sketch", default="grs")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--mu2", type=float, default=1e-6)
    args = p.parse_args()
    cfg = FitConfig(mu2=args.mu2)
    print(f"{'n':>6} {'m':>4} {'full_ms':>10} {'sketched_ms':>12} {'ratio':>8}")
    for n in (int(v) for v in args.n_list.split(",")):
        ds, _ = generate(SimSpec(n=n, p=50, seed=n), make_grid(1000))
        kc = build_kc(BERNOULLI, ds, decompose=False)
        m = choose_sketch_dim(n)
        sk = make_sketch(args.sketch, m, n, 0)
        full = step_time(Problem(kc, ds.z, ds.y, None), cfg, args.reps)
        small = step_time(Problem(kc, ds.z, ds.y, sk), cfg, args.reps)
        print(f"{n:6d} {m:4d} {full * 1e3:10.2f} {small * 1e3:12.3f} {full / small:8.0f}")


if __name__ == "__main__":
    main()
