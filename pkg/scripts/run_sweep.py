"""Replicated simulation sweep with per-cell median tables.

Default cells: v=2 GRS over the desk n list, v in {1.1, 4} at n=1024, and
ROS/SUB at n=1024.  Writes results.csv and summary.json to --out.
"""
import argparse
import logging
import time

from kpflm.evaluation import DESK_N_LIST, PAPER_N_LIST, ExperimentConfig, medians, run_experiment, write_results

METRICS = ("gamma_sq_error", "slope_pred_error", "response_pred_error")


def configs(args):
    n_list = PAPER_N_LIST if args.full_scale else DESK_N_LIST
    reps = args.replicates or (50 if args.full_scale else 20)
    common = dict(example_id=args.example, replicates=reps, seed=args.seed, threads=args.threads,
                  full_scale=args.full_scale)
    yield ExperimentConfig(v_list=(2.0,), n_list=n_list, sketch_kinds=("grs",), **common)
    yield ExperimentConfig(v_list=(1.1, 4.0), n_list=(args.mid_n,), sketch_kinds=("grs",), **common)
    yield ExperimentConfig(v_list=(2.0,), n_list=(args.mid_n,), sketch_kinds=("ros", "sub"), **common)


def table(records):
    cells = sorted({(r.v, r.n, r.sketch_kind) for r in records})
    print(f"{'v':>5} {'n':>6} {'sketch':>6} " + " ".join(f"{m:>20}" for m in METRICS))
    for v, n, kind in cells:
        vals = [medians(records, m, v=v, n=n, sketch_kind=kind) for m in METRICS]
        print(f"{v:5.1f} {n:6d} {kind:>6} " + " ".join(f"{x:20.6g}" for x in vals))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--example", type=int, default=1, choices=(1, 2))
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--mid-n", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--out", default="sweep_out")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING)
    t0 = time.perf_counter()
    records = []
    for cfg in configs(args):
        records += run_experiment(cfg)
    write_results(records, args.out)
    table(records)
    print(f"{len(records)} records in {time.perf_counter() - t0:.0f}s -> {args.out}")


if __name__ == "__main__":
    main()
