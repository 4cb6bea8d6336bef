"""Command-line entry point: ``kpflm {simulate,fit,cv,statdim,bench}``.

Exit codes: 0 success, 1 usage error, 2 runtime or numerical error.  Logs go
to stderr; data goes to files (``statdim`` prints its small JSON report).
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

from kpflm.errors import DatasetFormatError, InvalidArgumentError, NumericalError
from kpflm.evaluation import DESK_N_LIST, PAPER_N_LIST, ExperimentConfig, run_experiment, write_results
from kpflm.funcdata import atomic_write_text, load_dataset, make_grid, save_dataset
from kpflm.kernel import BERNOULLI, build_kc
from kpflm.simgen import SimSpec, generate
from kpflm.sketch import make_sketch, parse_policy, statistical_dimension
from kpflm.solver import FitConfig, fit
from kpflm.tuning import SketchSpec, cross_validate, make_plan

log = logging.getLogger("kpflm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None


def _sketch_size(text):
    if text == "auto":
        return "cuberoot"
    try:
        m = int(text)
    except ValueError:
        return parse_policy(text)
    if m < 1:
        raise argparse.ArgumentTypeError("--m must be positive")
    return m


def build_parser():
    p = _Parser(prog="kpflm", description="Sketched kernel estimation for the partially functional linear model.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset directory")
    s.add_argument("--example", type=int, choices=(1, 2), default=1)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, default=50)
    s.add_argument("--v", type=float, default=2.0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--grid", type=int, default=1000)
    s.add_argument("--out", required=True)

    def fit_flags(sp):
        sp.add_argument("--data", required=True)
        sp.add_argument("--sketch", choices=("grs", "ros", "sub", "none"), default="grs")
        sp.add_argument("--m", type=_sketch_size, default="cuberoot", help="auto | integer | statdim(c) | statdim_ros(c)")
        sp.add_argument("--sigma", type=float, default=1.0, help="noise scale for statdim sketch policies")
        sp.add_argument("--out", required=True)

    f = sub.add_parser("fit", parents=[common], help="fit one (mu2, lambda) pair")
    fit_flags(f)
    f.add_argument("--mu2", type=float, required=True)
    f.add_argument("--lambda", dest="lam", type=float, required=True)

    c = sub.add_parser("cv", parents=[common], help="5-fold cross-validation over a grid")
    fit_flags(c)
    c.add_argument("--mu2-grid", type=_float_list, default=None)
    c.add_argument("--lambda-grid", type=_float_list, default=None)
    c.add_argument("--folds", type=int, default=5)

    d = sub.add_parser("statdim", parents=[common], help="critical radius and statistical dimension")
    d.add_argument("--data", required=True)
    d.add_argument("--sigma", type=float, default=1.0)

    b = sub.add_parser("bench", parents=[common], help="replicated simulation sweep")
    b.add_argument("--example", type=int, choices=(1, 2), default=1)
    b.add_argument("--v-list", type=_float_list, default=(1.1, 2.0, 4.0))
    b.add_argument("--n-list", type=_int_list, default=None)
    b.add_argument("--sketches", default="grs,ros,sub")
    b.add_argument("--replicates", type=int, default=None)
    b.add_argument("--m-policy", type=_sketch_size, default="cuberoot")
    b.add_argument("--p", type=int, default=50)
    b.add_argument("--grid", type=int, default=1000)
    b.add_argument("--mu2", type=float, default=None, help="fix mu2 (with --lambda) instead of cross-validating")
    b.add_argument("--lambda", dest="lam", type=float, default=None)
    b.add_argument("--test-size", type=int, default=10_000)
    b.add_argument("--full-scale", action="store_true", help="allow n up to 16384 and 50 replicates")
    b.add_argument("--no-timing", action="store_true", help="write nan for wall-clock columns")
    b.add_argument("--out", required=True)
    return p


def _spec_from_m(m, kind, seed):
    if isinstance(m, tuple):
        return SketchSpec(kind, m[0], seed, m[1])
    return SketchSpec(kind, m, seed)


def _sketch_size_for(spec, n, kc, sigma):
    stat_dim = None
    if spec.kind != "none" and spec.m in ("statdim", "statdim_ros"):
        stat_dim = statistical_dimension(kc.eigenvalues, sigma).stat_dim
    return spec.size(n, stat_dim)


def cmd_simulate(a):
    spec = SimSpec(a.example, a.n, a.p, a.v, a.sigma, a.seed)
    ds, truth = generate(spec, make_grid(a.grid))
    out = Path(a.out)
    save_dataset(ds, out)
    atomic_write_text(out / "truth.json", truth.to_json())
    log.info("wrote %s (n=%d, p=%d, G=%d)", out, ds.n, ds.p, a.grid)


def cmd_fit(a):
    ds = load_dataset(a.data)
    kc = build_kc(BERNOULLI, ds, decompose=False)
    spec = _spec_from_m(a.m, a.sketch, a.seed)
    m = _sketch_size_for(spec, ds.n, kc, a.sigma)
    sk = make_sketch(a.sketch, m, ds.n, a.seed)
    res = fit(kc, ds.z, ds.y, None if a.sketch == "none" else sk, FitConfig(mu2=a.mu2, lam=a.lam))
    res.sketch_id = sk.sketch_id()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "fit.json", res.to_json())
    log.info("fit: %d iterations, converged=%s, objective=%.6g", res.n_iter, res.converged, res.objective)


def cmd_cv(a):
    ds = load_dataset(a.data)
    kc = build_kc(BERNOULLI, ds, decompose=False)
    spec = _spec_from_m(a.m, a.sketch, a.seed)
    plan = make_plan(ds.n, ds.p, a.folds, a.seed, a.mu2_grid, a.lambda_grid)
    cv = cross_validate(ds, BERNOULLI, spec, plan, kc=kc)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cv.save_csv(out / "cv_table.csv")
    best = {"best_mu2": cv.best_mu2, "best_lambda": cv.best_lambda, "best_error": cv.best_error}
    atomic_write_text(out / "cv.json", json.dumps(best, indent=2, sort_keys=True) + "\n")
    log.info("cv: mu2=%g lambda=%g error=%.6g", cv.best_mu2, cv.best_lambda, cv.best_error)


def cmd_statdim(a):
    ds = load_dataset(a.data)
    rep = statistical_dimension(build_kc(BERNOULLI, ds).eigenvalues, a.sigma)
    print(json.dumps({"critical_radius": rep.critical_radius, "stat_dim": rep.stat_dim}, sort_keys=True))


def cmd_bench(a):
    n_list = a.n_list or (PAPER_N_LIST if a.full_scale else DESK_N_LIST)
    reps = a.replicates or (50 if a.full_scale else 20)
    policy, c = (a.m_policy if isinstance(a.m_policy, tuple) else (a.m_policy, 1.0))
    try:
        cfg = ExperimentConfig(
            example_id=a.example,
            v_list=a.v_list,
            n_list=n_list,
            sketch_kinds=tuple(s.strip() for s in a.sketches.split(",") if s.strip()),
            replicates=reps,
            m_policy=policy,
            m_c=c,
            p=a.p,
            grid_points=a.grid,
            seed=a.seed,
            mu2=a.mu2,
            lam=a.lam,
            test_size=a.test_size,
            threads=a.threads,
            full_scale=a.full_scale,
        )
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    done = []

    def progress(rec):
        done.append(rec)
        log.info("v=%g n=%d %s rep %d%s", rec.v, rec.n, rec.sketch_kind, rec.replicate, " FAILED" if rec.error else "")

    records = run_experiment(cfg, on_record=progress)
    write_results(records, a.out, timing=not a.no_timing)


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cv": cmd_cv, "statdim": cmd_statdim, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "threads", 1) < 1:
        print("kpflm: --threads must be positive", file=sys.stderr)
        return 1
    try:
        if hasattr(args, "out") and args.command != "simulate":
            os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kpflm: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, DatasetFormatError, InvalidArgumentError, OSError) as exc:
        print(f"kpflm: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
