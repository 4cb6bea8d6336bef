"""Error metrics and the replicated simulation benchmark.

Test draws come from one seeded stream shared by every cell of a sweep
(common random numbers), so differences between cells reflect the
estimates rather than the test sample.
"""
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from kpflm.errors import InvalidArgumentError
from kpflm.funcdata import atomic_write_text, make_grid
from kpflm.kernel import BERNOULLI, build_kc
from kpflm.rng import derive_seed, stream
from kpflm.simgen import SimSpec, curve_basis, draw_u, generate, true_slope_on_grid
from kpflm.sketch import make_sketch, statistical_dimension
from kpflm.solver import FitConfig, SlopePredictor, fit
from kpflm.tuning import SketchSpec, cross_validate, make_plan

log = logging.getLogger(__name__)

RESULTS_HEADER = "example,v,n,m,sketch,replicate,gamma_err,slope_err,resp_err,t_total,t_kc,t_fit"
DESK_MAX_N = 2048
DESK_MAX_REPLICATES = 20
PAPER_N_LIST = (256, 512, 1024, 2048, 4096, 8192, 16384)
DESK_N_LIST = (256, 512, 1024, 2048)


def gamma_error(gamma_hat, gamma0):
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    gamma0 = np.asarray(gamma0, dtype=float)
    if gamma_hat.shape != gamma0.shape:
        raise InvalidArgumentError(f"length mismatch: {gamma_hat.shape} vs {gamma0.shape}")
    d = gamma_hat - gamma0
    return float(d @ d)


@dataclass(frozen=True, eq=False)
class HoldoutSample:
    """Fresh draws ``U'`` (curve scores), ``Z'`` and noise for out-of-sample metrics."""

    u: np.ndarray
    z: np.ndarray
    eps: np.ndarray

    @classmethod
    def draw(cls, size, p, seed, terms=50):
        u = draw_u(stream(seed, "test-U"), size, terms)
        z = stream(seed, "test-Z").uniform(0.0, 1.0, size=(size, p))
        eps = stream(seed, "test-epsilon").standard_normal(size)
        return cls(u, z, eps)


def _curve_projections(fn_on_grid, grid, terms):
    """Quadrature inner products of a gridded function with the curve modes."""
    return grid.weight * (curve_basis(grid, terms) @ fn_on_grid)


def _integrals(fn_on_grid, grid, xi, u):
    """Quadrature of ``fn * X'`` for the test curves ``X' = sum xi_k U'_k psi_k``.

    Since the curves are linear in their scores this equals integrating the
    gridded curves directly, without materializing a test_size x G matrix.
    """
    return u @ (xi * _curve_projections(fn_on_grid, grid, xi.size))


def slope_prediction_error(predictor, truth, test_size=10_000, seed=0, sample=None):
    """Monte Carlo mean of ``(int (f_hat - f*) X')^2`` over fresh curves."""
    diff = _slope_diff(predictor)
    if sample is None:
        sample = HoldoutSample.draw(test_size, 0, seed, truth.xi.size)
    vals = _integrals(diff, predictor.grid, truth.xi, sample.u)
    return float(np.mean(vals**2))


def _slope_diff(predictor):
    if isinstance(predictor, np.ndarray):
        raise InvalidArgumentError("pass a SlopePredictor or GriddedSlope")
    return predictor.on_grid() - true_slope_on_grid(predictor.grid)


def slope_error_spectral(predictor, truth):
    """Expected value of the slope error: ``sum_k xi_k^2 <f_hat - f*, psi_k>^2`` (Var U = 1)."""
    proj = _curve_projections(_slope_diff(predictor), predictor.grid, truth.xi.size)
    return float(np.sum((truth.xi * proj) ** 2))


def response_prediction_error(gamma_hat, predictor, truth, sigma=1.0, test_size=10_000, seed=0, sample=None):
    """Mean of ``(Y_hat' - Y')^2`` over fresh ``(X', Z', eps')`` draws."""
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    gamma0 = np.asarray(truth.gamma0, dtype=float)
    if sample is None or sample.z.shape[1] != gamma0.size:
        sample = HoldoutSample.draw(test_size, gamma0.size, seed, truth.xi.size)
    g, xi = truth.g, truth.xi
    y_true = sample.u[:, 1:] @ (g[1:] * xi[1:]) + sample.z @ gamma0 + sigma * sample.eps
    y_hat = _integrals(predictor.on_grid(), predictor.grid, xi, sample.u) + sample.z @ gamma_hat
    return float(np.mean((y_hat - y_true) ** 2))


class GriddedSlope:
    """A slope estimate given directly by its grid values (useful for oracles)."""

    def __init__(self, grid, values):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)

    def on_grid(self):
        return self.values


@dataclass(frozen=True)
class MetricsReport:
    gamma_sq_error: float
    slope_pred_error: float
    response_pred_error: float
    test_size: int
    slope_pred_error_exact: float = float("nan")


@dataclass
class BenchRecord:
    n: int
    m: int
    sketch_kind: str
    v: float
    example_id: int
    replicate: int
    seed: int
    wall_time_total: float
    wall_time_kc: float
    wall_time_fit: float
    metrics: MetricsReport
    mu2: float = float("nan")
    lam: float = float("nan")
    error: str = ""

    def key(self):
        return (self.example_id, self.v, self.n, self.sketch_kind, self.replicate)

    def csv_row(self, timing=True):
        mt = self.metrics
        t = (self.wall_time_total, self.wall_time_kc, self.wall_time_fit) if timing else (math.nan,) * 3
        vals = [
            str(self.example_id),
            _fmt(self.v),
            str(self.n),
            str(self.m),
            self.sketch_kind,
            str(self.replicate),
            _fmt(mt.gamma_sq_error),
            _fmt(mt.slope_pred_error),
            _fmt(mt.response_pred_error),
            *(_fmt(x) for x in t),
        ]
        return ",".join(vals)


def _fmt(x):
    return "%.17g" % x if isinstance(x, float) else str(x)


@dataclass(frozen=True)
class ExperimentConfig:
    example_id: int = 1
    v_list: tuple = (2.0,)
    n_list: tuple = DESK_N_LIST
    sketch_kinds: tuple = ("grs",)
    replicates: int = DESK_MAX_REPLICATES
    m_policy: object = "cuberoot"
    m_c: float = 1.0
    p: int = 50
    grid_points: int = 1000
    sigma: float = 1.0
    seed: int = 0
    mu2: float = None
    lam: float = None
    mu2_grid: tuple = None
    lambda_grid: tuple = None
    cv_folds: int = 5
    test_size: int = 10_000
    threads: int = 1
    full_scale: bool = False

    def __post_init__(self):
        if self.example_id not in (1, 2):
            raise InvalidArgumentError(f"unknown example {self.example_id}")
        if not self.full_scale:
            if max(self.n_list) > DESK_MAX_N or self.replicates > DESK_MAX_REPLICATES:
                raise InvalidArgumentError(
                    f"n > {DESK_MAX_N} or more than {DESK_MAX_REPLICATES} replicates needs full_scale"
                )
        if self.replicates < 1:
            raise InvalidArgumentError("need at least one replicate")
        if (self.mu2 is None) != (self.lam is None):
            raise InvalidArgumentError("fix both mu2 and lambda, or neither")
        for k in self.sketch_kinds:
            if k not in ("grs", "ros", "sub", "none"):
                raise InvalidArgumentError(f"unknown sketch kind {k!r}")

    def cells(self):
        for v in self.v_list:
            for n in self.n_list:
                for kind in self.sketch_kinds:
                    yield float(v), int(n), kind


def data_seed(master, n, replicate):
    # independent of v and the sketch kind so those comparisons are paired
    return derive_seed(master, "data", n, replicate)


def holdout_seed(master):
    return derive_seed(master, "test")


def run_replicate(cfg, v, n, kind, replicate, sample=None):
    """One generate -> tune -> fit -> evaluate pass; failures come back as a record with ``error`` set."""
    t0 = time.perf_counter()
    seed = data_seed(cfg.seed, n, replicate)
    grid = make_grid(cfg.grid_points)
    spec = SimSpec(cfg.example_id, n, cfg.p, v, cfg.sigma, seed)
    m = n if kind == "none" else 0
    try:
        ds, truth = generate(spec, grid)
        t1 = time.perf_counter()
        kc = build_kc(BERNOULLI, ds, decompose=False)
        t_kc = time.perf_counter() - t1
        stat_dim = None
        if kind != "none" and cfg.m_policy in ("statdim", "statdim_ros"):
            stat_dim = statistical_dimension(kc.eigenvalues, cfg.sigma).stat_dim
        sspec = SketchSpec(kind, cfg.m_policy, derive_seed(seed, "cv"), cfg.m_c)
        m = sspec.size(n, stat_dim)
        if cfg.mu2 is None:
            plan = make_plan(n, cfg.p, cfg.cv_folds, derive_seed(seed, "folds"), cfg.mu2_grid, cfg.lambda_grid)
            cv = cross_validate(ds, BERNOULLI, sspec, plan, kc=kc)
            mu2, lam = cv.best_mu2, cv.best_lambda
        else:
            mu2, lam = cfg.mu2, cfg.lam
        sk = make_sketch(kind, m, n, derive_seed(seed, "final-sketch"))
        t2 = time.perf_counter()
        res = fit(kc, ds.z, ds.y, None if kind == "none" else sk, FitConfig(mu2=mu2, lam=lam))
        t_fit = time.perf_counter() - t2
        pred = SlopePredictor.from_fit(res, sk, ds, BERNOULLI)
        if sample is None:
            sample = HoldoutSample.draw(cfg.test_size, cfg.p, holdout_seed(cfg.seed), truth.xi.size)
        metrics = MetricsReport(
            gamma_sq_error=gamma_error(res.gamma, truth.gamma0),
            slope_pred_error=slope_prediction_error(pred, truth, sample=sample),
            response_pred_error=response_prediction_error(res.gamma, pred, truth, cfg.sigma, sample=sample),
            test_size=cfg.test_size,
            slope_pred_error_exact=slope_error_spectral(pred, truth),
        )
        err = ""
    except Exception as exc:  # noqa: BLE001 - a failed replicate must not stop the sweep
        log.error("replicate failed (v=%s n=%d %s rep %d): %s", v, n, kind, replicate, exc)
        metrics = MetricsReport(math.nan, math.nan, math.nan, cfg.test_size)
        mu2 = lam = t_kc = t_fit = math.nan
        err = f"{type(exc).__name__}: {exc}"
    total = time.perf_counter() - t0
    return BenchRecord(n, m, kind, v, cfg.example_id, replicate, seed, total, t_kc, t_fit, metrics, mu2, lam, err)


def _worker(args):
    cfg, v, n, kind, rep = args
    return run_replicate(cfg, v, n, kind, rep)


def run_experiment(cfg, on_record=None):
    """Full factorial sweep; ``on_record`` is called as each record completes."""
    tasks = [(cfg, v, n, kind, rep) for v, n, kind in cfg.cells() for rep in range(cfg.replicates)]
    records = []
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            for rec in pool.map(_worker, tasks):
                records.append(rec)
                if on_record:
                    on_record(rec)
    else:
        sample = HoldoutSample.draw(cfg.test_size, cfg.p, holdout_seed(cfg.seed))
        for cfg_, v, n, kind, rep in tasks:
            rec = run_replicate(cfg_, v, n, kind, rep, sample=sample)
            records.append(rec)
            if on_record:
                on_record(rec)
    records.sort(key=BenchRecord.key)
    return records


def results_csv(records, timing=True):
    lines = [RESULTS_HEADER] + [r.csv_row(timing) for r in sorted(records, key=BenchRecord.key)]
    return "\n".join(lines) + "\n"


def _quantiles(vals):
    vals = np.asarray([v for v in vals if math.isfinite(v)])
    if vals.size == 0:
        return None
    q1, med, q3 = np.percentile(vals, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3)}


def summarize(records, timing=True):
    cells = {}
    for r in sorted(records, key=BenchRecord.key):
        cells.setdefault((r.example_id, r.v, r.n, r.sketch_kind), []).append(r)
    out = []
    for (ex, v, n, kind), recs in cells.items():
        entry = {
            "example": ex,
            "v": v,
            "n": n,
            "m": recs[0].m,
            "sketch": kind,
            "replicates": len(recs),
            "failures": sum(1 for r in recs if r.error),
            "gamma_err": _quantiles([r.metrics.gamma_sq_error for r in recs]),
            "slope_err": _quantiles([r.metrics.slope_pred_error for r in recs]),
            "slope_err_exact": _quantiles([r.metrics.slope_pred_error_exact for r in recs]),
            "resp_err": _quantiles([r.metrics.response_pred_error for r in recs]),
        }
        if timing:
            entry["t_total"] = _quantiles([r.wall_time_total for r in recs])
            entry["t_kc"] = _quantiles([r.wall_time_kc for r in recs])
            entry["t_fit"] = _quantiles([r.wall_time_fit for r in recs])
        out.append(entry)
    return out


def medians(records, metric, **where):
    """Median of ``metric`` over records matching the ``where`` filters."""
    vals = []
    for r in records:
        if all(getattr(r, k) == v for k, v in where.items()):
            x = getattr(r.metrics, metric)
            if math.isfinite(x):
                vals.append(x)
    return float(np.median(vals)) if vals else math.nan


def write_results(records, out_dir, timing=True):
    out = os.fspath(out_dir)
    os.makedirs(out, exist_ok=True)
    atomic_write_text(os.path.join(out, "results.csv"), results_csv(records, timing))
    atomic_write_text(
        os.path.join(out, "summary.json"),
        json.dumps(summarize(records, timing), indent=2, sort_keys=True) + "\n",
    )
