"""K-fold cross-validation over the (mu2, lambda) grid."""
import logging
import math
import struct
from dataclasses import dataclass

import numpy as np

from kpflm.errors import InvalidArgumentError, NumericalError
from kpflm.funcdata import atomic_write_text
from kpflm.kernel import CrossKernelMatrix, build_kc
from kpflm.rng import derive_seed, stream
from kpflm.sketch import choose_sketch_dim, make_sketch, statistical_dimension
from kpflm.solver import FitConfig, Problem, combined_coefficients, fit_problem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SketchSpec:
    """How to sketch a training set of size n: kind, size rule (policy name or int) and seed."""

    kind: str = "grs"
    m: object = "cuberoot"
    seed: int = 0
    c: float = 1.0

    def size(self, n, stat_dim=None):
        if self.kind == "none":
            return n
        if isinstance(self.m, (int, np.integer)):
            return min(n, max(1, int(self.m)))
        return choose_sketch_dim(n, self.m, c=self.c, stat_dim=stat_dim)


@dataclass(frozen=True)
class CvPlan:
    folds: tuple
    mu2_grid: tuple
    lambda_grid: tuple
    seed: int = 0


def make_folds(n, k=5, seed=0):
    """Seeded shuffle of ``range(n)`` split into ``k`` contiguous folds."""
    if k < 2 or n < k:
        raise InvalidArgumentError(f"need n >= k >= 2, got n={n}, k={k}")
    perm = stream(seed, "folds", n, k).permutation(n)
    return tuple(np.sort(f) for f in np.array_split(perm, k))


def pilot_scale(n, p, r=2.0):
    """Theoretical magnitudes ``(mu, lambda)``: ``n^(-r/(2r+1)) + sqrt(log(2p)/n)`` and ``sqrt(log(2p)/n)``."""
    lam = math.sqrt(math.log(2 * max(p, 1)) / n)
    return n ** (-r / (2 * r + 1)) + lam, lam


def default_grids(n, p):
    mu, lam = pilot_scale(n, p)
    mu2_grid = tuple(float(v) for v in mu * mu * np.logspace(-8, 0, 9))
    lambda_grid = tuple(float(v) for v in lam * np.logspace(-2, 2, 9))
    return mu2_grid, lambda_grid


def make_plan(n, p, k=5, seed=0, mu2_grid=None, lambda_grid=None):
    dm, dl = default_grids(n, p)
    mu2_grid = tuple(sorted(float(v) for v in (mu2_grid or dm)))
    lambda_grid = tuple(sorted(float(v) for v in (lambda_grid if lambda_grid is not None else dl)))
    if not mu2_grid or any(v <= 0 for v in mu2_grid):
        raise InvalidArgumentError("mu2 grid must be nonempty and positive")
    if not lambda_grid or any(v < 0 for v in lambda_grid):
        raise InvalidArgumentError("lambda grid must be nonempty and nonnegative")
    return CvPlan(make_folds(n, k, seed), mu2_grid, lambda_grid, seed)


def _float_key(x):
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def cell_seed(base_seed, fold, mu2, lam):
    """Sketch seed for one (fold, grid point); a function of the grid *values* so
    duplicated grid points see the same sketch."""
    return derive_seed(base_seed, "cv-sketch", fold, _float_key(mu2), _float_key(lam))


@dataclass
class CvResult:
    best_mu2: float
    best_lambda: float
    best_error: float
    table: list  # rows (mu2, lambda, fold_errors, mean_error)

    def to_csv(self):
        k = len(self.table[0][2]) if self.table else 0
        head = ["mu2", "lambda"] + [f"fold_{i + 1}" for i in range(k)] + ["mean_error"]
        lines = [",".join(head)]
        for mu2, lam, errs, mean in self.table:
            vals = [mu2, lam, *errs, mean]
            lines.append(",".join("%.17g" % v for v in vals))
        return "\n".join(lines) + "\n"

    def save_csv(self, path):
        atomic_write_text(path, self.to_csv())


def _argmin(table):
    """Smallest mean error; ties go to the larger mu2, then the larger lambda."""
    best = None
    for mu2, lam, _, err in table:
        if not math.isfinite(err):
            continue
        key = (err, -mu2, -lam)
        if best is None or key < best[0]:
            best = (key, mu2, lam, err)
    if best is None:
        raise NumericalError("every cross-validation cell failed")
    return best[1], best[2], best[3]


def cross_validate(ds, kernel, sketch_spec, plan, kc=None, fit_kwargs=None):
    """Mean held-out squared prediction error of y for every grid point.

    Training-fold cross-kernel matrices are sub-blocks of the full one; each
    entry depends only on its two curves, so held-out rows never enter the
    training problem.
    """
    if kc is None:
        kc = build_kc(kernel, ds, decompose=False)
    fit_kwargs = dict(fit_kwargs or {})
    n = ds.n
    all_idx = np.arange(n)
    folds = []
    for f, test in enumerate(plan.folds):
        train = np.setdiff1d(all_idx, test)
        k_train = kc.submatrix(train)
        stat_dim = None
        if sketch_spec.kind != "none" and sketch_spec.m in ("statdim", "statdim_ros"):
            stat_dim = statistical_dimension(CrossKernelMatrix(k_train).eigenvalues).stat_dim
        folds.append((train, test, k_train, kc.submatrix(test, train), sketch_spec.size(train.size, stat_dim)))

    errors = {}
    for f, (train, test, k_train, k_cross, m) in enumerate(folds):
        z_tr, y_tr = ds.z[train], ds.y[train]
        z_te, y_te = ds.z[test], ds.y[test]
        for mu2 in sorted(set(plan.mu2_grid)):
            for lam in sorted(set(plan.lambda_grid)):
                sk = make_sketch(sketch_spec.kind, m, train.size, cell_seed(sketch_spec.seed, f, mu2, lam))
                try:
                    prob = Problem(k_train, z_tr, y_tr, None if sk.kind == "none" else sk)
                    res = fit_problem(prob, FitConfig(mu2=mu2, lam=lam, **fit_kwargs), sketch_id=sk.sketch_id())
                    pred = k_cross @ combined_coefficients(res, sk) + z_te @ res.gamma
                    err = float(np.mean((y_te - pred) ** 2))
                except (NumericalError, np.linalg.LinAlgError) as exc:
                    log.warning("cv cell mu2=%g lambda=%g fold %d failed: %s", mu2, lam, f, exc)
                    err = float("nan")
                errors.setdefault((mu2, lam), []).append(err)

    table = []
    for mu2 in plan.mu2_grid:
        for lam in plan.lambda_grid:
            errs = errors[(mu2, lam)]
            mean = float(np.mean(errs)) if all(math.isfinite(e) for e in errs) else float("nan")
            table.append((mu2, lam, tuple(errs), mean))
    best_mu2, best_lam, best_err = _argmin(table)
    return CvResult(best_mu2, best_lam, best_err, table)
