"""Alternating solver for the (sketched) kernel partially functional linear model.

With cross-kernel matrix ``K`` (n x n), sketch ``S`` (m x n), design ``Z``
(n x p) and responses ``y`` the sketched problem is

    min_{alpha, gamma}  (1/n) || y - Z gamma - (S K)^T alpha ||^2
                        + mu2 * alpha^T (S K S^T) alpha + lam * ||gamma||_1

which, expanded, is the quadratic form in alpha with the cross term
``-(2/n) alpha^T S K (y - Z gamma)``.  Taking ``S = I`` gives the unsketched
problem.  Each outer iteration solves exactly for alpha (an m x m
positive semi-definite system) and then runs proximal-gradient steps on
gamma with soft-thresholding.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from kpflm._ista import ista
from kpflm.errors import InvalidArgumentError, NumericalError
from kpflm.kernel import CrossKernelMatrix, basis_functions, cross_kernel_values
from kpflm.sketch import SketchMatrix, identity_sketch


@dataclass(frozen=True)
class FitConfig:
    mu2: float
    lam: float = 0.0
    max_outer: int = 500
    tol: float = 1e-8
    jitter: float = 1e-10
    max_jitter: float = 1e-4
    lipschitz_policy: str = "exact_power_iteration"
    backtrack_eta: float = 2.0
    backtrack_d0: float = 1.0
    tol_inner: float = 1e-6
    max_inner: int = 200
    kkt_tol: float = 1e-6

    def __post_init__(self):
        if not self.mu2 > 0:
            raise InvalidArgumentError(f"mu2 must be positive, got {self.mu2}")
        if not self.lam >= 0:
            raise InvalidArgumentError(f"lambda must be nonnegative, got {self.lam}")
        if not self.tol > 0 or not self.tol_inner > 0:
            raise InvalidArgumentError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidArgumentError("iteration caps must be positive")
        if self.lipschitz_policy not in ("exact_power_iteration", "backtracking"):
            raise InvalidArgumentError(f"unknown lipschitz policy {self.lipschitz_policy!r}")
        if not 0 < self.jitter <= self.max_jitter:
            raise InvalidArgumentError("need 0 < jitter <= max_jitter")
        if self.backtrack_eta <= 1 or self.backtrack_d0 <= 0:
            raise InvalidArgumentError("backtracking needs eta > 1 and D0 > 0")


@dataclass
class FitResult:
    alpha: np.ndarray
    gamma: np.ndarray
    objective_trace: list
    n_iter: int
    converged: bool
    sketch_id: dict
    kkt_residuals: tuple
    mu2: float = float("nan")
    lam: float = float("nan")
    lipschitz: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def objective(self):
        return self.objective_trace[-1]

    def to_dict(self):
        return {
            "alpha": [float(v) + 0.0 for v in self.alpha],
            "gamma": [float(v) + 0.0 for v in self.gamma],  # + 0.0 turns -0.0 into 0.0
            "sketch": dict(self.sketch_id),
            "mu2": float(self.mu2),
            "lambda": float(self.lam),
            "n_iter": int(self.n_iter),
            "converged": bool(self.converged),
            "objective_trace": [float(v) for v in self.objective_trace],
            "kkt": {"alpha_res": float(self.kkt_residuals[0]), "gamma_res": float(self.kkt_residuals[1])},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        kkt = d.get("kkt", {})
        return cls(
            alpha=np.asarray(d["alpha"], dtype=float),
            gamma=np.asarray(d["gamma"], dtype=float),
            objective_trace=list(d["objective_trace"]),
            n_iter=int(d["n_iter"]),
            converged=bool(d["converged"]),
            sketch_id=dict(d["sketch"]),
            kkt_residuals=(kkt.get("alpha_res", float("nan")), kkt.get("gamma_res", float("nan"))),
            mu2=float(d["mu2"]),
            lam=float(d["lambda"]),
        )


def soft_threshold(u, t):
    if t < 0:
        raise InvalidArgumentError(f"threshold must be nonnegative, got {t}")
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


def _kc_values(kc):
    return kc.values if isinstance(kc, CrossKernelMatrix) else np.asarray(kc, dtype=float)


def _sketch_values(sketch, n):
    if sketch is None:
        return None
    vals = sketch.values if isinstance(sketch, SketchMatrix) else np.asarray(sketch, dtype=float)
    if vals.ndim != 2 or vals.shape[1] != n:
        raise InvalidArgumentError(f"sketch of shape {vals.shape} does not act on n={n}")
    return vals


def power_iteration(a, tol=1e-8, max_iter=10_000):
    """Largest eigenvalue of the symmetric PSD matrix ``a``."""
    p = a.shape[0]
    if p == 0:
        return 0.0
    v = np.full(p, 1.0 / math.sqrt(p))
    # deterministic perturbation so v is not orthogonal to the top eigenvector by symmetry
    v = v + 1e-3 * np.cos(np.arange(1, p + 1))
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = a @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = float(v @ w)
        v = w / nw
        if abs(new - est) <= tol * abs(new):
            return new
        est = new
    raise NumericalError(f"power iteration did not converge in {max_iter} steps")


class Problem:
    """Precomputed pieces of one (sketched) instance.

    ``sk`` is ``S K`` (m x n); with ``sketch=None`` the identity is used
    without forming it.
    """

    def __init__(self, kc, z, y, sketch=None):
        k = _kc_values(kc)
        y = np.asarray(y, dtype=float).ravel()
        n = y.shape[0]
        z = np.asarray(z, dtype=float)
        if z.size == 0:
            z = np.zeros((n, 0))
        if k.shape != (n, n):
            raise InvalidArgumentError(f"cross-kernel matrix {k.shape} does not match n={n}")
        if z.ndim != 2 or z.shape[0] != n:
            raise InvalidArgumentError(f"design matrix {z.shape} does not match n={n}")
        s = _sketch_values(sketch, n)
        self.n, self.p = n, z.shape[1]
        self.z, self.y = z, y
        if s is None:
            self.sk = k
            pen = k
        else:
            self.sk = s @ k
            pen = self.sk @ s.T
        self.m = self.sk.shape[0]
        self.penalty = 0.5 * (pen + pen.T)
        gram = self.sk @ self.sk.T
        self.gram = 0.5 * (gram + gram.T)
        self.ztz = z.T @ z
        self._chol = None
        self._lip = None

    def check_alpha(self, alpha):
        alpha = np.asarray(alpha, dtype=float).ravel()
        if alpha.shape != (self.m,):
            raise InvalidArgumentError(f"alpha must have length {self.m}, got {alpha.shape}")
        return alpha

    def check_gamma(self, gamma):
        gamma = np.asarray(gamma, dtype=float).ravel()
        if gamma.shape != (self.p,):
            raise InvalidArgumentError(f"gamma must have length {self.p}, got {gamma.shape}")
        return gamma

    def fitted_kernel_part(self, alpha):
        return self.sk.T @ alpha

    def objective(self, alpha, gamma, mu2, lam):
        r = self.y - self.z @ gamma - self.sk.T @ alpha
        return float(r @ r) / self.n + mu2 * float(alpha @ self.penalty @ alpha) + lam * float(np.abs(gamma).sum())

    # -- alpha step -------------------------------------------------------

    def system(self, mu2):
        return self.gram + (self.n * mu2) * self.penalty

    def rhs(self, gamma):
        return self.sk @ (self.y - self.z @ gamma)

    def _factor(self, config):
        if self._chol is None or self._chol[0] != config.mu2:
            a = self.system(config.mu2)
            scale = float(np.trace(a)) / max(self.m, 1)
            if scale < 0.0 or (scale == 0.0 and np.any(a)):
                raise NumericalError("alpha system has a nonpositive trace; is the cross-kernel matrix PSD?")
            if scale == 0.0:
                self._chol = (config.mu2, a, None, 0.0)
                return self._chol
            eps = config.jitter
            while True:
                try:
                    c = sla.cho_factor(a + (eps * scale) * np.eye(self.m), lower=True, check_finite=False)
                    break
                except np.linalg.LinAlgError:
                    eps *= 10.0
                    if eps > config.max_jitter * (1 + 1e-12):
                        raise NumericalError(
                            f"alpha system not positive definite even with jitter {config.max_jitter:g}"
                        ) from None
            self._chol = (config.mu2, a, c, eps * scale)
        return self._chol

    def alpha_step(self, gamma, config, refine=8):
        _, a, c, _ = self._factor(config)
        b = self.rhs(gamma)
        if c is None:
            return np.zeros(self.m)
        alpha = sla.cho_solve(c, b, check_finite=False)
        bnorm = np.linalg.norm(b)
        # iterative refinement removes the bias introduced by the jitter
        for _ in range(refine):
            res = b - a @ alpha
            if np.linalg.norm(res) <= 1e-13 * bnorm:
                break
            alpha = alpha + sla.cho_solve(c, res, check_finite=False)
        return alpha

    def alpha_residual(self, alpha, gamma, config):
        b = self.rhs(gamma)
        res = self.system(config.mu2) @ alpha - b
        bn = np.linalg.norm(b)
        return float(np.linalg.norm(res) / bn) if bn > 0 else float(np.linalg.norm(res))

    # -- gamma step -------------------------------------------------------

    def gamma_gradient(self, alpha, gamma):
        return (2.0 / self.n) * (self.z.T @ (self.sk.T @ alpha + self.z @ gamma - self.y))

    def lipschitz(self):
        """``(2/n) lambda_max(Z^T Z)`` by power iteration, inflated by 1e-6 so it is an upper bound."""
        if self._lip is None:
            self._lip = (2.0 / self.n) * power_iteration(self.ztz) * (1.0 + 1e-6)
        return self._lip

    def _quad(self, alpha, gamma):
        r = self.y - self.z @ gamma - self.sk.T @ alpha
        return float(r @ r) / self.n

    def gamma_step(self, alpha, gamma, config, d):
        """One proximal-gradient step; returns ``(new_gamma, D_used)``."""
        g = self.gamma_gradient(alpha, gamma)
        if config.lipschitz_policy == "exact_power_iteration":
            d = self.lipschitz() if d is None else d
            if d == 0.0:
                return gamma.copy(), d
            return soft_threshold(gamma - g / d, config.lam / d), d
        d = config.backtrack_d0 if d is None else d
        f0 = self._quad(alpha, gamma)
        while True:
            new = soft_threshold(gamma - g / d, config.lam / d)
            step = new - gamma
            if self._quad(alpha, new) <= f0 + float(g @ step) + 0.5 * d * float(step @ step) + 1e-15 * abs(f0):
                return new, d
            d *= config.backtrack_eta
            if not math.isfinite(d):
                raise NumericalError("backtracking diverged")

    def gamma_steps(self, alpha, gamma, config, d):
        """Inner proximal loop until the step falls below ``tol_inner`` (at most ``max_inner``)."""
        if config.lipschitz_policy == "backtracking":
            obj = self.objective(alpha, gamma, config.mu2, config.lam)
            for _ in range(config.max_inner):
                new, d = self.gamma_step(alpha, gamma, config, d)
                new_obj = self.objective(alpha, new, config.mu2, config.lam)
                if new_obj > obj:
                    break
                move = float(np.max(np.abs(new - gamma)))
                gamma, obj = new, new_obj
                if move < config.tol_inner:
                    break
            return gamma, d
        d = self.lipschitz() if d is None else d
        if d == 0.0:
            return gamma, d
        r0 = self.y - self.sk.T @ alpha
        a = (2.0 / self.n) * self.ztz
        b = (2.0 / self.n) * (self.z.T @ r0)
        new, _ = ista(a, b, gamma, float(config.lam), float(d), float(config.tol_inner), int(config.max_inner))
        return new, d

    def gamma_residual(self, alpha, gamma, config, d):
        if self.p == 0 or d is None or d == 0.0:
            return 0.0
        g = self.gamma_gradient(alpha, gamma)
        return float(np.max(np.abs(gamma - soft_threshold(gamma - g / d, config.lam / d))))


def _alternate(prob, config, init, sketch_id):
    alpha = np.zeros(prob.m) if init is None else prob.check_alpha(init[0]).copy()
    gamma = np.zeros(prob.p) if init is None else prob.check_gamma(init[1]).copy()
    obj = prob.objective(alpha, gamma, config.mu2, config.lam)
    trace = [obj]
    d = None
    converged = False
    it = 0
    for it in range(1, config.max_outer + 1):
        cand = prob.alpha_step(gamma, config)
        cand_obj = prob.objective(cand, gamma, config.mu2, config.lam)
        if cand_obj <= obj:
            alpha, obj = cand, cand_obj
        if prob.p:
            new, d = prob.gamma_steps(alpha, gamma, config, d)
            new_obj = prob.objective(alpha, new, config.mu2, config.lam)
            # an increase is only possible through rounding; keep the old iterate then
            if new_obj <= obj:
                gamma, obj = new, new_obj
        if not math.isfinite(obj):
            raise NumericalError("objective became non-finite")
        prev = trace[-1]
        trace.append(obj)
        if abs(prev - obj) <= config.tol * max(abs(prev), 1e-300):
            if prob.p and d is None:
                d = prob.lipschitz() if config.lipschitz_policy == "exact_power_iteration" else config.backtrack_d0
            kkt = (prob.alpha_residual(alpha, gamma, config), prob.gamma_residual(alpha, gamma, config, d))
            if kkt[0] <= config.kkt_tol and kkt[1] <= config.kkt_tol:
                converged = True
                break
    if prob.p and d is None:
        d = prob.lipschitz() if config.lipschitz_policy == "exact_power_iteration" else config.backtrack_d0
    kkt = (prob.alpha_residual(alpha, gamma, config), prob.gamma_residual(alpha, gamma, config, d))
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(gamma))):
        raise NumericalError("non-finite coefficients")
    return FitResult(
        alpha=alpha,
        gamma=gamma,
        objective_trace=trace,
        n_iter=it,
        converged=converged,
        sketch_id=sketch_id,
        kkt_residuals=kkt,
        mu2=config.mu2,
        lam=config.lam,
        lipschitz=float("nan") if d is None else float(d),
    )


def _sketch_id(sketch, n):
    if sketch is None:
        return {"kind": "none", "m": n, "seed": 0}
    if isinstance(sketch, SketchMatrix):
        return sketch.sketch_id()
    return {"kind": "matrix", "m": int(np.shape(sketch)[0]), "seed": None}


def fit(kc, z, y, sketch, config, init=None):
    """Fit the sketched model by alternating alpha solves and proximal gamma steps."""
    prob = Problem(kc, z, y, sketch)
    return _alternate(prob, config, init, _sketch_id(sketch, prob.n))


def fit_problem(prob, config, init=None, sketch_id=None):
    """Same as :func:`fit` on a prebuilt :class:`Problem` (lets callers reuse ``S K``)."""
    return _alternate(prob, config, init, sketch_id or {"kind": "matrix", "m": prob.m, "seed": None})


def fit_exact(kc, z, y, config, init=None):
    """Unsketched fit: n-dimensional alpha with system ``K K + n mu2 K``."""
    prob = Problem(kc, z, y, None)
    return _alternate(prob, config, init, {"kind": "none", "m": prob.n, "seed": 0})


def objective(kc, z, y, sketch, alpha, gamma, config):
    prob = Problem(kc, z, y, sketch)
    return prob.objective(prob.check_alpha(alpha), prob.check_gamma(gamma), config.mu2, config.lam)


def alpha_update(kc, z, y, sketch, gamma, config):
    prob = Problem(kc, z, y, sketch)
    return prob.alpha_step(prob.check_gamma(gamma), config)


def gamma_gradient(kc, z, y, sketch, alpha, gamma):
    prob = Problem(kc, z, y, sketch)
    return prob.gamma_gradient(prob.check_alpha(alpha), prob.check_gamma(gamma))


def gamma_update(kc, z, y, sketch, alpha, gamma, config):
    prob = Problem(kc, z, y, sketch)
    new, _ = prob.gamma_step(prob.check_alpha(alpha), prob.check_gamma(gamma), config, None)
    return new


# ---------------------------------------------------------------------------
# prediction


def combined_coefficients(result, sketch):
    """``S^T alpha``: coefficients of the fitted slope on the representer basis."""
    if sketch is None or (isinstance(sketch, SketchMatrix) and sketch.kind == "none"):
        return np.asarray(result.alpha, dtype=float)
    vals = sketch.values if isinstance(sketch, SketchMatrix) else np.asarray(sketch)
    return vals.T @ result.alpha


class SlopePredictor:
    """Fitted slope ``f(t) = sum_k c_k B_k(t)`` with ``c = S^T alpha``."""

    def __init__(self, coef, ds_train, kernel):
        coef = np.asarray(coef, dtype=float)
        if coef.shape != (ds_train.n,):
            raise InvalidArgumentError(f"coefficients {coef.shape} do not match n={ds_train.n}")
        self.coef = coef
        self.ds_train = ds_train
        self.kernel = kernel
        self.grid = ds_train.grid
        self._values = None

    @classmethod
    def from_fit(cls, result, sketch, ds_train, kernel):
        return cls(combined_coefficients(result, sketch), ds_train, kernel)

    def on_grid(self):
        if self._values is None:
            self._values = self.coef @ basis_functions(self.kernel, self.ds_train)
        return self._values

    def integrate(self, x_new):
        """``int f(t) x(t) dt`` for one curve or a matrix of curves (rows)."""
        x_new = np.asarray(x_new, dtype=float)
        if x_new.shape[-1] != self.grid.num_points:
            raise InvalidArgumentError("curve does not match the training grid")
        return self.grid.weight * (x_new @ self.on_grid())


def predict(result, sketch, ds_train, kernel, x_new, z_new):
    """Predicted response for new curve(s) ``x_new`` and covariates ``z_new``.

    Uses the double-quadrature cross kernel between the new curves and the
    training curves, so for a training curve it reproduces ``(K S^T alpha)_i``.
    """
    x_new = np.asarray(x_new, dtype=float)
    z_new = np.asarray(z_new, dtype=float)
    single = x_new.ndim == 1
    x2 = np.atleast_2d(x_new)
    if x2.shape[1] != ds_train.grid.num_points:
        raise InvalidArgumentError(
            f"curve has {x2.shape[1]} samples, training grid has {ds_train.grid.num_points}"
        )
    z2 = z_new.reshape(x2.shape[0], -1) if z_new.size else np.zeros((x2.shape[0], 0))
    if z2.shape[1] != np.asarray(result.gamma).size:
        raise InvalidArgumentError("covariate vector does not match gamma")
    kvec = cross_kernel_values(kernel, ds_train.grid, x2, ds_train.x_values)
    out = kvec @ combined_coefficients(result, sketch) + z2 @ result.gamma
    return float(out[0]) if single else out


def predict_from_kc(result, sketch, kc_cross, z_new):
    """Prediction when the cross-kernel block against the training curves is already known."""
    return np.asarray(kc_cross) @ combined_coefficients(result, sketch) + np.asarray(z_new) @ result.gamma


__all__ = [
    "FitConfig",
    "FitResult",
    "Problem",
    "SlopePredictor",
    "alpha_update",
    "fit",
    "fit_exact",
    "fit_problem",
    "gamma_gradient",
    "gamma_update",
    "identity_sketch",
    "objective",
    "predict",
    "predict_from_kc",
    "soft_threshold",
]
