import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_instance
from kpflm.errors import InvalidArgumentError, NumericalError
from kpflm.funcdata import FunctionalDataset, make_grid
from kpflm.kernel import BERNOULLI, build_kc, cosine_basis
from kpflm.sketch import make_sketch
from kpflm.solver import (
    FitConfig,
    FitResult,
    Problem,
    SlopePredictor,
    alpha_update,
    combined_coefficients,
    fit,
    fit_exact,
    gamma_gradient,
    gamma_update,
    objective,
    power_iteration,
    predict,
    soft_threshold,
)
from oracles import joint_proximal, reparameterized_problem


def check_optimal(res):
    assert res.kkt_residuals[0] <= 1e-6
    assert res.kkt_residuals[1] <= 1e-6
    tr = np.array(res.objective_trace)
    assert np.all(np.diff(tr) <= 1e-12)


# -- soft-thresholding ---------------------------------------------------------


def test_soft_threshold_examples():
    np.testing.assert_array_equal(soft_threshold([3.0, -0.5, 0.2, -4.0], 1.0), [2.0, 0.0, 0.0, -3.0])
    np.testing.assert_array_equal(soft_threshold([1.5], 0.0), [1.5])
    with pytest.raises(InvalidArgumentError):
        soft_threshold([1.0], -1.0)


@given(st.floats(-10, 10), st.floats(0, 5))
def test_soft_threshold_is_prox(u, t):
    # argmin_x 0.5 (x - u)^2 + t |x| on a fine grid
    xs = np.linspace(-12, 12, 240_001)
    best = xs[np.argmin(0.5 * (xs - u) ** 2 + t * np.abs(xs))]
    assert abs(soft_threshold([u], t)[0] - best) <= 1e-4


def test_power_iteration(rng):
    a = rng.standard_normal((6, 6))
    a = a @ a.T
    assert power_iteration(a) == pytest.approx(np.linalg.eigvalsh(a).max(), rel=1e-7)
    assert power_iteration(np.zeros((3, 3))) == 0.0


# -- config ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        {"mu2": 0.0},
        {"mu2": 1.0, "lam": -1.0},
        {"mu2": 1.0, "lipschitz_policy": "guess"},
        {"mu2": 1.0, "max_outer": 0},
        {"mu2": 1.0, "jitter": 1.0},
    ],
)
def test_config_validation(kw):
    with pytest.raises(InvalidArgumentError):
        FitConfig(**kw)


# -- single steps ----------------------------------------------------------------


def test_alpha_update_minimizes(rng):
    kc, z, y, sk = random_instance(rng, n=10, p=3, m=4)
    cfg = FitConfig(mu2=0.05, lam=0.1)
    gamma = rng.standard_normal(3)
    a = alpha_update(kc, z, y, sk, gamma, cfg)
    f0 = objective(kc, z, y, sk, a, gamma, cfg)
    for _ in range(50):
        d = rng.standard_normal(4) * 1e-3
        assert objective(kc, z, y, sk, a + d, gamma, cfg) >= f0 - 1e-14


def test_alpha_update_exact_normal_equations(rng):
    kc, z, y, sk = random_instance(rng, n=10, p=3, m=4)
    cfg = FitConfig(mu2=0.05)
    g = rng.standard_normal(3)
    a = alpha_update(kc, z, y, sk, g, cfg)
    skm = sk.values @ kc
    lhs = (skm @ skm.T + 10 * 0.05 * skm @ sk.values.T) @ a
    np.testing.assert_allclose(lhs, skm @ (y - z @ g), rtol=1e-9, atol=1e-12)


def test_gamma_gradient_finite_difference(rng):
    kc, z, y, sk = random_instance(rng, n=9, p=4, m=3)
    a, g = rng.standard_normal(3), rng.standard_normal(4)
    cfg = FitConfig(mu2=0.1, lam=0.0)
    grad = gamma_gradient(kc, z, y, sk, a, g)
    h = 1e-6
    fd = np.array(
        [
            (objective(kc, z, y, sk, a, g + h * e, cfg) - objective(kc, z, y, sk, a, g - h * e, cfg)) / (2 * h)
            for e in np.eye(4)
        ]
    )
    np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-8)


def test_gamma_update_decreases(rng):
    kc, z, y, sk = random_instance(rng, n=12, p=5, m=3)
    cfg = FitConfig(mu2=0.1, lam=0.2)
    a, g = rng.standard_normal(3), rng.standard_normal(5)
    new = gamma_update(kc, z, y, sk, a, g, cfg)
    assert objective(kc, z, y, sk, a, new, cfg) <= objective(kc, z, y, sk, a, g, cfg)


def test_dimension_errors(rng):
    kc, z, y, sk = random_instance(rng, n=6, p=2, m=3)
    with pytest.raises(InvalidArgumentError):
        Problem(kc[:5, :5], z, y, sk)
    with pytest.raises(InvalidArgumentError):
        Problem(kc, z[:5], y, sk)
    with pytest.raises(InvalidArgumentError):
        objective(kc, z, y, sk, np.zeros(4), np.zeros(2), FitConfig(mu2=1.0))


# -- full fits -------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["grs", "ros", "sub"])
@pytest.mark.parametrize("policy", ["exact_power_iteration", "backtracking"])
def test_fit_converges_and_is_optimal(rng, kind, policy):
    kc, z, y, sk = random_instance(rng, n=24, p=5, m=5, kind=kind)
    res = fit(kc, z, y, sk, FitConfig(mu2=0.01, lam=0.05, lipschitz_policy=policy))
    assert res.converged
    check_optimal(res)


def test_zero_lambda_matches_least_squares(rng):
    kc, z, y, sk = random_instance(rng, n=20, p=3, m=4)
    mu2 = 0.02
    res = fit(kc, z, y, sk, FitConfig(mu2=mu2, lam=0.0, tol=1e-14, max_outer=5000))
    # joint normal equations in (alpha, gamma)
    skm = sk.values @ kc
    m = np.hstack([skm.T, z])
    pen = np.zeros((7, 7))
    pen[:4, :4] = skm @ sk.values.T
    sol = np.linalg.solve(m.T @ m / 20 + mu2 * pen, m.T @ y / 20)
    np.testing.assert_allclose(res.gamma, sol[4:], atol=1e-6)


def test_large_lambda_zeroes_gamma(rng):
    kc, z, y, sk = random_instance(rng, n=20, p=3, m=4)
    res = fit(kc, z, y, sk, FitConfig(mu2=0.1, lam=1e3))
    np.testing.assert_array_equal(res.gamma, 0.0)
    check_optimal(res)


def test_no_scalar_covariates(rng):
    kc, _, y, sk = random_instance(rng, n=10, p=1, m=3)
    res = fit(kc, np.zeros((10, 0)), y, sk, FitConfig(mu2=0.1))
    assert res.converged and res.gamma.shape == (0,)


def test_zero_kernel(rng):
    _, z, y, sk = random_instance(rng, n=10, p=2, m=3)
    res = fit(np.zeros((10, 10)), z, y, sk, FitConfig(mu2=0.1))
    np.testing.assert_array_equal(res.alpha, 0.0)
    assert res.converged


def test_identity_sketch_matches_exact(rng):
    kc, z, y, _ = random_instance(rng, n=16, p=3)
    cfg = FitConfig(mu2=0.01, lam=0.05, tol=1e-14, max_outer=5000)
    a = fit(kc, z, y, make_sketch("none", 16, 16, 0), cfg)
    b = fit_exact(kc, z, y, cfg)
    assert abs(a.objective - b.objective) <= 1e-10
    np.testing.assert_allclose(kc @ a.alpha + z @ a.gamma, kc @ b.alpha + z @ b.gamma, atol=1e-6)


def test_oracle_small(rng):
    kc, z, y, sk = random_instance(rng, n=8, p=4, m=3)
    cfg = FitConfig(mu2=0.05, lam=0.02, tol=1e-15, max_outer=10_000)
    res = fit(kc, z, y, sk, cfg)
    a, q, back = reparameterized_problem(kc, z, y, sk.values, cfg.mu2)
    b, g, val = joint_proximal(a, z, y, cfg.mu2, cfg.lam, np.zeros(a.shape[1] + 4))
    assert abs(res.objective - val) <= 1e-8
    alpha = back(b)
    assert objective(kc, z, y, sk, alpha, g, cfg) == pytest.approx(val, abs=1e-10)


def test_warm_start(rng):
    kc, z, y, sk = random_instance(rng, n=16, p=3, m=4)
    cfg = FitConfig(mu2=0.02, lam=0.05)
    res = fit(kc, z, y, sk, cfg)
    again = fit(kc, z, y, sk, cfg, init=(res.alpha, res.gamma))
    assert again.n_iter <= 2
    assert again.objective <= res.objective + 1e-12


def test_determinism(rng):
    kc, z, y, sk = random_instance(rng, n=16, p=3, m=4)
    cfg = FitConfig(mu2=0.02, lam=0.05)
    a, b = fit(kc, z, y, sk, cfg), fit(kc, z, y, sk, cfg)
    assert a.to_json() == b.to_json()


def test_result_json_roundtrip(rng):
    kc, z, y, sk = random_instance(rng, n=10, p=2, m=3)
    res = fit(kc, z, y, sk, FitConfig(mu2=0.1, lam=0.01))
    d = json.loads(res.to_json())
    assert set(d) >= {"alpha", "gamma", "sketch", "mu2", "lambda", "n_iter", "converged", "objective_trace", "kkt"}
    back = FitResult.from_dict(d)
    np.testing.assert_array_equal(back.alpha, res.alpha)
    np.testing.assert_array_equal(back.gamma, res.gamma)
    res.gamma = np.array([-0.0, 1.0])
    assert json.loads(res.to_json())["gamma"][0] == 0.0
    assert "-0.0," not in res.to_json()


def test_nonpsd_system_raises():
    kc = -np.eye(4)
    with pytest.raises(NumericalError):
        fit(kc, np.ones((4, 1)), np.arange(4.0), None, FitConfig(mu2=1.0))


@given(st.integers(0, 10_000), st.floats(1e-4, 1.0), st.floats(0.0, 0.5))
def test_fit_property_optimal(seed, mu2, lam):
    rng = np.random.default_rng(seed)
    kc, z, y, sk = random_instance(rng, n=12, p=3, m=3, seed=seed)
    res = fit(kc, z, y, sk, FitConfig(mu2=mu2, lam=lam))
    if res.converged:
        check_optimal(res)
    assert np.all(np.diff(res.objective_trace) <= 1e-12)


# -- prediction ------------------------------------------------------------------


@pytest.fixture
def curve_data(rng):
    g = make_grid(100)
    c = rng.uniform(-1, 1, size=(15, 10))
    x = c @ cosine_basis(g.points, 10)
    z = rng.standard_normal((15, 2))
    y = rng.standard_normal(15)
    return FunctionalDataset(g, x, z, y)


def test_predict_reproduces_fitted_values(curve_data):
    ds = curve_data
    kc = build_kc(BERNOULLI, ds)
    sk = make_sketch("grs", 4, ds.n, 1)
    res = fit(kc, ds.z, ds.y, sk, FitConfig(mu2=1e-4, lam=0.01))
    fitted = kc.values @ combined_coefficients(res, sk) + ds.z @ res.gamma
    np.testing.assert_allclose(predict(res, sk, ds, BERNOULLI, ds.x_values, ds.z), fitted, atol=1e-12)
    one = predict(res, sk, ds, BERNOULLI, ds.x_values[0], ds.z[0])
    assert one == pytest.approx(fitted[0], abs=1e-12)


def test_slope_predictor_consistent(curve_data):
    ds = curve_data
    kc = build_kc(BERNOULLI, ds)
    sk = make_sketch("ros", 4, ds.n, 1)
    res = fit(kc, ds.z, ds.y, sk, FitConfig(mu2=1e-4, lam=0.01))
    sp = SlopePredictor.from_fit(res, sk, ds, BERNOULLI)
    np.testing.assert_allclose(sp.integrate(ds.x_values), kc.values @ combined_coefficients(res, sk), atol=1e-12)
    assert sp.on_grid().shape == (100,)


def test_predict_grid_mismatch(curve_data):
    ds = curve_data
    kc = build_kc(BERNOULLI, ds)
    res = fit(kc, ds.z, ds.y, None, FitConfig(mu2=1e-2))
    with pytest.raises(InvalidArgumentError):
        predict(res, None, ds, BERNOULLI, np.zeros(99), np.zeros(2))
    with pytest.raises(InvalidArgumentError):
        predict(res, None, ds, BERNOULLI, np.zeros(100), np.zeros(3))
