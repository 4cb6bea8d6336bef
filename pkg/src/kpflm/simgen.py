"""Synthetic data from the two cosine-basis simulation designs.

Curves are ``X(t) = xi_1 U_1 + sum_{k=2}^{50} xi_k U_k sqrt(2) cos(k pi t)`` with
``U_k ~ U(-sqrt 3, sqrt 3)``; the slope is
``f*(t) = sum_{k=1}^{50} 4 (-1)^(k+1) k^-2 sqrt(2) cos(k pi t)``.  The first
curve mode is the constant function, which is orthogonal to every cosine,
so ``int f* X = sum_{k>=2} g_k xi_k U_k`` exactly.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from kpflm.errors import InvalidArgumentError
from kpflm.funcdata import FunctionalDataset
from kpflm.kernel import cosine_basis
from kpflm.rng import stream

L_TERMS = 50
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class SimSpec:
    example_id: int = 1
    n: int = 256
    p: int = 50
    v: float = 2.0
    sigma: float = 1.0
    seed: int = 0
    truncation: int = L_TERMS
    gamma0: tuple = None

    def __post_init__(self):
        if self.example_id not in (1, 2):
            raise InvalidArgumentError(f"unknown example {self.example_id!r}")
        if self.n < 1:
            raise InvalidArgumentError("n must be positive")
        if self.p < 2 and self.gamma0 is None:
            raise InvalidArgumentError("p must be at least 2 for the default coefficients")
        if not self.v > 0 or not self.sigma >= 0:
            raise InvalidArgumentError("need v > 0 and sigma >= 0")
        g0 = self.gamma0
        if g0 is None:
            g0 = (2.0, -2.0) + (0.0,) * (self.p - 2)
        g0 = tuple(float(c) for c in g0)
        if len(g0) != self.p:
            raise InvalidArgumentError(f"gamma0 has {len(g0)} entries, expected p={self.p}")
        object.__setattr__(self, "gamma0", g0)


@dataclass(frozen=True, eq=False)
class SpectralTruth:
    g: np.ndarray
    xi: np.ndarray
    u_draws: np.ndarray
    gamma0: np.ndarray = field(default=None)

    def x_coefficients(self):
        """``<X_i, sqrt(2) cos(l pi .)>`` for l = 1..L (the constant mode contributes nothing)."""
        c = self.u_draws * self.xi
        c[:, 0] = 0.0
        return c

    def exact_functional_part(self):
        return self.u_draws[:, 1:] @ (self.g[1:] * self.xi[1:])

    def to_json(self):
        d = {"g": self.g.tolist(), "xi": self.xi.tolist(), "gamma0": np.asarray(self.gamma0).tolist()}
        return json.dumps(d, indent=2) + "\n"


def xi_sequence(example_id, v, terms=L_TERMS):
    if not v > 0:
        raise InvalidArgumentError(f"v must be positive, got {v}")
    k = np.arange(1, terms + 1)
    sign = np.where(k % 2 == 1, 1.0, -1.0)
    if example_id == 1:
        return sign * k ** (-v / 2.0)
    if example_id == 2:
        xi = 0.2 * sign * ((5 * (k // 5)).clip(min=1) ** (-v / 2.0) - 0.0001 * (k % 5))
        mid = (k >= 2) & (k <= 4)
        xi[mid] = 0.2 * sign[mid] * (1.0 - 0.0001 * k[mid])
        xi[0] = 1.0
        return xi
    raise InvalidArgumentError(f"unknown example {example_id!r}")


def slope_coefficients(terms=L_TERMS):
    k = np.arange(1, terms + 1)
    return 4.0 * np.where(k % 2 == 1, 1.0, -1.0) / k**2


def true_slope_on_grid(grid):
    return slope_coefficients() @ cosine_basis(grid.points, L_TERMS)


def curve_basis(grid, terms=L_TERMS):
    """Rows: the constant function, then sqrt(2) cos(k pi t) for k = 2..terms."""
    b = cosine_basis(grid.points, terms)
    b[0] = 1.0
    return b


def curves_from_draws(u, xi, grid):
    return (u * xi) @ curve_basis(grid, xi.size)


def draw_u(rng, n, terms=L_TERMS):
    return rng.uniform(-SQRT3, SQRT3, size=(n, terms))


def generate(spec, grid, include_noise=True, include_scalar=True):
    """Draw a dataset from ``spec``; returns ``(dataset, truth)``.

    Responses use the exact spectral value of ``int f* X_i`` rather than
    quadrature.  ``include_noise`` / ``include_scalar`` switch off the
    noise and the ``Z gamma0`` term (used by tests).
    """
    xi = xi_sequence(spec.example_id, spec.v, spec.truncation)
    g = slope_coefficients(spec.truncation)
    u = draw_u(stream(spec.seed, "U"), spec.n, spec.truncation)
    z = stream(spec.seed, "Z").uniform(0.0, 1.0, size=(spec.n, spec.p))
    eps = stream(spec.seed, "epsilon").standard_normal(spec.n) * spec.sigma
    gamma0 = np.asarray(spec.gamma0)
    truth = SpectralTruth(g=g, xi=xi, u_draws=u, gamma0=gamma0)
    y = truth.exact_functional_part()
    if include_scalar:
        y = y + z @ gamma0
    if include_noise:
        y = y + eps
    meta = {"example_id": spec.example_id, "v": spec.v, "seed": spec.seed, "sigma": spec.sigma}
    ds = FunctionalDataset(grid, curves_from_draws(u, xi, grid), z, y, meta)
    return ds, truth
