"""Reproducing kernels on [0, 1], the representer basis and the cross-kernel matrix.

The default kernel is the cosine-series kernel

    K(s, t) = sum_k 2 (k pi)^-4 cos(k pi s) cos(k pi t)
            = -B4(|s - t| / 2) / 3 - B4((s + t) / 2) / 3,

with B4 the fourth Bernoulli polynomial.  Its eigenfunctions are
``sqrt(2) cos(k pi t)`` with eigenvalues ``(k pi)^-4``.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from kpflm.errors import InvalidArgumentError, NumericalError

NEG_EIG_RTOL = 1e-8


def _check_unit(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise InvalidArgumentError(f"{name} must lie in [0, 1]")
    return x


def bernoulli_b4(x):
    """Fourth Bernoulli polynomial ``x^4 - 2x^3 + x^2 - 1/30`` on [0, 1]."""
    x = _check_unit(x, "x")
    out = x * x * (x * (x - 2.0) + 1.0) - 1.0 / 30.0
    return float(out) if out.ndim == 0 else out


def bernoulli_b4_series(x, terms=50):
    """Truncated Fourier series of B4; kept as an independent check on the closed form."""
    x = np.asarray(x, dtype=float)
    k = np.arange(1, terms + 1)
    c = np.cos(2.0 * np.pi * np.multiply.outer(x, k)) / (2.0 * np.pi * k) ** 4
    return -48.0 * c.sum(axis=-1)


def cosine_basis(t, num_terms):
    """Rows ``sqrt(2) cos(k pi t)`` for k = 1..num_terms evaluated at ``t``."""
    k = np.arange(1, num_terms + 1)
    return np.sqrt(2.0) * np.cos(np.pi * np.multiply.outer(k, np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class KernelFunction:
    """A symmetric PSD kernel on [0, 1]^2.

    ``kind == "bernoulli"`` is the closed-form kernel above.  ``kind ==
    "custom-spectral"`` is ``sum_l theta[l] phi_l(s) phi_l(t)`` with
    ``phi_l = sqrt(2) cos(l pi t)`` (``cosine=True``, the only supported basis).
    """

    kind: str = "bernoulli"
    theta: tuple = ()
    cosine: bool = True

    def __post_init__(self):
        if self.kind not in ("bernoulli", "custom-spectral"):
            raise InvalidArgumentError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "custom-spectral":
            if not self.cosine:
                raise InvalidArgumentError("custom-spectral kernels need the cosine basis")
            th = tuple(float(v) for v in self.theta)
            if not th or any(v < 0 or not np.isfinite(v) for v in th):
                raise InvalidArgumentError("theta must be a nonempty sequence of finite nonnegative reals")
            object.__setattr__(self, "theta", th)

    def __call__(self, s, t):
        s = _check_unit(s, "s")
        t = _check_unit(t, "t")
        if self.kind == "bernoulli":
            out = -(bernoulli_b4(np.abs(s - t) / 2.0) + bernoulli_b4((s + t) / 2.0)) / 3.0
        else:
            th = np.asarray(self.theta)
            phs = cosine_basis(s, th.size)
            pht = cosine_basis(t, th.size)
            out = np.tensordot(th, phs * pht, axes=1)
        return float(out) if np.ndim(out) == 0 else out

    def gram(self, points):
        """Kernel matrix ``K(points[a], points[b])``."""
        p = _check_unit(points, "points")
        if self.kind == "bernoulli":
            return self(p[:, None], p[None, :])
        phi = cosine_basis(p, len(self.theta))
        return (phi.T * np.asarray(self.theta)) @ phi


BERNOULLI = KernelFunction()


def bernoulli_spectral(terms=50):
    """The default kernel truncated to ``terms`` cosine modes, ``theta_k = (k pi)^-4``."""
    k = np.arange(1, terms + 1)
    return KernelFunction("custom-spectral", tuple((k * np.pi) ** -4.0))


def kernel_eval(kernel, s, t):
    return kernel(s, t)


@lru_cache(maxsize=8)
def _cached_gram(kernel, num_points):
    g = kernel.gram((np.arange(num_points) + 0.5) / num_points)
    g.setflags(write=False)
    return g


def _grid_gram(kernel, grid):
    return _cached_gram(kernel, grid.num_points)


def basis_functions(kernel, ds):
    """Representer basis on the grid: row k is ``B_k(t) = int X_k(u) K(t, u) du``."""
    if ds.n == 0:
        raise InvalidArgumentError("dataset is empty")
    return ds.grid.weight * (ds.x_values @ _grid_gram(kernel, ds.grid))


def cross_kernel_values(kernel, grid, x_left, x_right):
    """Double integrals ``int int x_left_i(t) K(t, u) x_right_k(u) dt du``."""
    kg = _grid_gram(kernel, grid)
    w = grid.weight
    return (w * w) * (np.asarray(x_left) @ kg @ np.asarray(x_right).T)


class CrossKernelMatrix:
    """The n x n cross-kernel matrix with an (optional, cached) eigendecomposition.

    Eigenvalues are returned in descending order and clipped at zero.  A
    negative eigenvalue below ``-1e-8 * largest`` raises ``NumericalError``.
    """

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InvalidArgumentError(f"cross-kernel matrix must be square, got {values.shape}")
        values = 0.5 * (values + values.T)
        values.setflags(write=False)
        self.values = values
        self._eig = None

    @property
    def n(self):
        return self.values.shape[0]

    def _decompose(self):
        if self._eig is None:
            w, u = np.linalg.eigh(self.values)
            w, u = w[::-1], u[:, ::-1]
            top = max(w[0], 0.0) if w.size else 0.0
            if w.size and w[-1] < -NEG_EIG_RTOL * top:
                raise NumericalError(
                    f"cross-kernel matrix is indefinite: eigenvalue {w[-1]:.3e} vs largest {top:.3e}"
                )
            w = np.clip(w, 0.0, None)
            w.setflags(write=False)
            u.setflags(write=False)
            self._eig = (w, np.ascontiguousarray(u))
        return self._eig

    @property
    def eigenvalues(self):
        return self._decompose()[0]

    @property
    def eigenvectors(self):
        return self._decompose()[1]

    def submatrix(self, rows, cols=None):
        cols = rows if cols is None else cols
        return self.values[np.ix_(rows, cols)]

    def restrict(self, idx):
        """Cross-kernel matrix of the sub-sample ``idx`` (entries depend only on the pair)."""
        return CrossKernelMatrix(self.submatrix(idx))


def build_kc(kernel, ds, decompose=True):
    """Assemble the cross-kernel matrix of ``ds`` by double midpoint quadrature.

    ``decompose=False`` defers the O(n^3) eigendecomposition until first use.
    """
    if ds.n == 0:
        raise InvalidArgumentError("dataset is empty")
    if not np.all(np.isfinite(ds.x_values)):
        raise InvalidArgumentError("x_values contain non-finite entries")
    kc = CrossKernelMatrix(cross_kernel_values(kernel, ds.grid, ds.x_values, ds.x_values))
    if decompose:
        kc._decompose()
    return kc


def kc_spectral_oracle(theta, coeffs):
    """Series form of the cross-kernel matrix: ``sum_l theta_l c[i, l] c[k, l]``.

    ``coeffs[i, l]`` is the L2 inner product of curve i with the l-th
    eigenfunction of the kernel.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if coeffs.shape[1] != theta.size:
        raise InvalidArgumentError(
            f"coefficient matrix has {coeffs.shape[1]} columns but {theta.size} eigenvalues"
        )
    return (coeffs * theta) @ coeffs.T
