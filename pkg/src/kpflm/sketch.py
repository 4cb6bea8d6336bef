"""Random sketch matrices and the statistical dimension used to size them.

All three constructions are normalized so that ``E[S^T S] = I_n``:

* GRS: i.i.d. N(0, 1/m) entries.
* ROS: ``sqrt(n/m) * H[idx] * r`` with ``r`` Rademacher signs, ``idx`` m rows
  drawn without replacement and ``H`` the normalized Walsh-Hadamard matrix
  (n a power of two) or the orthonormal DCT-II matrix otherwise.
* SUB: ``sqrt(n/m)`` times m distinct rows of the identity.
"""
import math
from dataclasses import dataclass

import numpy as np

from kpflm.errors import InvalidArgumentError
from kpflm.rng import stream

KINDS = ("grs", "ros", "sub", "none")


@dataclass(frozen=True, eq=False)
class SketchMatrix:
    kind: str
    m: int
    n: int
    values: np.ndarray
    seed: int

    def sketch_id(self):
        return {"kind": self.kind, "m": self.m, "seed": self.seed}

    def __matmul__(self, other):
        return self.values @ other


def _check_dims(m, n):
    if int(m) != m or int(n) != n or not 1 <= m <= n:
        raise InvalidArgumentError(f"sketch dimensions need 1 <= m <= n, got m={m}, n={n}")
    return int(m), int(n)


def gaussian_sketch(m, n, seed):
    m, n = _check_dims(m, n)
    vals = stream(seed, "sketch-grs").standard_normal((m, n)) / math.sqrt(m)
    return SketchMatrix("grs", m, n, vals, int(seed))


def _is_pow2(n):
    return n & (n - 1) == 0


def hadamard_rows(rows, n):
    """Rows of the Sylvester-Hadamard matrix scaled by ``1/sqrt(n)``; entry (i, j) is
    ``(-1)^popcount(i & j) / sqrt(n)``."""
    rows = np.asarray(rows, dtype=np.int64)
    j = np.arange(n, dtype=np.int64)
    bits = np.bitwise_and(rows[:, None], j[None, :])
    parity = np.zeros_like(bits)
    while np.any(bits):
        parity ^= bits & 1
        bits >>= 1
    return (1.0 - 2.0 * parity) / math.sqrt(n)


def dct_rows(rows, n):
    """Rows of the orthonormal DCT-II matrix."""
    rows = np.asarray(rows, dtype=float)
    j = np.arange(n)
    out = np.sqrt(2.0 / n) * np.cos(np.pi * np.outer(rows, 2 * j + 1) / (2.0 * n))
    out[rows == 0] = 1.0 / math.sqrt(n)
    return out


def orthonormal_rows(rows, n):
    return hadamard_rows(rows, n) if _is_pow2(n) else dct_rows(rows, n)


def ros_sketch(m, n, seed):
    m, n = _check_dims(m, n)
    g = stream(seed, "sketch-ros")
    idx = g.choice(n, size=m, replace=False)
    signs = g.choice(np.array([-1.0, 1.0]), size=n)
    vals = math.sqrt(n / m) * orthonormal_rows(idx, n) * signs
    return SketchMatrix("ros", m, n, vals, int(seed))


def sub_sketch(m, n, seed):
    m, n = _check_dims(m, n)
    idx = stream(seed, "sketch-sub").choice(n, size=m, replace=False)
    vals = np.zeros((m, n))
    vals[np.arange(m), idx] = math.sqrt(n / m)
    return SketchMatrix("sub", m, n, vals, int(seed))


def identity_sketch(n):
    return SketchMatrix("none", n, n, np.eye(n), 0)


def make_sketch(kind, m, n, seed):
    kind = kind.lower()
    if kind == "grs":
        return gaussian_sketch(m, n, seed)
    if kind == "ros":
        return ros_sketch(m, n, seed)
    if kind == "sub":
        return sub_sketch(m, n, seed)
    if kind == "none":
        return identity_sketch(n)
    raise InvalidArgumentError(f"unknown sketch kind {kind!r}")


# ---------------------------------------------------------------------------
# statistical dimension


def _check_spectrum(eigenvalues):
    mu = np.asarray(eigenvalues, dtype=float).ravel()
    if mu.size == 0:
        raise InvalidArgumentError("empty spectrum")
    if np.any(mu < 0) or np.any(np.diff(mu) > 0):
        raise InvalidArgumentError("eigenvalues must be nonnegative and sorted descending")
    return mu


def kernel_complexity(eigenvalues, delta):
    """``sqrt(mean(min(delta, mu_j)))``."""
    if delta < 0:
        raise InvalidArgumentError(f"delta must be nonnegative, got {delta}")
    mu = _check_spectrum(eigenvalues)
    return math.sqrt(float(np.minimum(delta, mu).mean()))


def _gap(mu, delta, sigma):
    # > 0 means delta is still infeasible
    return math.sqrt(float(np.minimum(delta, mu).mean())) - delta * delta / sigma


def _bisect_radius(mu, sigma, width):
    if mu[0] == 0.0:
        return 0.0, 0.0
    hi = max(1.0, math.sqrt(sigma * math.sqrt(float(mu.mean())) * 2.0))
    while _gap(mu, hi, sigma) > 0:
        hi *= 2.0
    lo = 0.0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if _gap(mu, mid, sigma) > 0:
            lo = mid
        else:
            hi = mid
    return hi, lo


def critical_radius(eigenvalues, sigma=1.0):
    """Smallest positive ``delta`` with ``R(delta) <= delta^2 / sigma`` (bracket width 1e-10)."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    mu = _check_spectrum(eigenvalues)
    return _bisect_radius(mu, float(sigma), 1e-10)[0]


@dataclass(frozen=True)
class StatDimReport:
    sigma: float
    critical_radius: float
    stat_dim: int
    complexity_curve: tuple

    def to_dict(self):
        return {"sigma": self.sigma, "critical_radius": self.critical_radius, "stat_dim": self.stat_dim}


def statistical_dimension(eigenvalues, sigma=1.0, curve_points=32):
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    mu = _check_spectrum(eigenvalues)
    delta = critical_radius(mu, sigma)
    below = np.flatnonzero(mu <= delta * delta)
    d = int(below[0]) + 1 if below.size else mu.size
    top = max(2.0 * delta, float(mu[0]), 1e-300)
    probes = np.linspace(0.0, top, curve_points)
    curve = tuple((float(p), kernel_complexity(mu, p)) for p in probes)
    return StatDimReport(float(sigma), delta, d, curve)


def icbrt(n):
    """Exact integer cube root ``floor(n ** (1/3))``."""
    r = int(round(n ** (1.0 / 3.0)))
    while r ** 3 > n:
        r -= 1
    while (r + 1) ** 3 <= n:
        r += 1
    return r


def choose_sketch_dim(n, policy="cuberoot", c=1.0, stat_dim=None):
    """Sketch size for ``n`` samples.

    ``cuberoot``: floor(n^(1/3)).  ``statdim``: ceil(c d_n).  ``statdim_ros``:
    ceil(c d_n log^4 n).  All clamped to [1, n].
    """
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    n = int(n)
    if policy == "cuberoot":
        m = icbrt(n)
    elif policy in ("statdim", "statdim_ros"):
        if stat_dim is None:
            raise InvalidArgumentError(f"policy {policy!r} needs the statistical dimension")
        if not c > 0:
            raise InvalidArgumentError("c must be positive")
        m = c * stat_dim
        if policy == "statdim_ros":
            m *= math.log(n) ** 4
        m = math.ceil(m)
    else:
        raise InvalidArgumentError(f"unknown sketch-size policy {policy!r}")
    return min(n, max(1, int(m)))


def parse_policy(text):
    """Parse ``cuberoot``, ``statdim``, ``statdim(2)``, ``statdim_ros(0.5)``."""
    text = text.strip()
    if "(" in text:
        name, _, rest = text.partition("(")
        if not rest.endswith(")"):
            raise InvalidArgumentError(f"malformed policy {text!r}")
        try:
            c = float(rest[:-1])
        except ValueError:
            raise InvalidArgumentError(f"malformed policy {text!r}") from None
    else:
        name, c = text, 1.0
    if name not in ("cuberoot", "statdim", "statdim_ros"):
        raise InvalidArgumentError(f"unknown sketch-size policy {text!r}")
    return name, c
