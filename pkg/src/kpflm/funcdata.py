"""Grids, functional datasets and their on-disk format.

Curves are always carried as samples on a midpoint grid over [0, 1]; the
quadrature weight is the constant ``1/G``.

Dataset directory layout::

    manifest.json   {n, p, G, example_id, v, seed, sigma}
    x.csv           n rows x G columns
    z.csv           n rows x p columns
    y.csv           n rows x 1 column
    grid.csv        G rows x 1 column

CSV files have no header, use ',' as delimiter, '\\n' line endings and 17
significant digits so that a save/load round trip is bit-exact.
"""
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from kpflm.errors import DatasetFormatError, InvalidArgumentError

CSV_FMT = "%.17g"
MANIFEST_KEYS = ("n", "p", "G", "example_id", "v", "seed", "sigma")


@dataclass(frozen=True)
class Grid:
    num_points: int
    points: np.ndarray
    weight: float

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.num_points == other.num_points
            and self.weight == other.weight
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


def make_grid(G):
    """Midpoint grid ``t_a = (a + 1/2)/G`` with weight ``1/G``."""
    if int(G) != G or G < 2:
        raise InvalidArgumentError(f"grid needs at least 2 points, got {G!r}")
    G = int(G)
    points = (np.arange(G) + 0.5) / G
    points.setflags(write=False)
    return Grid(G, points, 1.0 / G)


def integrate_product(grid, a, b):
    """Midpoint-rule approximation of the integral of ``a(t) b(t)`` over [0, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (grid.num_points,) or b.shape != (grid.num_points,):
        raise InvalidArgumentError(
            f"vectors of shape {a.shape}, {b.shape} do not match grid of {grid.num_points} points"
        )
    return grid.weight * float(a @ b)


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """n curves sampled on ``grid`` together with scalar covariates and responses."""

    grid: Grid
    x_values: np.ndarray
    z: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x_values, dtype=float)
        z = np.asarray(self.z, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1) if z.size else np.zeros((x.shape[0], 0))
        if x.ndim != 2 or x.shape[1] != self.grid.num_points:
            raise InvalidArgumentError(f"x_values must be n x {self.grid.num_points}, got {x.shape}")
        if z.ndim != 2 or y.ndim != 1 or not (x.shape[0] == z.shape[0] == y.shape[0]):
            raise InvalidArgumentError(
                f"row counts disagree: x {x.shape}, z {z.shape}, y {y.shape}"
            )
        for name, arr in (("x_values", x), ("z", z), ("y", y)):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
        object.__setattr__(self, "x_values", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.z.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return FunctionalDataset(self.grid, self.x_values[idx], self.z[idx], self.y[idx], dict(self.meta))

    def __eq__(self, other):
        if not isinstance(other, FunctionalDataset):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.x_values, other.x_values)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.y, other.y)
            and self.meta == other.meta
        )

    __hash__ = None


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_csv(mat):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return ""
    lines = [",".join(CSV_FMT % v for v in row) for row in mat]
    return "\n".join(lines) + "\n"


def read_csv(path, rows, cols):
    """Read a headerless numeric CSV and check its shape against ``(rows, cols)``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing dataset file: {path}")
    text = path.read_text(encoding="utf-8")
    if cols == 0 or rows == 0:
        if text.strip():
            raise DatasetFormatError(f"{path.name}: expected no data for shape ({rows}, {cols})")
        return np.zeros((rows, cols))
    try:
        data = [[float(v) for v in line.split(",")] for line in text.splitlines() if line.strip()]
    except ValueError as exc:
        raise DatasetFormatError(f"{path.name}: unparsable value ({exc})") from None
    if len(data) != rows or any(len(r) != cols for r in data):
        widths = sorted({len(r) for r in data})
        raise DatasetFormatError(
            f"{path.name}: expected {rows} x {cols}, found {len(data)} rows of width {widths}"
        )
    return np.array(data, dtype=float).reshape(rows, cols)


def save_dataset(ds, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n": ds.n,
        "p": ds.p,
        "G": ds.grid.num_points,
        "example_id": ds.meta.get("example_id"),
        "v": ds.meta.get("v"),
        "seed": ds.meta.get("seed"),
        "sigma": ds.meta.get("sigma"),
    }
    extra = {k: v for k, v in ds.meta.items() if k not in manifest}
    if extra:
        manifest["meta"] = extra
    atomic_write_text(d / "x.csv", format_csv(ds.x_values))
    atomic_write_text(d / "z.csv", format_csv(ds.z) if ds.p else "")
    atomic_write_text(d / "y.csv", format_csv(ds.y.reshape(-1, 1)))
    atomic_write_text(d / "grid.csv", format_csv(ds.grid.points.reshape(-1, 1)))
    # manifest last: its presence marks a complete dataset
    atomic_write_text(d / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(directory):
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise FileNotFoundError(f"missing dataset file: {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"manifest.json: {exc}") from None
    missing = [k for k in ("n", "p", "G") if k not in manifest]
    if missing:
        raise DatasetFormatError(f"manifest.json: missing keys {missing}")
    n, p, G = int(manifest["n"]), int(manifest["p"]), int(manifest["G"])
    grid = make_grid(G)
    pts = read_csv(d / "grid.csv", G, 1).ravel()
    if not np.array_equal(pts, grid.points):
        raise DatasetFormatError("grid.csv: points are not the midpoint grid for G=%d" % G)
    x = read_csv(d / "x.csv", n, G)
    z = read_csv(d / "z.csv", n, p)
    y = read_csv(d / "y.csv", n, 1).ravel()
    meta = {k: manifest[k] for k in MANIFEST_KEYS[3:] if manifest.get(k) is not None}
    meta.update(manifest.get("meta", {}))
    return FunctionalDataset(grid, x, z, y, meta)
