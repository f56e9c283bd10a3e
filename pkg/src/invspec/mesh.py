"""Uniform Dirichlet grids on intervals and rectangles, and fields on them.

Only interior nodes are stored; boundary values are zero by construction.
Nodes are ordered lexicographically with x varying fastest, so a 2D field
reshaped to ``grid.shape == (ny, nx)`` is indexed ``[iy, ix]``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GridMismatchError, NumericError

__all__ = [
    "Grid",
    "Field",
    "build_grid",
    "inner_product",
    "lp_norm",
    "l2_norm",
    "max_norm",
    "h1_seminorm",
    "map_pointwise",
    "lincomb",
    "restrict_to_coarse",
    "sample",
    "constant",
    "save_field_csv",
    "load_field_csv",
]


@dataclass(frozen=True)
class Grid:
    extents: tuple
    n: tuple

    @property
    def dim(self):
        return len(self.n)

    @cached_property
    def h(self):
        return tuple((b - a) / (m + 1) for (a, b), m in zip(self.extents, self.n))

    @cached_property
    def weight(self):
        """Cell volume, the quadrature weight of every interior node."""
        return math.prod(self.h)

    @cached_property
    def size(self):
        return math.prod(self.n)

    @property
    def shape(self):
        # array shape with x as the last (fastest) axis
        return tuple(reversed(self.n))

    def axes(self):
        """Interior node coordinates along each axis (x first)."""
        return [a + h * np.arange(1, m + 1) for (a, _), h, m in zip(self.extents, self.h, self.n)]

    def coords(self):
        """Per-axis coordinate arrays of shape ``grid.shape`` (x first)."""
        mesh = np.meshgrid(*reversed(self.axes()), indexing="ij")
        return list(reversed(mesh))

    def describe(self):
        return {"dim": self.dim, "n_per_axis": list(self.n), "extents": [list(e) for e in self.extents]}


def build_grid(dim, extents, n_per_axis):
    """Build a uniform grid of interior nodes.

    ``extents`` is one ``(a, b)`` pair per axis (a bare pair is accepted in
    1D); ``n_per_axis`` is an int or one int per axis.
    """
    if dim not in (1, 2):
        raise ConfigurationError(f"only dim 1 or 2 grids are supported, got {dim}")
    ext = tuple(extents)
    if dim == 1 and len(ext) == 2 and np.isscalar(ext[0]):
        ext = (ext,)
    if len(ext) != dim:
        raise ConfigurationError(f"expected {dim} extents, got {len(ext)}")
    ext = tuple((float(a), float(b)) for a, b in ext)
    if np.isscalar(n_per_axis):
        n = (int(n_per_axis),) * dim
    else:
        n = tuple(int(m) for m in n_per_axis)
    if len(n) != dim:
        raise ConfigurationError(f"expected {dim} node counts, got {len(n)}")
    for (a, b), m in zip(ext, n):
        if not (math.isfinite(a) and math.isfinite(b)) or not b > a:
            raise ConfigurationError(f"degenerate extent ({a}, {b})")
        if m < 3:
            raise ConfigurationError(f"need at least 3 interior nodes per axis, got {m}")
    return Grid(ext, n)


def _check_finite(values):
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite value {values[idx]!r} at node {idx}", node=idx)


class Field:
    """Real values on the interior nodes of a grid. Immutable."""

    __slots__ = ("grid", "values")
    __array_priority__ = 100

    def __init__(self, grid, values):
        arr = np.array(values, dtype=float).reshape(-1)
        if arr.size == 1 and grid.size != 1:
            arr = np.full(grid.size, arr[0])
        if arr.size != grid.size:
            raise GridMismatchError(f"{arr.size} values for a grid with {grid.size} nodes")
        _check_finite(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    def __repr__(self):
        return f"Field(grid={self.grid.n}, min={self.values.min():.6g}, max={self.values.max():.6g})"

    def __len__(self):
        return self.values.size

    def as_array(self):
        """Values reshaped to ``grid.shape``."""
        return self.values.reshape(self.grid.shape)

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __abs__(self):
        return Field(self.grid, np.abs(self.values))

    def __pow__(self, exponent):
        return map_pointwise(self, lambda v: v**exponent)

    def min(self):
        return float(self.values.min())

    def max(self):
        return float(self.values.max())

    def digest(self):
        """Short content hash of grid and values, for provenance records."""
        m = hashlib.sha256(repr(self.grid.describe()).encode())
        m.update(self.values.tobytes())
        return m.hexdigest()[:16]


def _same_grid(f, g):
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")


def inner_product(f, g):
    _same_grid(f, g)
    return f.grid.weight * float(np.dot(f.values, g.values))


def lp_norm(f, p):
    if not p >= 1 or not math.isfinite(p):
        raise ConfigurationError(f"lp_norm needs finite p >= 1, got {p}")
    a = np.abs(f.values)
    scale = float(a.max())
    if scale == 0.0:
        return 0.0
    # scale out the maximum so neither overflow nor underflow can occur
    a = a / scale
    if p == 2:
        return scale * math.sqrt(f.grid.weight * float(np.dot(a, a)))
    return scale * (f.grid.weight * float(np.sum(a**p))) ** (1.0 / p)


def l2_norm(f):
    return lp_norm(f, 2)


def max_norm(f):
    return float(np.abs(f.values).max())


def h1_seminorm(f):
    """Discrete ``(int |grad f|^2)^(1/2)`` over all cell edges, zero ghosts."""
    arr = f.as_array()
    total = 0.0
    for axis, h in enumerate(reversed(f.grid.h)):
        pad = [(0, 0)] * arr.ndim
        pad[axis] = (1, 1)
        d = np.diff(np.pad(arr, pad), axis=axis) / h
        total += float(np.sum(d * d))
    return math.sqrt(f.grid.weight * total)


def map_pointwise(f, fn):
    """Apply ``fn`` node by node. ``fn`` receives the whole value array."""
    with np.errstate(all="ignore"):
        out = np.asarray(fn(f.values), dtype=float)
    if out.shape != f.values.shape:
        out = np.broadcast_to(out, f.values.shape)
    return Field(f.grid, out)


def lincomb(alpha, f, beta, g):
    _same_grid(f, g)
    return Field(f.grid, alpha * f.values + beta * g.values)


def restrict_to_coarse(f, coarse):
    """Inject a field onto a nested coarser grid (coincident nodes only)."""
    fine = f.grid
    if fine.dim != coarse.dim or fine.extents != coarse.extents:
        raise GridMismatchError("grids cover different domains")
    index = []
    for nf, nc in zip(fine.n, coarse.n):
        if (nf + 1) % (nc + 1) != 0:
            raise GridMismatchError(f"grid with {nc} nodes is not nested in one with {nf}")
        r = (nf + 1) // (nc + 1)
        index.append(r * np.arange(1, nc + 1) - 1)
    arr = f.as_array()[np.ix_(*reversed(index))]
    return Field(coarse, arr)


def sample(grid, fn):
    """Field from a function of the coordinate arrays, ``fn(x)`` or ``fn(x, y)``."""
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(*grid.coords()), dtype=float)
    return Field(grid, np.broadcast_to(vals, grid.shape))


def constant(grid, value):
    return Field(grid, np.full(grid.size, float(value)))


def _fmt_extents(ext):
    return "x".join(f"{a!r}:{b!r}" for a, b in ext)


def save_field_csv(f, path):
    """Write ``# dim, n_per_axis, extents`` header then one value per line."""
    g = f.grid
    lines = [f"# dim={g.dim}, n_per_axis={'x'.join(map(str, g.n))}, extents={_fmt_extents(g.extents)}"]
    lines.extend(repr(float(v)) for v in f.values)
    Path(path).write_text("\n".join(lines) + "\n")


def load_field_csv(path):
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ConfigurationError(f"{path}: missing field header")
    meta = {}
    for part in text[0].lstrip("#").split(","):
        key, _, val = part.strip().partition("=")
        meta[key.strip()] = val.strip()
    try:
        dim = int(meta["dim"])
        n = [int(m) for m in meta["n_per_axis"].split("x")]
        ext = [tuple(float(v) for v in e.split(":")) for e in meta["extents"].split("x")]
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed field header {text[0]!r}") from exc
    grid = build_grid(dim, ext, n)
    vals = [float(line) for line in text[1:] if line.strip()]
    return Field(grid, vals)
