"""Discrete Schrodinger operator ``A(q) = -Lap_h + diag(q)`` and its solvers.

The Laplacian uses the 3-point (1D) / 5-point (2D) stencil with zero ghost
values.  It is evaluated in flux form, ``-(D+ u - D- u) / h^2``, so that the
rounding error of a residual scales like ``eps |u'| / h`` instead of
``eps |u| / h^2``; the logistic and eigen residual tolerances rely on this.

Residual norms reported by this module are quadrature-weighted L2 norms
(``sqrt(w * sum r_i^2)``), the same norm in which eigenvectors are normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, ConvergenceError, GridMismatchError, IndefiniteOperatorError, PositivityError
from .mesh import Field

__all__ = [
    "SchrodingerOperator",
    "EigSolveReport",
    "neg_laplacian",
    "apply",
    "gershgorin_shift",
    "cg_solve",
    "smallest_eigenpair",
    "lowest_eigenpairs",
    "rayleigh_quotient",
    "assemble_sparse",
    "rounding_floor",
]


def neg_laplacian(grid, v):
    """``-Lap_h v`` for a flat value array ``v`` on ``grid``."""
    if grid.dim == 1:
        (h,) = grid.h
        d = np.empty(v.size + 1)
        d[0] = v[0]
        np.subtract(v[1:], v[:-1], out=d[1:-1])
        d[-1] = -v[-1]
        return (d[:-1] - d[1:]) / (h * h)
    arr = v.reshape(grid.shape)
    out = np.zeros_like(arr)
    for axis, h in enumerate(reversed(grid.h)):
        d = np.diff(arr, axis=axis, prepend=0.0, append=0.0)
        out -= np.diff(d, axis=axis) / (h * h)
    return out.reshape(-1)


def gershgorin_shift(q):
    """Shift ``sigma`` with ``A(q) + sigma I`` positive definite (``-Lap_h >= 0``)."""
    vals = q.values if isinstance(q, Field) else np.asarray(q)
    return max(0.0, -float(vals.min())) + 1.0


@dataclass(frozen=True)
class SchrodingerOperator:
    q: Field
    shift: float = None

    def __post_init__(self):
        if self.shift is None:
            object.__setattr__(self, "shift", gershgorin_shift(self.q))

    @property
    def grid(self):
        return self.q.grid

    def matvec(self, v):
        """``A v`` on raw arrays."""
        return neg_laplacian(self.grid, v) + self.q.values * v

    def shifted_matvec(self, v):
        """``(A + shift I) v`` on raw arrays."""
        return neg_laplacian(self.grid, v) + (self.q.values + self.shift) * v


def apply(op, f):
    if f.grid != op.grid:
        raise GridMismatchError("operator and field live on different grids")
    return Field(op.grid, op.matvec(f.values))


def assemble_sparse(grid, q=None):
    """CSC matrix of ``-Lap_h + diag(q)`` in lexicographic (x fastest) order."""
    mats = []
    for m, h in zip(grid.n, grid.h):
        mats.append(sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / (h * h))
    if grid.dim == 1:
        A = mats[0]
    else:
        tx, ty = mats
        A = sp.kron(sp.identity(grid.n[1]), tx) + sp.kron(ty, sp.identity(grid.n[0]))
    if q is not None:
        qv = q.values if isinstance(q, Field) else np.asarray(q)
        A = A + sp.diags(qv)
    return sp.csc_matrix(A)


def _cg(matvec, bv, tol, maxit, x0):
    n = bv.size
    bnorm = math.sqrt(float(np.dot(bv, bv)))
    if bnorm == 0.0:
        return np.zeros(n), 0
    target = tol * bnorm
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = bv - matvec(x) if x0 is not None else bv.copy()
    it = 0
    # the recursive residual can drift from the true one; restart from the latter
    for _ in range(4):
        rr = float(np.dot(r, r))
        if math.sqrt(rr) <= target:
            return x, it
        p = r.copy()
        while math.sqrt(rr) > target:
            if it >= maxit:
                raise ConvergenceError(
                    f"CG did not converge in {maxit} iterations",
                    residual=math.sqrt(rr) / bnorm,
                    iterations=it,
                )
            Ap = matvec(p)
            pAp = float(np.dot(p, Ap))
            if not pAp > 0.0:
                raise IndefiniteOperatorError(
                    f"CG breakdown: non-positive curvature {pAp:.3e} at iteration {it}",
                    residual=math.sqrt(rr) / bnorm,
                    iterations=it,
                )
            alpha = rr / pAp
            x += alpha * p
            r -= alpha * Ap
            rr_new = float(np.dot(r, r))
            p *= rr_new / rr
            p += r
            rr = rr_new
            it += 1
        r = bv - matvec(x)
    raise ConvergenceError("CG stalled: true residual stays above tolerance", iterations=it)


def cg_solve(matvec, b, tol=1e-12, maxit=None, x0=None):
    """Conjugate gradients for a symmetric positive definite ``matvec``.

    Returns ``x`` with ``||matvec(x) - b|| <= tol ||b||`` (plain 2-norm; the
    criterion is scale free).  ``b`` may be a Field or an array; the result has
    the same type.  Non-positive curvature raises IndefiniteOperatorError,
    running out of iterations raises ConvergenceError with the last residual.
    """
    as_field = isinstance(b, Field)
    bv = b.values if as_field else np.asarray(b, dtype=float)
    if maxit is None:
        maxit = 10 * bv.size
    if isinstance(x0, Field):
        x0 = x0.values
    x, _ = _cg(matvec, bv, tol, maxit, x0)
    return Field(b.grid, x) if as_field else x


@dataclass
class EigSolveReport:
    iterations: int = 0
    residual: float = math.inf
    cg_total_iterations: int = 0
    tol_effective: float = 0.0
    history: list = field(default_factory=list, repr=False)


def rounding_floor(op):
    """Smallest residual worth asking for: about ``2 eps ||A + sigma||``.

    Rounding a vector entry by ``eps |v_i|`` moves ``A v`` by up to
    ``eps ||A|| |v_i|``, so weighted residuals below this are noise.
    """
    bound = sum(4.0 / (h * h) for h in op.grid.h) + float(np.abs(op.q.values).max()) + op.shift
    return 2.0 * np.finfo(float).eps * bound


def _wnorm(grid, v):
    return math.sqrt(grid.weight * float(np.dot(v, v)))


def rayleigh_quotient(op, f):
    fv = f.values if isinstance(f, Field) else np.asarray(f)
    ff = float(np.dot(fv, fv))
    if ff == 0.0:
        raise ValueError("Rayleigh quotient of the zero field")
    return float(np.dot(op.matvec(fv), fv)) / ff


def _fix_sign_and_check(grid, v):
    if v.sum() < 0:
        v = -v
    # entries within rounding of zero may carry either sign
    floor = 64 * np.finfo(float).eps * float(np.abs(v).max())
    bad = v < -floor
    if bad.any() or not (v != 0).all():
        idx = int(np.flatnonzero(bad | (v == 0))[0])
        raise PositivityError(
            f"principal eigenvector not positive at node {idx} (value {v[idx]:.3e}); "
            "grid too coarse or potential too rough"
        )
    return np.abs(v)


def _inverse_iteration(op, v, tol, maxit, inner="cg", deflate=None):
    grid = op.grid
    sigma = op.shift
    report = EigSolveReport()
    tol = max(tol, rounding_floor(op))
    report.tol_effective = tol
    lu = None
    if inner == "direct":
        lu = spla.splu(assemble_sparse(grid, op.q.values + sigma))
    elif inner != "cg":
        raise ConfigurationError(f"unknown inner solver {inner!r}")
    if deflate is not None:
        v = deflate(v)
    v = v / _wnorm(grid, v)
    Av = op.matvec(v)
    lam = float(np.dot(Av, v)) * grid.weight
    r = Av - lam * v
    res = _wnorm(grid, r)
    while res > tol:
        if report.iterations >= maxit:
            raise ConvergenceError(
                f"inverse iteration did not converge in {maxit} iterations (residual {res:.3e})",
                residual=res,
                iterations=report.iterations,
            )
        if lu is None:
            # (A+s)^{-1} v = v/(lam+s) + z  with  (A+s) z = -r/(lam+s); solving for the
            # correction keeps CG far from its rounding floor
            rel = max(0.01, 0.1 * tol / res)
            z, its = _cg(op.shifted_matvec, -r / (lam + sigma), rel, 10 * grid.size, None)
            y = v / (lam + sigma) + z
            report.cg_total_iterations += its
        else:
            y = lu.solve(v)
        if deflate is not None:
            y = deflate(y)
        v = y / _wnorm(grid, y)
        Av = op.matvec(v)
        lam = float(np.dot(Av, v)) * grid.weight
        r = Av - lam * v
        res = _wnorm(grid, r)
        report.iterations += 1
        report.history.append(res)
    report.residual = res
    return lam, v, report


def smallest_eigenpair(op, tol=1e-10, maxit=500, v0=None, inner="cg", check_positive=True):
    """Principal eigenpair by shifted inverse power iteration.

    Iterates ``v <- normalize((A + sigma I)^{-1} v)`` from the all-ones vector
    (or ``v0``), with ``sigma = op.shift``.  Stops when the weighted residual
    ``||A phi - lam phi||`` drops below ``tol`` (raised to the rounding floor
    of the operator if needed, see ``report.tol_effective``).  ``inner="cg"`` solves each
    step by CG to a tolerance tied to the current eigen residual;
    ``inner="direct"`` factors ``A + sigma I`` once with a sparse LU.

    Returns ``(lam, phi, report)`` with ``phi`` L2-normalized and positive.
    """
    if not tol > 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    if v0 is None:
        v = np.ones(op.grid.size)
    else:
        v = np.array(v0.values if isinstance(v0, Field) else v0, dtype=float)
    lam, v, report = _inverse_iteration(op, v, tol, maxit, inner)
    if check_positive:
        v = _fix_sign_and_check(op.grid, v)
    elif v.sum() < 0:
        v = -v
    return lam, Field(op.grid, v), report


def lowest_eigenpairs(op, k=2, tol=1e-10, maxit=2000, inner="cg"):
    """The ``k`` lowest eigenpairs by inverse iteration with deflation.

    Each new vector is kept orthogonal to the ones already found.  Only the
    first eigenvector is required to be positive; later ones are signed so
    their largest-magnitude entry is positive.
    """
    grid = op.grid
    lam1, phi1, rep = smallest_eigenpair(op, tol=tol, maxit=maxit, inner=inner)
    pairs = [(lam1, phi1, rep)]
    basis = [phi1.values]
    rng = np.random.default_rng(12345)

    def deflate(x):
        for b in basis:
            x = x - grid.weight * float(np.dot(b, x)) * b
        return x

    for _ in range(1, k):
        lam, v, report = _inverse_iteration(op, rng.standard_normal(grid.size), tol, maxit, inner, deflate)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        pairs.append((lam, Field(grid, v), report))
        basis.append(v)
    return pairs
