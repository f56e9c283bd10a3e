"""Independent reference computations for the tests.

The dense oracle assembles the finite-difference matrix entry by entry,
reduces it to tridiagonal form with Householder reflections, locates the
smallest eigenvalue by Sturm-sequence bisection and recovers the eigenvector
by dense inverse iteration.  Nothing here calls into the package's solvers.
"""

import math

import numpy as np


def dense_matrix(grid, q):
    """Explicit ``-Lap_h + diag(q)`` on interior nodes, x index fastest."""
    n = list(grid.n)
    h = list(grid.h)
    size = math.prod(n)
    A = np.zeros((size, size))
    qv = np.asarray(q.values if hasattr(q, "values") else q, dtype=float)

    def index(ix):
        k, stride = 0, 1
        for i, m in zip(ix, n):
            k += i * stride
            stride *= m
        return k

    for k in range(size):
        ix, rem = [], k
        for m in n:
            ix.append(rem % m)
            rem //= m
        A[k, k] = qv[k]
        for axis in range(len(n)):
            A[k, k] += 2.0 / h[axis] ** 2
            for step in (-1, 1):
                j = list(ix)
                j[axis] += step
                if 0 <= j[axis] < n[axis]:
                    A[k, index(j)] -= 1.0 / h[axis] ** 2
    return A


def householder_tridiagonal(A):
    """Diagonal and off-diagonal of an orthogonally similar tridiagonal matrix."""
    T = np.array(A, dtype=float)
    n = T.shape[0]
    for k in range(n - 2):
        x = T[k + 1:, k].copy()
        alpha = -math.copysign(np.linalg.norm(x), x[0] if x[0] != 0 else 1.0)
        v = x.copy()
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        # T <- H T H with H = I - 2 v v^T acting on rows/cols k+1..
        sub = T[k + 1:, :]
        sub -= 2.0 * np.outer(v, v @ sub)
        sub = T[:, k + 1:]
        sub -= 2.0 * np.outer(sub @ v, v)
    d = np.diag(T).copy()
    e = np.diag(T, 1).copy()
    return d, e


def sturm_count(d, e, x):
    """Number of eigenvalues of the tridiagonal matrix strictly below ``x``."""
    count = 0
    r = d[0] - x
    tiny = np.finfo(float).tiny
    if r < 0:
        count += 1
    with np.errstate(over="ignore"):
        for i in range(1, len(d)):
            if r == 0.0:
                r = tiny
            r = d[i] - x - e[i - 1] ** 2 / r
            if r < 0:
                count += 1
    return count


def bisect_smallest(d, e, rtol=1e-15):
    radius = np.abs(np.concatenate([[0.0], e])) + np.abs(np.concatenate([e, [0.0]]))
    lo = float(np.min(d - radius))
    hi = float(np.max(d + radius))
    while hi - lo > rtol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if sturm_count(d, e, mid) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def dense_eigenpair(grid, q):
    """``(lambda1, phi1)`` with ``weight * sum(phi1^2) = 1`` and ``phi1 > 0``."""
    A = dense_matrix(grid, q)
    d, e = householder_tridiagonal(A)
    lam = bisect_smallest(d, e)
    n = A.shape[0]
    # shift slightly below lam so the solve stays well posed
    shift = lam - 1e-7 * max(1.0, abs(lam))
    M = A - shift * np.eye(n)
    v = np.ones(n)
    for _ in range(6):
        v = np.linalg.solve(M, v)
        v /= np.linalg.norm(v)
    lam = float(v @ A @ v)
    v = v / math.sqrt(grid.weight * float(v @ v))
    if v.sum() < 0:
        v = -v
    return lam, v


def stencil_eigenvalue_1d(n, length=1.0, k=1):
    """``(2/h^2)(1 - cos(k pi h / L))`` for the 3-point stencil on ``(0, L)``."""
    h = length / (n + 1)
    return 2.0 / h**2 * (1.0 - math.cos(k * math.pi * h / length))
