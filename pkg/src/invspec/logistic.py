"""Positive solutions of the logistic Dirichlet problem

    -Lap u + q0 u = lam u - u^(gamma-1),   u > 0,   u = 0 on the boundary,

with ``gamma = 2p/(p-1)`` when built from a norm exponent ``p``.

``solve`` runs damped Newton from the amplitude-scaled principal
eigenfunction and falls back to monotone sub/supersolution iteration when
Newton fails.  The positive solution exists iff ``lam > lambda1(q0)`` and is
unique, which the multi-start tests exercise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, ConvergenceError, NoPositiveSolution, PositivityError
from .linops import assemble_sparse, neg_laplacian
from .mesh import Field, max_norm
from .spectral import principal_eigenpair

__all__ = [
    "LogisticProblem",
    "LogisticSolution",
    "check_p",
    "check_gamma",
    "amplitude_initial_guess",
    "residual",
    "newton_solve",
    "monotone_bracket_solve",
    "solve",
    "max_principle_bound",
    "residual_floor",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


def check_p(p, dim):
    """Reject norm exponents outside the admissible range for ``dim``."""
    p = float(p)
    if dim < 4:
        ok = p >= 2
        rng = "[2, +inf)"
    elif dim == 4:
        ok = p > 2
        rng = "(2, +inf)"
    else:
        ok = p >= dim / 2
        rng = f"[{dim / 2}, +inf)"
    if not (ok and math.isfinite(p)):
        raise ConfigurationError(f"p = {p} is not admissible in dimension {dim}: need p in {rng}")
    return p


def check_gamma(gamma, dim):
    gamma = float(gamma)
    if dim < 4:
        ok = 2 < gamma <= 4
        rng = "(2, 4]"
    elif dim == 4:
        ok = 2 < gamma < 4
        rng = "(2, 4)"
    else:
        ok = 2 < gamma <= 2 * dim / (dim - 2)
        rng = f"(2, {2 * dim / (dim - 2)}]"
    if not ok:
        raise ConfigurationError(f"gamma = {gamma} is not admissible in dimension {dim}: need gamma in {rng}")
    return gamma


@dataclass(frozen=True)
class LogisticProblem:
    q0: Field
    lam: float
    gamma: float
    p: float

    @classmethod
    def from_p(cls, q0, lam, p):
        p = check_p(p, q0.grid.dim)
        return cls(q0, float(lam), check_gamma(2 * p / (p - 1), q0.grid.dim), p)

    @classmethod
    def from_gamma(cls, q0, lam, gamma):
        gamma = check_gamma(gamma, q0.grid.dim)
        return cls(q0, float(lam), gamma, gamma / (gamma - 2))

    @property
    def grid(self):
        return self.q0.grid

    def shifted(self, c):
        """The same problem for ``(q0 + c, lam + c)``; it has the same solution."""
        return LogisticProblem(self.q0 + c, self.lam + c, self.gamma, self.p)


@dataclass
class LogisticSolution:
    u: Field
    residual_norm: float
    newton_iterations: int
    bracket_gap: float = math.nan
    method: str = "newton"
    tol_effective: float = 0.0


def max_principle_bound(problem):
    """``(lam - min q0)^(1/(gamma-2))``; no positive solution exceeds it."""
    return (problem.lam - problem.q0.min()) ** (1.0 / (problem.gamma - 2.0))


def _wnorm(grid, v):
    return math.sqrt(grid.weight * float(np.dot(v, v)))


def residual_floor(problem, u):
    """Rounding level of the weighted residual at ``u`` (array).

    Representing ``u`` to machine precision already perturbs ``A u`` by about
    ``eps ||A|| |u|``, so Newton and the monotone scheme stop at
    ``max(tol, residual_floor)``.
    """
    bound = (
        sum(4.0 / (h * h) for h in problem.grid.h)
        + float(np.abs(problem.q0.values - problem.lam).max())
        + (problem.gamma - 1.0) * float(np.abs(u).max()) ** (problem.gamma - 2.0)
    )
    return 0.5 * np.finfo(float).eps * bound * _wnorm(problem.grid, u)


def _residual(problem, u):
    up = np.maximum(u, 0.0)
    return neg_laplacian(problem.grid, u) + (problem.q0.values - problem.lam) * u + up ** (problem.gamma - 1.0)


def residual(problem, u):
    """Nodewise ``A(q0) u - lam u + u_+^(gamma-1)``."""
    neg = int(np.count_nonzero(u.values < 0))
    if neg:
        log.info("residual: %d negative entries clamped inside the nonlinearity", neg)
    return Field(problem.grid, _residual(problem, u.values))


def amplitude_initial_guess(problem, pair):
    """``c phi1(q0)`` with ``c`` solving the one-mode Galerkin projection."""
    gap = problem.lam - pair.lambda1
    if gap <= 0:
        raise NoPositiveSolution(_no_solution_message(problem, pair.lambda1), problem.lam, pair.lambda1)
    phi = pair.phi1.values
    moment = problem.grid.weight * float(np.sum(phi**problem.gamma))
    c = (gap / moment) ** (1.0 / (problem.gamma - 2.0))
    return Field(problem.grid, c * phi)


def _no_solution_message(problem, lambda1):
    return (
        f"lambda = {problem.lam!r} <= lambda1(q0) = {lambda1!r}: the logistic problem has only the zero "
        f"solution; positive solutions need lambda in ({lambda1!r}, +inf)"
    )


def _require_above_lambda1(problem, pair, tol):
    if pair is None:
        pair = principal_eigenpair(problem.q0, tol=tol)
    if problem.lam <= pair.lambda1:
        raise NoPositiveSolution(_no_solution_message(problem, pair.lambda1), problem.lam, pair.lambda1)
    return pair


def newton_solve(problem, u0, tol=DEFAULT_TOL, maxit=60, pair=None, polish=4):
    """Damped Newton from a positive start.

    Steps are halved until every node stays positive and the residual norm
    satisfies an Armijo decrease.  After the residual drops below ``tol`` up to
    ``polish`` further full steps are taken while each at least halves the
    residual, which matters close to the bifurcation point where the Jacobian
    is nearly singular.
    """
    _require_above_lambda1(problem, pair, tol)
    grid = problem.grid
    u = np.array(u0.values, dtype=float)
    if not (u > 0).all():
        raise PositivityError("Newton start must be positive at every node")
    base = assemble_sparse(grid, problem.q0.values - problem.lam)
    g1 = problem.gamma - 1.0
    F = _residual(problem, u)
    r = _wnorm(grid, F)
    it = 0
    extra = 0
    while True:
        tol_eff = max(tol, residual_floor(problem, u))
        if r <= tol_eff and extra >= polish:
            break
        if it >= maxit:
            if r <= tol_eff:
                break
            raise ConvergenceError(f"Newton did not converge in {maxit} iterations", residual=r, iterations=it)
        J = base + sp.diags(g1 * u ** (problem.gamma - 2.0))
        try:
            delta = spla.splu(sp.csc_matrix(J)).solve(-F)
        except RuntimeError as exc:
            raise ConvergenceError(f"Jacobian solve failed: {exc}", residual=r, iterations=it) from exc
        if not np.isfinite(delta).all():
            raise ConvergenceError("Jacobian solve produced non-finite values", residual=r, iterations=it)
        it += 1
        if r <= tol_eff:
            # polishing: accept only clear progress, never fail
            trial = u + delta
            if not (trial > 0).all():
                break
            Ft = _residual(problem, trial)
            rt = _wnorm(grid, Ft)
            if rt > 0.5 * r:
                if rt < r:
                    u, F, r = trial, Ft, rt
                break
            u, F, r = trial, Ft, rt
            extra += 1
            continue
        alpha = 1.0
        while not (u + alpha * delta > 0).all():
            alpha *= 0.5
            if alpha < 1e-12:
                raise ConvergenceError("positivity safeguard stalled the Newton step", residual=r, iterations=it)
        while True:
            trial = u + alpha * delta
            Ft = _residual(problem, trial)
            rt = _wnorm(grid, Ft)
            if rt <= (1.0 - 1e-4 * alpha) * r:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                raise ConvergenceError("Newton line search stagnated", residual=r, iterations=it)
        u, F, r = trial, Ft, rt
    return LogisticSolution(Field(grid, u), r, it, tol_effective=max(tol, residual_floor(problem, u)))


def monotone_bracket_solve(problem, tol=DEFAULT_TOL, maxit=20000, pair=None):
    """Monotone iteration from a sub- and a supersolution.

    Iterates ``u <- (A(q0) + K)^{-1} (K u + lam u - u^(gamma-1))`` from
    ``eps phi1(q0)`` (increasing) and from the constant
    ``M = (lam - min q0)^(1/(gamma-2))`` (decreasing).  ``K`` makes the map
    order preserving on ``[0, M]``.  Returns ``(u_min, u_max)``, each with
    residual at most ``max(tol, residual_floor)``.
    """
    pair = _require_above_lambda1(problem, pair, tol)
    grid = problem.grid
    g = problem.gamma
    M = max_principle_bound(problem)
    K = max(0.0, -problem.q0.min()) + (g - 1.0) * M ** (g - 2.0)
    lu = spla.splu(assemble_sparse(grid, problem.q0.values + K))
    phi = pair.phi1.values
    # subsolution needs eps^(g-2) max(phi)^(g-2) <= lam - lambda1; keep a safety factor
    eps = 0.5 * (problem.lam - pair.lambda1) ** (1.0 / (g - 2.0)) / phi.max()
    lower = eps * phi
    upper = np.full(grid.size, M)
    slack = 1e-9 * M  # rounding allowance for the order checks

    def step(u):
        return lu.solve((K + problem.lam) * u - u ** (g - 1.0))

    def done(u):
        return _wnorm(grid, _residual(problem, u)) <= max(tol, residual_floor(problem, u))

    lo_done, hi_done = done(lower), done(upper)
    it = 0
    while not (lo_done and hi_done):
        if it >= maxit:
            raise ConvergenceError(f"monotone iteration did not converge in {maxit} steps", iterations=it)
        if not lo_done:
            nxt = step(lower)
            if (nxt < lower - slack).any():
                raise ConvergenceError("monotone iteration from below decreased", iterations=it)
            lower = nxt
            lo_done = done(lower)
        if not hi_done:
            nxt = step(upper)
            if (nxt > upper + slack).any():
                raise ConvergenceError("monotone iteration from above increased", iterations=it)
            upper = nxt
            hi_done = done(upper)
        it += 1
    monotone_bracket_solve.last_iterations = it
    return Field(grid, lower), Field(grid, upper)


monotone_bracket_solve.last_iterations = 0


def _check_solution(problem, sol):
    u = sol.u.values
    if not (u > 0).all():
        raise PositivityError(f"logistic solution not positive at node {int(np.flatnonzero(u <= 0)[0])}")
    bound = max_principle_bound(problem)
    if u.max() > bound + 1e-10:
        raise PositivityError(f"max u = {u.max():.12g} exceeds the maximum-principle bound {bound:.12g}")
    return sol


def solve(problem, tol=DEFAULT_TOL, maxit=60, u0=None, pair=None):
    """Positive solution: Newton from the amplitude guess, monotone fallback."""
    pair = _require_above_lambda1(problem, pair, tol)
    if u0 is None:
        u0 = amplitude_initial_guess(problem, pair)
    try:
        sol = newton_solve(problem, u0, tol=tol, maxit=maxit, pair=pair)
    except ConvergenceError as exc:
        log.warning("Newton failed (%s); falling back to monotone iteration", exc)
        lo, hi = monotone_bracket_solve(problem, tol=tol, pair=pair)
        sol = newton_solve(problem, 0.5 * (lo + hi), tol=tol, maxit=maxit, pair=pair)
        sol.bracket_gap = max_norm(hi - lo)
        sol.method = "monotone+newton"
    return _check_solution(problem, sol)
