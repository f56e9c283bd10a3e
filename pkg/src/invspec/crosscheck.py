"""Direct numerical minimization of ``||q - q0||_p^p`` subject to
``lambda1(q) = lam``, independent of the logistic route.

An augmented Lagrangian outer loop drives the constraint; the inner loop is
steepest descent in the L2 metric with Armijo backtracking.  The constraint
gradient is ``phi1(q)^2``.  Each merit evaluation costs one eigensolve,
warm-started from the previous eigenvector.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .inverse import objective_value
from .linops import SchrodingerOperator, smallest_eigenpair
from .mesh import Field, inner_product, l2_norm

__all__ = [
    "OptState",
    "merit_and_gradient",
    "augmented_lagrangian_minimize",
    "tangent_project",
    "stationarity_residual",
    "multiplier_nu",
    "feasible_start",
    "local_optimality_probe",
    "write_history_csv",
]


@dataclass
class OptState:
    q: Field
    rho: float
    mu_al: float
    history: list = field(default_factory=list)
    lambda1: float = math.nan
    phi1: Field = None
    outer_iterations: int = 0
    converged: bool = False

    @property
    def violation(self):
        return self.history[-1]["violation"] if self.history else math.nan


_T_MIN = 1e-8


def _eig(q, tol, v0=None):
    lam, phi, rep = smallest_eigenpair(SchrodingerOperator(q), tol=tol, v0=v0)
    return lam, phi, rep.iterations


def _merit(q, q0, lam, p, rho, mu_al, tol, v0=None):
    lam1, phi, its = _eig(q, tol, v0)
    d = q.values - q0.values
    Q = q.grid.weight * float(np.sum(np.abs(d) ** p))
    c = lam1 - lam
    merit = Q + mu_al * c + 0.5 * rho * c * c
    return merit, Q, c, lam1, phi, its


def _riesz_gradient(q, q0, p, rho, mu_al, c, phi):
    # L2 gradient (Euclidean gradient divided by the cell weight)
    d = q.values - q0.values
    return p * np.abs(d) ** (p - 2.0) * d + (mu_al + rho * c) * phi.values**2


def merit_and_gradient(q, q0, lam, p, rho, mu_al, tol=1e-10, v0=None):
    """Augmented Lagrangian merit and its Euclidean gradient in the node values.

    ``merit = Q(q) + mu (lambda1(q) - lam) + rho/2 (lambda1(q) - lam)^2`` with
    ``Q(q) = w sum |q - q0|^p``.
    """
    merit, _, c, _, phi, _ = _merit(q, q0, lam, p, rho, mu_al, tol, v0)
    g = _riesz_gradient(q, q0, p, rho, mu_al, c, phi)
    return merit, Field(q.grid, q.grid.weight * g)


def tangent_project(q, h, phi=None, tol=1e-10):
    """Remove from ``h`` its component along ``phi1(q)^2``.

    The result is tangent to the level set ``{lambda1 = lambda1(q)}``.
    """
    if phi is None:
        _, phi, _ = _eig(q, tol)
    w = phi * phi
    return h - (inner_product(w, h) / inner_product(w, w)) * w


def feasible_start(q0, lam, perturbation=None, tol=1e-10):
    """``q0 + h + c`` with the constant ``c`` chosen so that ``lambda1 = lam``."""
    base = q0 if perturbation is None else q0 + perturbation
    lam1, _, _ = _eig(base, tol)
    return base + (lam - lam1)


def augmented_lagrangian_minimize(
    q0,
    lam,
    p,
    start,
    tol=1e-9,
    maxit=20000,
    tol_g=1e-5,
    rho=10.0,
    max_outer=60,
    eig_tol=1e-11,
):
    """Minimize ``Q`` on ``{lambda1(q) = lam}`` from ``start``.

    Stops when ``|lambda1(q) - lam| <= tol`` and the L2 norm of the gradient of
    ``Q`` projected on the constraint tangent space is at most ``tol_g``.
    ``maxit`` caps the total number of inner descent steps.  The multiplier is
    updated by ``mu += rho c``; ``rho`` grows fivefold when the violation
    fails to drop by 4x between outer iterations.
    """
    grid = q0.grid
    w = grid.weight
    q = start
    mu = 0.0
    state = OptState(q=q, rho=rho, mu_al=mu)
    merit, Q, c, lam1, phi, its = _merit(q, q0, lam, p, rho, mu, eig_tol)
    state.history.append(
        {"iteration": 0, "outer": 0, "objective": Q, "violation": c, "step": 0.0, "eig_iterations": its,
         "merit": merit, "target": lam}
    )
    total = 0
    c_prev = math.inf
    step = 0.1
    for outer in range(1, max_outer + 1):
        # inner steepest descent on the merit at fixed (mu, rho)
        g = _riesz_gradient(q, q0, p, rho, mu, c, phi)
        while True:
            gnorm2 = w * float(np.dot(g, g))
            if math.sqrt(gnorm2) <= 0.5 * tol_g:
                break
            if total >= maxit:
                raise ConvergenceError(
                    f"augmented Lagrangian hit {maxit} descent steps", residual=abs(c), iterations=total
                )
            t = step
            while True:
                trial = Field(grid, q.values - t * g)
                m_t, Q_t, c_t, lam1_t, phi_t, its = _merit(trial, q0, lam, p, rho, mu, eig_tol, phi)
                if m_t <= merit - 1e-4 * t * gnorm2:
                    break
                t *= 0.5
                if t < _T_MIN:
                    break
            if t < _T_MIN:
                # merit differences are at rounding level; descent cannot resolve more
                break
            total += 1
            g_new = _riesz_gradient(trial, q0, p, rho, mu, c_t, phi_t)
            # Barzilai-Borwein guess for the next trial step
            s = -t * g
            y = g_new - g
            sy = float(np.dot(s, y))
            step = float(np.dot(s, s)) / sy if sy > 0 else 2 * t
            step = min(max(step, 1e-6), 10.0)
            q, merit, Q, c, lam1, phi, g = trial, m_t, Q_t, c_t, lam1_t, phi_t, g_new
            state.history.append(
                {"iteration": total, "outer": outer, "objective": Q, "violation": c, "step": t,
                 "eig_iterations": its, "merit": merit, "target": lam}
            )
        # multiplier update
        mu += rho * c
        if abs(c) > 0.25 * abs(c_prev):
            rho *= 5.0
        c_prev = c
        merit = Q + mu * c + 0.5 * rho * c * c
        proj = _projected_objective_gradient(q, q0, p, phi)
        state.outer_iterations = outer
        if abs(c) <= tol and proj <= tol_g:
            state.converged = True
            break
    state.q, state.rho, state.mu_al, state.lambda1, state.phi1 = q, rho, mu, lam1, phi
    if not state.converged:
        exc = ConvergenceError(
            f"augmented Lagrangian did not converge in {max_outer} outer iterations "
            f"(violation {c:.3e}, projected gradient {proj:.3e})", residual=abs(c), iterations=total
        )
        exc.state = state
        raise exc
    return state


def _projected_objective_gradient(q, q0, p, phi):
    d = q - q0
    gQ = Field(q.grid, p * np.abs(d.values) ** (p - 2.0) * d.values)
    return l2_norm(tangent_project(q, gQ, phi=phi))


def multiplier_nu(state, p):
    """Scale ``nu`` implied by the multiplier: ``p nu^(p-1) = -mu``."""
    return (-state.mu_al / p) ** (1.0 / (p - 1.0))


def stationarity_residual(state, q0, p):
    """L1 norm of ``p (q - q0)|q - q0|^(p-2) + mu phi1(q)^2`` at the final iterate."""
    d = state.q.values - q0.values
    r = p * d * np.abs(d) ** (p - 2.0) + state.mu_al * state.phi1.values**2
    return state.q.grid.weight * float(np.sum(np.abs(r)))


def local_optimality_probe(result, q0, lam, samples=20, amplitude=0.1, seed=0, modes=8, tol=1e-11):
    """Perturb ``q_hat`` along random tangent directions and restore feasibility.

    Each direction ``h`` is a random sine series projected so that
    ``<u_hat^2, h> = 0``, scaled to ``amplitude * max|q_hat - q0|`` in sup
    norm.  The perturbed potential is shifted by the constant
    ``lam - lambda1(q_hat + h)``.  Returns the list of ``Q(q') - Q(q_hat)``.
    """
    rng = np.random.default_rng(seed)
    grid = q0.grid
    p = result.p
    u2 = result.u_hat * result.u_hat
    scale = amplitude * float(np.abs(result.q_hat.values - q0.values).max())
    unit = [(x - a) / (b - a) for x, (a, b) in zip(grid.coords(), grid.extents)]
    base_Q = objective_value(q0, result.q_hat, p)
    out = []
    for _ in range(samples):
        vals = np.zeros(grid.shape)
        for k in range(1, modes + 1):
            term = rng.standard_normal() / k
            for u in unit:
                term = term * np.sin(np.pi * rng.integers(1, modes + 1) * u + rng.uniform(0, np.pi))
            vals += term
        h = Field(grid, vals.reshape(-1))
        h = h - (inner_product(u2, h) / inner_product(u2, u2)) * u2
        h = h * (scale / float(np.abs(h.values).max()))
        trial = result.q_hat + h
        lam1, _, _ = _eig(trial, tol)
        q_new = trial + (lam - lam1)
        out.append(objective_value(q0, q_new, p) - base_Q)
    return out


def write_history_csv(state, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "objective", "constraint_violation", "step_size", "eig_iterations"])
        for row in state.history:
            wr.writerow([row["iteration"], repr(row["objective"]), repr(row["violation"]), repr(row["step"]),
                         row["eig_iterations"]])
