"""Closest potential with a prescribed principal eigenvalue.

Given ``q0`` and ``lam > lambda1(q0)``, the minimizer of ``||q - q0||_p``
subject to ``lambda1(q) = lam`` is ``q0 + u^(2/(p-1))`` where ``u`` is the
positive solution of the logistic problem with ``gamma = 2p/(p-1)``; the
normalized ``u`` is the principal eigenfunction of the reconstructed
potential.  ``verify`` checks both facts with a fresh eigensolve.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import logistic
from .errors import NoPositiveSolution
from .mesh import Field, inner_product, l2_norm, lp_norm
from .spectral import principal_eigenpair

__all__ = [
    "InverseResult",
    "VerificationReport",
    "solve_inverse",
    "nu_recovery",
    "verify",
    "objective_value",
]


@dataclass
class VerificationReport:
    lambda_target: float
    lambda_achieved: float
    eigen_gap: float
    alignment: float
    passed: bool
    tol_lambda: float
    tol_phi: float
    eig_iterations: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class InverseResult:
    q_hat: Field
    u_hat: Field
    nu: float
    objective: float
    p: float
    gamma: float
    lam: float
    verify: VerificationReport = None
    solution: logistic.LogisticSolution = field(default=None, repr=False)
    lambda1_q0: float = math.nan
    degenerate: bool = False

    def summary(self):
        """JSON-ready numbers describing the reconstruction."""
        out = {
            "lambda_target": self.lam,
            "lambda1_q0": self.lambda1_q0,
            "p": self.p,
            "gamma": self.gamma,
            "nu": self.nu,
            "objective": self.objective,
            "distance_lp": self.objective ** (1.0 / self.p),
            "degenerate": self.degenerate,
        }
        if self.verify is not None:
            out.update(
                lambda_achieved=self.verify.lambda_achieved,
                eigen_gap=self.verify.eigen_gap,
                alignment=self.verify.alignment,
                verified=self.verify.passed,
            )
        if self.solution is not None:
            out["solver"] = {
                "residual_norm": self.solution.residual_norm,
                "newton_iterations": self.solution.newton_iterations,
                "method": self.solution.method,
                "max_u": self.u_hat.max(),
            }
        return out


def objective_value(q0, q, p):
    """``||q - q0||_p^p``."""
    return lp_norm(q - q0, p) ** p


def nu_recovery(u_hat, p):
    """Multiplier ``nu`` with ``u_hat = nu^((p-1)/2) phi1(q_hat)``.

    Since ``phi1(q_hat) = u_hat / ||u_hat||``, ``nu = ||u_hat||^(2/(p-1))``.
    """
    norm = l2_norm(u_hat)
    if norm == 0.0:
        raise ValueError("nu is undefined for a zero field")
    return norm ** (2.0 / (p - 1.0))


def verify(result, q0, lam, tol_lambda=None, tol_phi=1e-8, eig_tol=1e-10):
    """Fresh eigensolve of ``q_hat`` (all-ones start, no warm start).

    ``eigen_gap = |lambda1(q_hat) - lam|`` and
    ``alignment = 1 - |<phi1(q_hat), u_hat / ||u_hat||>|``.  Default
    ``tol_lambda`` is ``1e-8 * max(1, |lam|)``.
    """
    if tol_lambda is None:
        tol_lambda = 1e-8 * max(1.0, abs(lam))
    pair = principal_eigenpair(result.q_hat, tol=eig_tol)
    gap = abs(pair.lambda1 - lam)
    u = result.u_hat
    norm = l2_norm(u)
    if norm == 0.0:
        # degenerate case: q_hat = q0, eigenfunction alignment is vacuous
        alignment = 0.0
    else:
        alignment = 1.0 - abs(inner_product(pair.phi1, u)) / (norm * l2_norm(pair.phi1))
    passed = gap <= tol_lambda and alignment <= tol_phi
    return VerificationReport(
        lambda_target=float(lam),
        lambda_achieved=pair.lambda1,
        eigen_gap=gap,
        alignment=alignment,
        passed=bool(passed),
        tol_lambda=tol_lambda,
        tol_phi=tol_phi,
        eig_iterations=pair.report.iterations,
    )


def solve_inverse(q0, lam, p, tol=1e-10, eig_tol=1e-10, maxit=60, run_verify=True, allow_degenerate=False):
    """Reconstruct ``q_hat = q0 + u^(2/(p-1))`` and verify it.

    Raises NoPositiveSolution when ``lam <= lambda1(q0)``.  With
    ``allow_degenerate=True`` a target within ``eig_tol`` of ``lambda1(q0)``
    returns ``q_hat = q0``, ``u_hat = 0`` flagged as degenerate instead.
    """
    problem = logistic.LogisticProblem.from_p(q0, lam, p)
    pair = principal_eigenpair(q0, tol=eig_tol)
    if allow_degenerate and abs(lam - pair.lambda1) <= eig_tol:
        zero = Field(q0.grid, np.zeros(q0.grid.size))
        result = InverseResult(q0, zero, 0.0, 0.0, problem.p, problem.gamma, float(lam), lambda1_q0=pair.lambda1, degenerate=True)
        if run_verify:
            result.verify = verify(result, q0, lam, eig_tol=eig_tol)
        return result
    if lam <= pair.lambda1:
        raise NoPositiveSolution(logistic._no_solution_message(problem, pair.lambda1), lam, pair.lambda1)
    sol = logistic.solve(problem, tol=tol, maxit=maxit, pair=pair)
    u = sol.u
    q_hat = q0 + u ** (2.0 / (problem.p - 1.0))
    result = InverseResult(
        q_hat=q_hat,
        u_hat=u,
        nu=nu_recovery(u, problem.p),
        objective=objective_value(q0, q_hat, problem.p),
        p=problem.p,
        gamma=problem.gamma,
        lam=float(lam),
        solution=sol,
        lambda1_q0=pair.lambda1,
    )
    if run_verify:
        result.verify = verify(result, q0, lam, eig_tol=eig_tol)
    return result
