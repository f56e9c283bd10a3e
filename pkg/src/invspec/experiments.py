"""Measured tables: stability of the reconstruction in ``q0`` and ``lam``,
grid convergence, and an exploratory solver for the coupled multi-eigenvalue
system.

Every table carries a provenance block (config hash, seed, grid, tolerances)
and can be written as CSV with a ``#`` header or as JSON.  Sweep points run
sequentially so results are bit-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import least_squares

from .errors import ConfigurationError, ConvergenceError, GridMismatchError, InvSpecError, NoPositiveSolution
from .inverse import solve_inverse
from .linops import SchrodingerOperator, assemble_sparse, lowest_eigenpairs
from .logistic import check_p
from .mesh import Field, build_grid, h1_seminorm, l2_norm, lp_norm, max_norm, restrict_to_coarse
from .potentials import make_potential
from .spectral import principal_eigenpair

__all__ = [
    "Table",
    "SweepSpec",
    "check_deltas",
    "stability_sweep_q0",
    "stability_sweep_lambda",
    "gap_schedule",
    "convergence_study",
    "fit_order",
    "MultiEigProblem",
    "multi_eigenvalue_solve",
    "config_hash",
]

log = logging.getLogger(__name__)


def config_hash(obj):
    """Short sha256 of the canonical JSON form of ``obj``."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_dict(self):
        return {"meta": self.meta, "columns": self.columns, "rows": self.rows}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key}={json.dumps(self.meta[key], sort_keys=True)}\n")
            wr = csv.writer(fh)
            wr.writerow(self.columns)
            for r in self.rows:
                wr.writerow([repr(v) if isinstance(v, float) else v for v in r])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_xy(self, path, x, y):
        """Plot-ready two-column CSV."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([x, y])
            for a, b in zip(self.column(x), self.column(y)):
                wr.writerow([repr(a), repr(b)])


def _strictly_monotone(values):
    d = np.diff(np.asarray(values, dtype=float))
    return bool((d > 0).all() or (d < 0).all())


def check_deltas(deltas):
    """Deltas must be non-negative and strictly monotone apart from a zero row."""
    nonzero = [d for d in deltas if d != 0]
    if any(d < 0 for d in deltas):
        raise ConfigurationError("deltas must be non-negative")
    if len(nonzero) > 1 and not _strictly_monotone(nonzero):
        raise ConfigurationError("deltas must be strictly monotone")
    return list(deltas)


@dataclass(frozen=True)
class SweepSpec:
    """Perturbation sweep ``q0 + delta h`` at fixed ``lam``.

    ``base`` and ``direction`` are potential descriptors (dicts with a
    ``family`` key).  ``grid`` is ``{"dim", "extents", "n"}``.
    """

    base: dict
    direction: dict
    deltas: tuple
    lam: float
    p: float
    grid: dict
    seed: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        check_deltas(self.deltas)

    def build_grid(self):
        g = self.grid
        return build_grid(g["dim"], g["extents"], g["n"])

    def provenance(self):
        d = asdict(self)
        d["deltas"] = list(self.deltas)
        return {"config_hash": config_hash(d), "seed": self.seed, "grid": self.grid, "tol": self.tol,
                "p": self.p, "lam": self.lam}


def stability_sweep_q0(spec):
    """Distances of ``q_hat`` (in ``L^p``) and ``u_hat`` (discrete H1 seminorm)
    between the perturbed and unperturbed problems, one row per ``delta``.

    ``meta["passed"]`` records whether both columns decrease along the
    nonzero deltas with the last value at most ``1e-2`` times the first.
    """
    grid = spec.build_grid()
    q0 = make_potential(grid, spec.base)
    h = make_potential(grid, spec.direction)
    check_p(spec.p, grid.dim)
    perturbed = {}
    for d in spec.deltas:
        qd = q0 + d * h
        lam1 = principal_eigenpair(qd, tol=spec.tol).lambda1
        if spec.lam <= lam1:
            raise ConfigurationError(f"delta={d}: lam={spec.lam} is not above lambda1={lam1}")
        perturbed[d] = qd
    ref = solve_inverse(q0, spec.lam, spec.p, tol=spec.tol, run_verify=False)
    table = Table(["delta", "q_hat_dist_lp", "u_hat_dist_h1"], meta=spec.provenance())
    for d in spec.deltas:
        try:
            res = ref if d == 0 else solve_inverse(perturbed[d], spec.lam, spec.p, tol=spec.tol, run_verify=False)
        except InvSpecError as exc:
            raise ConvergenceError(f"sweep aborted at delta={d}: {exc}") from exc
        table.rows.append([float(d), lp_norm(res.q_hat - ref.q_hat, spec.p), h1_seminorm(res.u_hat - ref.u_hat)])
    nz = [r for r in table.rows if r[0] != 0]
    ok = len(nz) >= 2
    for col in (1, 2):
        vals = [r[col] for r in nz]
        ok = ok and all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] <= 1e-2 * vals[0]
    table.meta["passed"] = bool(ok)
    return table


def gap_schedule(lambda1, gaps):
    """``lambda1 + gap`` for a strictly decreasing list of positive gaps."""
    gaps = [float(g) for g in gaps]
    if any(g <= 0 for g in gaps) or any(b >= a for a, b in zip(gaps, gaps[1:])):
        raise ConfigurationError("gaps must be positive and strictly decreasing")
    return [lambda1 + g for g in gaps]


def stability_sweep_lambda(q0, schedule, p, tol=1e-10, lambda1=None):
    """``||q_hat - q0||_{L^p}`` and ``||u_hat||_{L^2}`` along a schedule
    decreasing toward ``lambda1(q0)``.

    ``meta["passed"]`` holds when both columns strictly decrease and the last
    distance is at most ``1e-3``.
    """
    schedule = [float(s) for s in schedule]
    if lambda1 is None:
        lambda1 = principal_eigenpair(q0, tol=tol).lambda1
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigurationError("lambda schedule must be strictly decreasing")
    for lam in schedule:
        if lam <= lambda1:
            raise NoPositiveSolution(f"schedule entry {lam!r} is not above lambda1(q0) = {lambda1!r}", lam, lambda1)
    table = Table(
        ["lambda", "gap", "q_hat_dist_lp", "u_hat_l2"],
        meta={"lambda1": lambda1, "p": float(p), "tol": tol, "grid": q0.grid.describe(),
              "q0_digest": q0.digest()},
    )
    for lam in schedule:
        res = solve_inverse(q0, lam, p, tol=tol, run_verify=False)
        table.rows.append([lam, lam - lambda1, lp_norm(res.q_hat - q0, p), l2_norm(res.u_hat)])
    dist = table.column("q_hat_dist_lp")
    unorm = table.column("u_hat_l2")
    dec = all(b < a for a, b in zip(dist, dist[1:])) and all(b < a for a, b in zip(unorm, unorm[1:]))
    table.meta["passed"] = bool(dec and dist[-1] <= 1e-3)
    return table


def fit_order(hs, errors):
    """Slope of ``log(error)`` against ``log(h)`` by least squares."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def convergence_study(q0_descriptor, lam, p, ns=(127, 255, 511), extents=((0.0, 1.0),), dim=1, tol=1e-11):
    """Successive differences on nested grids for ``lambda1(q0)``, ``u_hat`` and ``q_hat``.

    Field differences are measured in the max norm at the nodes of the
    coarser grid of each pair.  The fitted order uses the mesh width of the
    coarser grid; ``meta["orders"]`` holds one order per quantity.
    """
    if len(ns) < 3:
        raise ConfigurationError("convergence study needs at least three grids")
    grids = [build_grid(dim, extents, n) for n in ns]
    for c, f in zip(grids, grids[1:]):
        if any((nf + 1) % (nc + 1) for nf, nc in zip(f.n, c.n)) or f.size <= c.size:
            raise GridMismatchError(f"grids {c.n} and {f.n} are not nested")
    lam1s, us, qs = [], [], []
    for g in grids:
        q0 = make_potential(g, q0_descriptor)
        lam1s.append(principal_eigenpair(q0, tol=tol).lambda1)
        res = solve_inverse(q0, lam, p, tol=tol, eig_tol=tol, run_verify=False)
        us.append(res.u_hat)
        qs.append(res.q_hat)
    table = Table(["h", "lambda1_diff", "u_hat_diff", "q_hat_diff"])
    for i in range(len(grids) - 1):
        c, f = grids[i], grids[i + 1]
        table.rows.append([
            c.h[0],
            abs(lam1s[i] - lam1s[i + 1]),
            max_norm(us[i] - restrict_to_coarse(us[i + 1], c)),
            max_norm(qs[i] - restrict_to_coarse(qs[i + 1], c)),
        ])
    hs = table.column("h")
    orders = {name: fit_order(hs, table.column(name)) for name in ("lambda1_diff", "u_hat_diff", "q_hat_diff")}
    table.meta = {"ns": list(ns), "lam": float(lam), "p": float(p), "q0": dict(q0_descriptor), "tol": tol,
                  "lambda1": lam1s, "orders": orders}
    return table


@dataclass
class MultiEigProblem:
    """Targets ``lam_1 < ... < lam_m`` for the coupled system

        -Lap u_i + q0 u_i = lam_i u_i - S^e u_i,   S = sum_j mu_j u_j^2,

    with ``e = 1/(p-1)`` ("matched") or ``e = p/(p-1)`` ("literal") and the
    closure ``<u_i, u_i> = 1``.  The reconstructed potential is ``q0 + S^e``.
    """

    q0: Field
    targets: tuple
    p: float
    exponent_mode: str = "matched"
    mu: tuple = None

    def __post_init__(self):
        self.targets = tuple(float(t) for t in self.targets)
        if not 1 <= len(self.targets) <= 3:
            raise ConfigurationError("m must be 1, 2 or 3")
        if any(b <= a for a, b in zip(self.targets, self.targets[1:])):
            raise ConfigurationError("targets must be strictly increasing")
        if self.exponent_mode not in ("matched", "literal"):
            raise ConfigurationError(f"exponent_mode must be 'matched' or 'literal', not {self.exponent_mode!r}")
        self.p = check_p(self.p, self.q0.grid.dim)

    @property
    def m(self):
        return len(self.targets)

    @property
    def exponent(self):
        return 1.0 / (self.p - 1.0) if self.exponent_mode == "matched" else self.p / (self.p - 1.0)


def _galerkin_mu(prob, phis, lams):
    # <phi_i, F_i> = 0 with u_i = phi_i:  lam_i(q0) - lam_i + <phi_i^2, S^e> = 0
    w = prob.q0.grid.weight
    e = prob.exponent
    P = np.array([f.values for f in phis])

    def eqs(mu):
        S = np.maximum(mu @ P**2, 0.0)
        Se = S**e
        return np.array([lams[i] - prob.targets[i] + w * float(np.dot(P[i] ** 2, Se)) for i in range(prob.m)])

    scale = max(abs(t) for t in prob.targets)
    start = np.full(prob.m, 1.0)
    sol = least_squares(eqs, start, bounds=(0.0, np.inf), x_scale=scale, xtol=1e-14, ftol=1e-14, gtol=1e-14)
    return sol.x


def multi_eigenvalue_solve(prob, tol=1e-10, maxit=80, eig_tol=1e-11):
    """Damped Newton for ``(u_1..u_m, mu_1..mu_m)`` started from the lowest
    eigenpairs of ``q0`` with Galerkin multipliers.

    Returns a findings dict.  A Newton failure is reported as "no solution
    found from this start"; nothing is concluded about existence.  Negative
    multipliers are projected to zero and counted.
    """
    q0 = prob.q0
    grid = q0.grid
    N, m, w, e = grid.size, prob.m, grid.weight, prob.exponent
    op0 = SchrodingerOperator(q0)
    pairs = lowest_eigenpairs(op0, k=m, tol=eig_tol)
    phis = [pr[1] for pr in pairs]
    lams0 = [pr[0] for pr in pairs]
    mu = np.asarray(prob.mu, dtype=float) if prob.mu is not None else _galerkin_mu(prob, phis, lams0)
    U = np.array([f.values for f in phis])
    A = assemble_sparse(grid, q0.values)
    targets = np.array(prob.targets)
    projections = 0
    findings = {
        "m": m,
        "targets": list(prob.targets),
        "p": prob.p,
        "exponent_mode": prob.exponent_mode,
        "exponent": e,
        "closure": "normalization <u_i,u_i> = 1 (chosen closure; orthogonality is reported, not imposed)",
        "lambda_q0": lams0,
        "mu_initial": mu.tolist(),
    }

    def residual(U, mu):
        S = mu @ U**2
        Se = np.maximum(S, 0.0) ** e
        F = [A @ U[i] - targets[i] * U[i] + Se * U[i] for i in range(m)]
        G = [0.5 * (w * float(np.dot(U[i], U[i])) - 1.0) for i in range(m)]
        return np.concatenate(F + [np.array(G)])

    def rnorm(R):
        return math.sqrt(w * float(np.dot(R[: m * N], R[: m * N])) + float(np.dot(R[m * N:], R[m * N:])))

    def floor(U, mu):
        S = mu @ U**2
        bound = sum(4.0 / h**2 for h in grid.h) + float(np.abs(q0.values).max()) + float(targets.max())
        bound += (1.0 + 2 * e) * float(np.abs(S).max()) ** e
        return np.finfo(float).eps * bound * math.sqrt(m)

    R = residual(U, mu)
    r = rnorm(R)
    it = 0
    status = "converged"
    message = ""
    while r > max(tol, floor(U, mu)):
        if it >= maxit:
            status, message = "failed", f"no solution found from this start (Newton hit {maxit} iterations)"
            break
        S = np.maximum(mu @ U**2, 1e-300)
        Se = S**e
        dSe = e * S ** (e - 1.0)
        blocks = [[None] * (m + 1) for _ in range(m + 1)]
        for i in range(m):
            for k in range(m):
                B = sp.diags(dSe * U[i] * 2.0 * mu[k] * U[k])
                if i == k:
                    B = B + A + sp.diags(Se - targets[i])
                blocks[i][k] = B
            blocks[i][m] = sp.csr_matrix(np.column_stack([dSe * U[i] * U[k] ** 2 for k in range(m)]))
        # closure rows: gradient of (<u_k, u_k> - 1)/2
        for k in range(m):
            row = np.zeros((m, N))
            row[k] = w * U[k]
            blocks[m][k] = sp.csr_matrix(row)
        blocks[m][m] = sp.csr_matrix((m, m))
        J = sp.bmat(blocks, format="csc")
        try:
            delta = spla.spsolve(J, -R)
        except RuntimeError as exc:
            status, message = "failed", f"no solution found from this start (singular Jacobian: {exc})"
            break
        if not np.isfinite(delta).all():
            status, message = "failed", "no solution found from this start (singular Jacobian)"
            break
        dU = delta[: m * N].reshape(m, N)
        dmu = delta[m * N:]
        alpha = 1.0
        while True:
            Ut = U + alpha * dU
            mut = mu + alpha * dmu
            if (mut < 0).any():
                projections += 1
                log.info("multiplier projected to zero: %s", mut.tolist())
                mut = np.maximum(mut, 0.0)
            Rt = residual(Ut, mut)
            rt = rnorm(Rt)
            if rt <= (1.0 - 1e-4 * alpha) * r:
                break
            alpha *= 0.5
            if alpha < 1e-10:
                break
        it += 1
        if alpha < 1e-10:
            status, message = "failed", "no solution found from this start (line search stagnated)"
            break
        U, mu, R, r = Ut, mut, Rt, rt
    findings.update(status=status, message=message, newton_iterations=it, residual=r,
                    mu=mu.tolist(), mu_projections=projections)
    Ufields = [Field(grid, U[i]) for i in range(m)]
    findings["orthogonality"] = [[w * float(np.dot(U[i], U[k])) for k in range(m)] for i in range(m)]
    q_hat = q0 + Field(grid, np.maximum(mu @ U**2, 0.0) ** e)
    if status == "converged":
        achieved = [pr[0] for pr in lowest_eigenpairs(SchrodingerOperator(q_hat), k=m, tol=eig_tol)]
        findings["lambda_achieved"] = achieved
        findings["lambda_error"] = [abs(a - t) for a, t in zip(achieved, prob.targets)]
    findings["q_hat"] = q_hat
    findings["u"] = Ufields
    return findings
