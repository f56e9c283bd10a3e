"""Principal eigenpair of the Schrodinger operator, its derivative in the
potential, and numerical probes of concavity and continuity of ``lambda1``."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError
from .linops import EigSolveReport, SchrodingerOperator, smallest_eigenpair
from .mesh import Field, inner_product, max_norm

__all__ = [
    "SpectralPair",
    "ProbeReport",
    "principal_eigenpair",
    "eigenvalue_derivative",
    "concavity_slack",
    "concavity_probe",
    "continuity_probe",
]

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SpectralPair:
    lambda1: float
    phi1: Field
    report: EigSolveReport = field(compare=False, repr=False)


def principal_eigenpair(q, tol=DEFAULT_TOL, maxit=500, v0=None, inner="cg"):
    """``lambda1(q)`` and the positive eigenfunction with unit L2 norm."""
    lam, phi, report = smallest_eigenpair(SchrodingerOperator(q), tol=tol, maxit=maxit, v0=v0, inner=inner)
    return SpectralPair(lam, phi, report)


def eigenvalue_derivative(q, h, tol=DEFAULT_TOL, pair=None):
    """Directional derivative of ``lambda1`` at ``q`` along ``h``.

    Equals ``<phi1^2, h>`` for the unit-norm eigenfunction; pass ``pair`` to
    reuse an eigensolve already done for ``q``.
    """
    if pair is None:
        pair = principal_eigenpair(q, tol=tol)
    phi = pair.phi1
    return inner_product(phi * phi, h) / inner_product(phi, phi)


def _hash_fields(*fields):
    m = hashlib.sha256()
    for f in fields:
        m.update(f.digest().encode())
    return m.hexdigest()[:16]


@dataclass
class ProbeReport:
    kind: str
    inputs_hash: str
    samples: list
    min_slack: float
    passed: bool
    tol: float

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def concavity_slack(q1, q2, t, tol=DEFAULT_TOL, lam1=None, lam2=None):
    """``lambda1(t q1 + (1-t) q2) - t lambda1(q1) - (1-t) lambda1(q2)``."""
    if t in (0.0, 1.0):
        return 0.0
    if lam1 is None:
        lam1 = principal_eigenpair(q1, tol=tol).lambda1
    if lam2 is None:
        lam2 = principal_eigenpair(q2, tol=tol).lambda1
    mix = principal_eigenpair(t * q1 + (1.0 - t) * q2, tol=tol).lambda1
    return mix - (t * lam1 + (1.0 - t) * lam2)


def concavity_probe(q1, q2, t_samples=9, tol=DEFAULT_TOL):
    """Sample the concavity slack of ``lambda1`` on the segment ``[q2, q1]``.

    ``t`` runs over ``k / (t_samples + 1)``, ``k = 1..t_samples``.  Passes when
    every slack is at least ``-10 tol``.
    """
    if np.array_equal(q1.values, q2.values):
        raise ConfigurationError("concavity probe needs two distinct potentials")
    lam1 = principal_eigenpair(q1, tol=tol).lambda1
    lam2 = principal_eigenpair(q2, tol=tol).lambda1
    samples = []
    for k in range(1, t_samples + 1):
        t = k / (t_samples + 1)
        samples.append({"t": t, "slack": concavity_slack(q1, q2, t, tol, lam1, lam2)})
    min_slack = min(s["slack"] for s in samples)
    return ProbeReport("concavity", _hash_fields(q1, q2), samples, min_slack, min_slack >= -10 * tol, tol)


def continuity_probe(q, direction, deltas, tol=DEFAULT_TOL):
    """Table of ``|lambda1(q + delta d) - lambda1(q)|`` for shrinking ``delta``.

    Each row also carries the bound ``delta * max|d|`` (``lambda1`` moves by at
    most the sup of the perturbation).  ``min_slack`` is the smallest margin
    ``bound - diff``; the probe passes when the differences never grow as
    ``delta`` shrinks and stay under the bound, both up to ``10 tol``.
    """
    base = principal_eigenpair(q, tol=tol).lambda1
    dmax = max_norm(direction)
    samples = []
    for delta in deltas:
        if delta == 0:
            diff = 0.0
        else:
            diff = abs(principal_eigenpair(q + delta * direction, tol=tol).lambda1 - base)
        samples.append({"delta": float(delta), "diff": diff, "bound": abs(delta) * dmax})
    slack = min(s["bound"] - s["diff"] for s in samples)
    monotone = all(b["diff"] <= a["diff"] + 10 * tol for a, b in zip(samples, samples[1:]))
    passed = monotone and slack >= -10 * tol
    return ProbeReport("continuity", _hash_fields(q, direction), samples, slack, passed, tol)
