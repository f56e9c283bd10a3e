"""Inverse principal-eigenvalue problems for Schrodinger operators on grids.

Finds the potential closest to a given ``q0`` (in ``L^p``) whose principal
Dirichlet eigenvalue equals a prescribed value, by way of a logistic
semilinear problem, and cross-checks the result by direct optimization.
"""

from .errors import (
    ConfigurationError,
    ConvergenceError,
    GridMismatchError,
    IndefiniteOperatorError,
    InvSpecError,
    NoPositiveSolution,
    NumericError,
    PositivityError,
)
from .inverse import InverseResult, solve_inverse, verify
from .logistic import LogisticProblem
from .mesh import Field, Grid, build_grid
from .potentials import PotentialDescriptor, make_potential
from .spectral import principal_eigenpair

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "Field",
    "Grid",
    "GridMismatchError",
    "IndefiniteOperatorError",
    "InvSpecError",
    "InverseResult",
    "LogisticProblem",
    "NoPositiveSolution",
    "NumericError",
    "PositivityError",
    "PotentialDescriptor",
    "build_grid",
    "make_potential",
    "principal_eigenpair",
    "solve_inverse",
    "verify",
    "__version__",
]
