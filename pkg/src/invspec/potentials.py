"""Concrete potential families sampled on a grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .mesh import Field, load_field_csv, sample

__all__ = ["PotentialDescriptor", "FAMILIES", "make_potential", "parse_descriptor"]

# family -> (allowed parameters with defaults)
FAMILIES = {
    "constant": {"value": 0.0},
    "step": {"left": 0.0, "right": 10.0, "at": 0.5},
    "gaussian_well": {"depth": 50.0, "center": 0.5, "width": 0.1},
    "fourier_random": {"amplitude": 10.0, "modes": 6, "seed": None},
    "log_singular": {"scale": 1.0},
    "csv_file": {"path": None},
}


@dataclass(frozen=True)
class PotentialDescriptor:
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown potential family {self.family!r}; choose from {sorted(FAMILIES)}")
        unknown = set(self.params) - set(FAMILIES[self.family])
        if unknown:
            raise ConfigurationError(f"unknown parameters for {self.family}: {sorted(unknown)}")
        if self.family == "fourier_random" and self.params.get("seed") is None:
            raise ConfigurationError("fourier_random needs an explicit seed")
        if self.family == "csv_file" and not self.params.get("path"):
            raise ConfigurationError("csv_file needs a path")

    def resolved(self):
        """Parameters with defaults filled in."""
        out = dict(FAMILIES[self.family])
        out.update(self.params)
        return out

    def to_dict(self):
        return {"family": self.family, **self.resolved()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            family = d.pop("family")
        except KeyError:
            raise ConfigurationError("potential descriptor needs a 'family'") from None
        return cls(family, d)


def parse_descriptor(text):
    """Parse ``family[:key=val,key=val]`` as used on the command line."""
    family, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigurationError(f"malformed potential parameter {item!r}")
        key = key.strip()
        if key == "path":
            params[key] = val
            continue
        try:
            num = float(val)
        except ValueError:
            raise ConfigurationError(f"non-numeric value for {key}: {val!r}") from None
        params[key] = int(num) if key in ("modes", "seed") else num
    return PotentialDescriptor(family.strip(), params)


def _unit_coords(grid):
    # coordinates rescaled to (0, 1) per axis
    return [(x - a) / (b - a) for x, (a, b) in zip(grid.coords(), grid.extents)]


def make_potential(grid, descriptor):
    """Sample the described potential at the interior nodes of ``grid``.

    Positions (``at``, ``center``, ``width``) are relative to each axis, so the
    same descriptor works on any box.  Radial families use the distance to the
    center point in 2D.
    """
    if isinstance(descriptor, dict):
        descriptor = PotentialDescriptor.from_dict(descriptor)
    prm = descriptor.resolved()
    fam = descriptor.family
    unit = _unit_coords(grid)
    if fam == "constant":
        return Field(grid, np.full(grid.size, float(prm["value"])))
    if fam == "step":
        return sample(grid, lambda *x: np.where(unit[0] < prm["at"], prm["left"], prm["right"]))
    if fam == "gaussian_well":
        r2 = sum((u - prm["center"]) ** 2 for u in unit)
        return Field(grid, (-prm["depth"] * np.exp(-r2 / (2 * prm["width"] ** 2))).reshape(-1))
    if fam == "fourier_random":
        rng = np.random.default_rng(int(prm["seed"]))
        modes = int(prm["modes"])
        vals = np.zeros(grid.shape)
        if grid.dim == 1:
            coef = rng.standard_normal((modes, 2))
            for k in range(1, modes + 1):
                arg = 2 * np.pi * k * unit[0]
                vals += (coef[k - 1, 0] * np.cos(arg) + coef[k - 1, 1] * np.sin(arg)) / k
        else:
            coef = rng.standard_normal((modes, modes))
            for i in range(1, modes + 1):
                for j in range(1, modes + 1):
                    vals += coef[i - 1, j - 1] * np.cos(np.pi * i * unit[0]) * np.cos(np.pi * j * unit[1]) / (i * j)
        return Field(grid, prm["amplitude"] * vals.reshape(-1))
    if fam == "log_singular":
        # -log of the normalized distance product; finite at interior nodes, in L^p for all p
        vals = -sum(np.log(u * (1.0 - u)) for u in unit)
        return Field(grid, prm["scale"] * vals.reshape(-1))
    if fam == "csv_file":
        f = load_field_csv(prm["path"])
        if f.grid != grid:
            raise ConfigurationError(f"{prm['path']}: field grid {f.grid.n} does not match the run grid {grid.n}")
        return f
    raise ConfigurationError(f"unhandled family {fam}")
