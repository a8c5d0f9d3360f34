"""Numerical laboratory for degenerate nonlinear Fokker-Planck equations.

The package solves u_t - Lap(beta(u)) + div(D b(u) u) = 0 on a box with
zero-flux boundaries: single implicit (resolvent) solves, mild semigroup
evolution by backward Euler composition, measure-valued initial data,
decay-rate fits against closed-form solutions, and a stochastic particle
harness whose marginals are checked against the PDE.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .grid_field import Field, GridSpec, deposit_mass, interpolate, load_field, save_field
from .profiles import Profile, RegularizedProfile, lambda0, make_profile

__all__ = [
    "Field",
    "GridSpec",
    "Profile",
    "RegularizedProfile",
    "deposit_mass",
    "interpolate",
    "lambda0",
    "load_field",
    "make_profile",
    "save_field",
    "__version__",
]
