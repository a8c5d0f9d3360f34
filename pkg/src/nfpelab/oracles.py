"""Closed-form reference solutions used to cross-check the solvers.

Three families: the self-similar source solution of the porous-medium
equation, the (optionally advected) heat kernel, and the kernel of the
one-dimensional linear implicit equation u - lam*u'' = f on the line.
The porous-medium normalization constant is fixed by one-dimensional
radial quadrature plus a scalar root solve rather than any closed-form
expression, so comparisons against it are independent of the exponent
algebra implemented elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .grid_field import Field, GridSpec

_SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


@dataclass(frozen=True)
class OracleSolution:
    """A closed-form space-time density with metadata.

    ``evaluate(t, points)`` accepts points of shape (k, d) (or (k,) when
    d = 1) and returns the density values at time t.
    """

    kind: str
    d: int
    params: dict
    evaluate: Callable[[float, np.ndarray], np.ndarray]

    def sample_field(self, grid: GridSpec, t: float) -> Field:
        """Evaluate at the grid's cell centers."""
        if grid.d != self.d:
            raise ValueError(f"oracle is {self.d}-dimensional, grid is {grid.d}-dimensional")
        vals = self.evaluate(t, grid.centers())
        return Field(grid, np.asarray(vals).reshape(grid.shape))


def _as_points(x: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if d == 1:
        x = np.atleast_1d(x)
        if x.ndim == 1:
            x = x[:, None]
    elif x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"points must have {d} coordinates, got shape {x.shape}")
    return x


def barenblatt_front_constant(d: int, m: float, mass: float, tol: float = 1e-10) -> float:
    """Normalization constant of the self-similar porous-medium profile.

    Solves integral(mass_of_profile(C)) = mass by radial quadrature and a
    bracketed scalar root solve to relative tolerance ``tol``.
    """
    if m <= 1:
        raise ValueError(f"porous-medium exponent must exceed 1, got m = {m}")
    if mass <= 0:
        raise ValueError(f"mass must be positive, got {mass}")
    k = d / (d * (m - 1.0) + 2.0)
    kappa = k * (m - 1.0) / (2.0 * m * d)
    area = _SPHERE_AREA[d]

    def profile_mass(C: float) -> float:
        radius = math.sqrt(C / kappa)
        val, _err = quad(
            lambda rho: (C - kappa * rho * rho) ** (1.0 / (m - 1.0)) * rho ** (d - 1),
            0.0,
            radius,
            limit=200,
        )
        return area * val

    lo, hi = 1e-8, 1.0
    while profile_mass(lo) > mass:
        lo *= 0.5
    while profile_mass(hi) < mass:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("failed to bracket the normalization constant")
    return float(
        brentq(lambda C: profile_mass(C) - mass, lo, hi, xtol=1e-15, rtol=tol, maxiter=200)
    )


def barenblatt(d: int, m: float, mass: float = 1.0, a: float = 1.0) -> OracleSolution:
    """Self-similar source solution of u_t = Lap(a * u^m) with the given mass.

    u(t, x) = s^(-k) * (C - kappa |x|^2 s^(-2k/d))_+^(1/(m-1)) with s = a*t,
    k = d/(d(m-1)+2) and kappa = k(m-1)/(2md); the coefficient a enters as a
    pure time rescaling.
    """
    if d not in _SPHERE_AREA:
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    k = d / (d * (m - 1.0) + 2.0)
    kappa = k * (m - 1.0) / (2.0 * m * d)
    C = barenblatt_front_constant(d, m, mass)

    def evaluate(t: float, x: np.ndarray) -> np.ndarray:
        if t <= 0:
            raise ValueError(f"self-similar profile needs t > 0, got {t}")
        s = a * t
        pts = _as_points(x, d)
        r2 = np.sum(pts * pts, axis=1)
        arg = np.maximum(C - kappa * r2 * s ** (-2.0 * k / d), 0.0)
        return s ** (-k) * arg ** (1.0 / (m - 1.0))

    params = {"m": m, "mass": mass, "a": a, "k": k, "kappa": kappa, "C": C}
    return OracleSolution(kind="barenblatt", d=d, params=params, evaluate=evaluate)


def heat_kernel(d: int, drift: tuple[float, ...] | None = None) -> OracleSolution:
    """Fundamental solution of u_t = Lap(u) - div(c u): a drifting Gaussian.

    Each axis has variance 2t; the center moves along c*t.
    """
    if d not in _SPHERE_AREA:
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    c = np.zeros(d) if drift is None else np.asarray(drift, dtype=np.float64)
    if c.shape != (d,):
        raise ValueError(f"drift must have {d} components, got {c.shape}")

    def evaluate(t: float, x: np.ndarray) -> np.ndarray:
        if t <= 0:
            raise ValueError(f"heat kernel needs t > 0, got {t}")
        pts = _as_points(x, d)
        shifted = pts - c * t
        r2 = np.sum(shifted * shifted, axis=1)
        return (4.0 * math.pi * t) ** (-d / 2.0) * np.exp(-r2 / (4.0 * t))

    return OracleSolution(kind="heat_kernel", d=d, params={"drift": tuple(c)}, evaluate=evaluate)


def linear_resolvent_kernel_1d(lam: float, x: np.ndarray) -> np.ndarray:
    """Green's function of u - lam*u'' = delta on the line: e^(-|x|/sqrt(lam))/(2 sqrt(lam))."""
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    x = np.asarray(x, dtype=np.float64)
    s = math.sqrt(lam)
    return np.exp(-np.abs(x) / s) / (2.0 * s)
