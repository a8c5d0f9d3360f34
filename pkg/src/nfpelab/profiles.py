"""Equation coefficients and their regularizations.

A :class:`Profile` bundles the diffusion nonlinearity beta, the drift
magnitude b, and the drift field D for

    u_t - Lap(beta(u)) + div(D b(u) u) = 0,

together with the constants the estimates need (degeneracy exponent,
growth exponent, sup of b, drift constant).  A :class:`RegularizedProfile`
wraps a profile with the epsilon-smoothed coefficients used by the
regularized implicit equation: the Yosida approximation of beta plus an
eps*r tilt, a mollified and damped b, and an optional far-field cutoff
of D.  With eps = 0 every regularized coefficient reduces to the original
one, which is the production path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_YOSIDA_ATOL = 1e-13
_YOSIDA_MAX_ITER = 120
_MOLLIFIER_NODES = 96


@dataclass(frozen=True)
class Profile:
    """Coefficients of the equation and the constants derived from them.

    Callables are vectorized: ``beta``, ``beta_prime``, ``b``, ``b_prime``
    map arrays elementwise; ``D`` maps points of shape (k, d) to vectors of
    the same shape and ``div_D`` to scalars of shape (k,).
    """

    beta: Callable[[np.ndarray], np.ndarray]
    beta_prime: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]
    b_prime: Callable[[np.ndarray], np.ndarray]
    D: Callable[[np.ndarray], np.ndarray]
    div_D: Callable[[np.ndarray], np.ndarray]
    alpha: float
    a: float
    m: float
    sup_b: float
    M_drift: float
    b_is_constant: bool
    beta_strictly_increasing: bool
    div_D_nonneg: bool
    # (coefficient, exponent) when beta(r) = a * |r|^(m-1) * r, else None.
    # The particle noise amplitude uses it to take the exact 0-density limit.
    power_law: tuple[float, float] | None = None
    beta_kind: str = "custom"
    b_kind: str = "custom"
    D_kind: str = "custom"

    def check_hypotheses(self, r_grid: np.ndarray | None = None) -> list[str]:
        """Sampled verification of the standing assumptions.

        Checks beta(0) = 0, monotonicity of beta, nonnegativity and
        boundedness of b, and the coupling rule that a non-constant b is
        only admissible with strictly increasing beta.  Returns a list of
        violation messages, empty when all checks pass.
        """
        if r_grid is None:
            r_grid = np.linspace(-50.0, 50.0, 2001)
        r_grid = np.asarray(r_grid, dtype=np.float64)
        problems: list[str] = []
        beta_vals = np.asarray(self.beta(r_grid), dtype=np.float64)
        if abs(float(self.beta(np.array([0.0]))[0])) > 1e-14:
            problems.append("beta(0) must be 0")
        diffs = np.diff(beta_vals)
        if np.any(diffs < -1e-12):
            problems.append("beta must be nondecreasing")
        if self.beta_strictly_increasing and np.any(diffs <= 0):
            problems.append("beta declared strictly increasing but has a flat step")
        if np.any(np.asarray(self.beta_prime(r_grid)) < -1e-12):
            problems.append("beta_prime must be nonnegative")
        b_vals = np.asarray(self.b(r_grid), dtype=np.float64)
        if np.any(b_vals < -1e-14):
            problems.append("b must be nonnegative")
        if np.any(b_vals > self.sup_b + 1e-12):
            problems.append(f"b exceeds its declared bound sup_b = {self.sup_b}")
        if not self.b_is_constant and not self.beta_strictly_increasing:
            problems.append("non-constant b requires strictly increasing beta")
        return problems


def _const_array(value: float) -> Callable[[np.ndarray], np.ndarray]:
    def f(r: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(r, dtype=np.float64), value)

    return f


def _zero_array(r: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(r, dtype=np.float64))


def _smoothstep(s: np.ndarray) -> np.ndarray:
    """Cubic ramp: 0 at s<=0, 1 at s>=1, C1 in between with slope <= 1.5."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def make_profile(
    beta_kind: str = "porous_medium",
    m: float = 2.0,
    a: float = 1.0,
    b_kind: str = "constant",
    b_value: float = 1.0,
    D_kind: str = "zero",
    D_vector: tuple[float, ...] | None = None,
    ramp_inner: float = 1.0,
    ramp_outer: float = 2.0,
    d: int = 1,
) -> Profile:
    """Assemble one of the built-in profiles.

    beta kinds: ``porous_medium`` (a*|r|^(m-1)*r, needs m >= 1 for a C1 beta)
    and ``linear``.  b kinds: ``constant`` and ``rational_bump``
    (1/(1+r^2)).  D kinds: ``zero``, ``constant`` (vector), and
    ``inward_ramp`` (-x scaled by a radial cutoff supported in
    ``ramp_outer``).
    """
    if beta_kind == "linear":
        m = 1.0
        a = 1.0 if a is None else float(a)
    if beta_kind not in ("porous_medium", "linear"):
        raise ValueError(f"unknown beta kind {beta_kind!r}")
    if m < 1.0:
        raise ValueError(
            f"porous-medium exponent m = {m} rejected: beta must be continuously "
            "differentiable and nondecreasing with beta(0) = 0, which requires m >= 1"
        )
    if a <= 0:
        raise ValueError(f"beta coefficient a must be positive, got {a}")

    m = float(m)
    a = float(a)

    def beta(r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        return a * np.abs(r) ** (m - 1.0) * r

    def beta_prime(r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        return a * m * np.abs(r) ** (m - 1.0)

    strictly_increasing = True

    if b_kind == "constant":
        if b_value < 0:
            raise ValueError(f"constant b must be nonnegative, got {b_value}")
        b = _const_array(float(b_value))
        b_prime = _zero_array
        sup_b = float(b_value)
        b_is_constant = True
    elif b_kind == "rational_bump":

        def b(r: np.ndarray) -> np.ndarray:
            r = np.asarray(r, dtype=np.float64)
            return 1.0 / (1.0 + r * r)

        def b_prime(r: np.ndarray) -> np.ndarray:
            r = np.asarray(r, dtype=np.float64)
            return -2.0 * r / (1.0 + r * r) ** 2

        sup_b = 1.0
        b_is_constant = False
    else:
        raise ValueError(f"unknown b kind {b_kind!r}")

    if D_kind == "zero":

        def D(x: np.ndarray) -> np.ndarray:
            return np.zeros_like(np.atleast_2d(np.asarray(x, dtype=np.float64)))

        div_D = lambda x: np.zeros(np.atleast_2d(np.asarray(x)).shape[0])  # noqa: E731
        M_drift = 0.0
        div_nonneg = True
    elif D_kind == "constant":
        if D_vector is None:
            D_vector = (1.0,) + (0.0,) * (d - 1)
        vec = np.asarray(D_vector, dtype=np.float64)
        if vec.shape != (d,):
            raise ValueError(f"D_vector must have {d} components, got {vec.shape}")

        def D(x: np.ndarray) -> np.ndarray:
            x = np.atleast_2d(np.asarray(x, dtype=np.float64))
            return np.broadcast_to(vec, x.shape).copy()

        div_D = lambda x: np.zeros(np.atleast_2d(np.asarray(x)).shape[0])  # noqa: E731
        M_drift = float(np.linalg.norm(vec))
        div_nonneg = True
    elif D_kind == "inward_ramp":
        r0, r1 = float(ramp_inner), float(ramp_outer)
        if not (0 < r0 < r1):
            raise ValueError(f"need 0 < ramp_inner < ramp_outer, got {r0}, {r1}")

        def _chi(rho: np.ndarray) -> np.ndarray:
            return 1.0 - _smoothstep((rho - r0) / (r1 - r0))

        def _chi_prime(rho: np.ndarray) -> np.ndarray:
            s = np.clip((rho - r0) / (r1 - r0), 0.0, 1.0)
            return -6.0 * s * (1.0 - s) / (r1 - r0)

        def D(x: np.ndarray) -> np.ndarray:
            x = np.atleast_2d(np.asarray(x, dtype=np.float64))
            rho = np.sqrt(np.sum(x * x, axis=1))
            return -x * _chi(rho)[:, None]

        def div_D(x: np.ndarray) -> np.ndarray:
            x = np.atleast_2d(np.asarray(x, dtype=np.float64))
            rho = np.sqrt(np.sum(x * x, axis=1))
            return -(x.shape[1] * _chi(rho) + rho * _chi_prime(rho))

        rho_grid = np.linspace(0.0, r1, 20001)
        div_vals = -(d * _chi(rho_grid) + rho_grid * _chi_prime(rho_grid))
        M_drift = float(np.max(np.maximum(-div_vals, 0.0) + rho_grid * _chi(rho_grid)))
        div_nonneg = False
    else:
        raise ValueError(f"unknown D kind {D_kind!r}")

    return Profile(
        beta=beta,
        beta_prime=beta_prime,
        b=b,
        b_prime=b_prime,
        D=D,
        div_D=div_D,
        alpha=m,
        a=a,
        m=m,
        sup_b=sup_b,
        M_drift=M_drift,
        b_is_constant=b_is_constant,
        beta_strictly_increasing=strictly_increasing,
        div_D_nonneg=div_nonneg,
        power_law=(a, m),
        beta_kind=beta_kind,
        b_kind=b_kind,
        D_kind=D_kind,
    )


def lambda0(profile: Profile) -> float:
    """Largest implicit step with the sup-norm resolvent bound, 1/(M + sqrt(M)*sup b).

    Infinite when the drift constant M vanishes (no drift, or divergence-free
    drift of zero magnitude).
    """
    M = profile.M_drift
    if M == 0.0:
        return math.inf
    return 1.0 / (M + math.sqrt(M) * profile.sup_b)


def yosida_inverse(profile: Profile, eps: float, r: np.ndarray) -> np.ndarray:
    """Solve g + eps*beta(g) = r elementwise, to absolute tolerance 1e-13.

    Newton from g = r with a bisection safeguard on the bracket between 0
    and r; the left side has derivative >= 1, so the residual bounds the
    root error directly.
    """
    r = np.asarray(r, dtype=np.float64)
    if eps == 0.0:
        return r.copy()
    lo = np.minimum(r, 0.0)
    hi = np.maximum(r, 0.0)
    g = r.copy()
    for _ in range(_YOSIDA_MAX_ITER):
        res = g + eps * np.asarray(profile.beta(g)) - r
        if np.max(np.abs(res)) <= _YOSIDA_ATOL:
            break
        pos = res > 0
        hi = np.where(pos, np.minimum(hi, g), hi)
        lo = np.where(pos, lo, np.maximum(lo, g))
        step = res / (1.0 + eps * np.asarray(profile.beta_prime(g)))
        cand = g - step
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        g = np.where(bad, 0.5 * (lo + hi), cand)
    return g


@dataclass
class RegularizedProfile:
    """A profile with its eps-smoothed coefficients.

    ``eps = 0`` is the identity regularization: beta_tilde is beta itself,
    b_eps is b, D_eps is D.
    """

    base: Profile
    eps: float = 0.0
    _nodes: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.eps < 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        t, w = np.polynomial.legendre.leggauss(_MOLLIFIER_NODES)
        bump = np.exp(-1.0 / (1.0 - t * t))
        wts = w * bump
        self._nodes = t
        self._weights = wts / np.sum(wts)

    def beta_eps(self, r: np.ndarray) -> np.ndarray:
        """Yosida approximation of beta: beta evaluated at (I + eps*beta)^(-1) r."""
        r = np.asarray(r, dtype=np.float64)
        if self.eps == 0.0:
            return np.asarray(self.base.beta(r), dtype=np.float64)
        g = yosida_inverse(self.base, self.eps, r)
        return np.asarray(self.base.beta(g), dtype=np.float64)

    def beta_tilde(self, r: np.ndarray) -> np.ndarray:
        """beta_eps(r) + eps*r, the strictly monotone tilt of the Yosida map."""
        r = np.asarray(r, dtype=np.float64)
        if self.eps == 0.0:
            return np.asarray(self.base.beta(r), dtype=np.float64)
        return self.beta_eps(r) + self.eps * r

    def beta_tilde_prime(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if self.eps == 0.0:
            return np.asarray(self.base.beta_prime(r), dtype=np.float64)
        g = yosida_inverse(self.base, self.eps, r)
        bp = np.asarray(self.base.beta_prime(g), dtype=np.float64)
        return bp / (1.0 + self.eps * bp) + self.eps

    def b_eps(self, r: np.ndarray) -> np.ndarray:
        """Mollified, damped b: (b * rho_eps)(r) / (1 + eps|r|).

        A constant b is returned unchanged, matching the case split in the
        regularization (the damping would otherwise break b = const).
        """
        r = np.asarray(r, dtype=np.float64)
        if self.eps == 0.0 or self.base.b_is_constant:
            return np.asarray(self.base.b(r), dtype=np.float64)
        shifted = r[..., None] - self.eps * self._nodes
        smoothed = np.asarray(self.base.b(shifted)) @ self._weights
        return smoothed / (1.0 + self.eps * np.abs(r))

    def b_eps_prime(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if self.eps == 0.0 or self.base.b_is_constant:
            return np.asarray(self.base.b_prime(r), dtype=np.float64)
        shifted = r[..., None] - self.eps * self._nodes
        smoothed = np.asarray(self.base.b(shifted)) @ self._weights
        smoothed_prime = np.asarray(self.base.b_prime(shifted)) @ self._weights
        denom = 1.0 + self.eps * np.abs(r)
        return (smoothed_prime * denom - smoothed * self.eps * np.sign(r)) / denom**2

    def drift_density(self, r: np.ndarray) -> np.ndarray:
        """The advected quantity g(r) = b_eps(r) * r."""
        r = np.asarray(r, dtype=np.float64)
        return self.b_eps(r) * r

    def drift_density_prime(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        return self.b_eps(r) + self.b_eps_prime(r) * r

    def D_eps(self, x: np.ndarray, force_cutoff: bool = False) -> np.ndarray:
        """The drift field, optionally with the far-field ramp cutoff.

        On a bounded box the field is always square-integrable, so the
        cutoff branch of the regularization is never needed in production;
        ``force_cutoff`` exists to exercise it.  The ramp drops from 1 at
        radius 1/eps to 0 at 1/eps + 2 with slope at most 0.75, inside the
        unit-slope budget the estimates assume.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        vals = np.asarray(self.base.D(x), dtype=np.float64)
        if not force_cutoff or self.eps == 0.0:
            return vals
        rho = np.sqrt(np.sum(x * x, axis=1))
        eta = 1.0 - _smoothstep((rho - 1.0 / self.eps) / 2.0)
        return vals * eta[:, None]
