"""Mild evolution: composition of implicit steps, and its consistency checks.

The semigroup is realized exactly as the theory builds it: n backward
Euler steps of size dt approximate the solution at t = n*dt.  The module
also carries the two diagnostics that probe that construction directly,
the exponential-formula halving test and the space-time weak-form
residual of the limit equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .grid_field import Field, GridSpec
from .profiles import RegularizedProfile
from .resolvent import ResolventConfig, drift_face_normals, solve_resolvent

_DIAG_COLUMNS = ("t", "mass", "l1", "l2", "linf", "newton_iters")


@dataclass(frozen=True)
class EvolveConfig:
    """Time-stepping run description.

    ``save_times`` are snapped to the nearest step multiple; alternatively
    ``save_every`` keeps every k-th step.  t = 0 and t = T are always kept.
    """

    T: float
    dt: float
    save_times: tuple[float, ...] | None = None
    save_every: int | None = None
    resolvent: ResolventConfig = ResolventConfig()

    def __post_init__(self) -> None:
        if self.T <= 0 or self.dt <= 0:
            raise ValueError(f"T and dt must be positive, got T={self.T}, dt={self.dt}")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"T = {self.T} is not an integer multiple of dt = {self.dt}")
        if self.save_every is not None and self.save_every < 1:
            raise ValueError(f"save_every must be >= 1, got {self.save_every}")

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    def saved_step_indices(self) -> list[int]:
        n = self.n_steps
        idx = {0, n}
        if self.save_every is not None:
            idx.update(range(0, n + 1, self.save_every))
        if self.save_times is not None:
            for t in self.save_times:
                k = round(t / self.dt)
                if not (0 <= k <= n):
                    raise ValueError(f"save time {t} outside [0, {self.T}]")
                idx.add(k)
        return sorted(idx)


@dataclass
class Trajectory:
    """Saved fields at selected times plus per-step scalar diagnostics.

    ``diagnostics`` maps column name to an array over all steps (including
    the initial state): t, mass, l1, l2, linf, newton_iters.
    """

    grid: GridSpec
    dt: float
    times: np.ndarray
    fields: list[Field] = dc_field(repr=False)
    diagnostics: dict[str, np.ndarray] | None = None

    def __post_init__(self) -> None:
        if len(self.fields) != len(self.times):
            raise ValueError("one saved field per saved time required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("saved times must be strictly increasing")

    def field_at(self, t: float) -> Field:
        """Saved field nearest to t."""
        i = int(np.argmin(np.abs(self.times - t)))
        return self.fields[i]

    def field_for_interval(self, t: float) -> Field:
        """Saved field at the right endpoint of the step interval containing t.

        The mild solution is a step function taking, on (t_k, t_{k+1}], the
        value of the step's endpoint; coefficient lookups for the particle
        harness use this convention.
        """
        i = int(np.searchsorted(self.times, t - 1e-12 * max(1.0, abs(t))))
        return self.fields[min(i, len(self.fields) - 1)]


def evolve(u0: Field, profile: RegularizedProfile, cfg: EvolveConfig) -> Trajectory:
    """Run n = T/dt implicit steps from u0, saving fields and diagnostics.

    Per-step scalars are recorded for every step; fields only at the saved
    indices.  Restarting from a saved state reproduces the continued run
    bitwise, because each step's Newton iteration starts from the previous
    state and sees identical inputs.
    """
    n = cfg.n_steps
    keep = set(cfg.saved_step_indices())
    faces = drift_face_normals(u0.grid, profile, cfg.resolvent.force_cutoff)
    diag = {c: [] for c in _DIAG_COLUMNS}

    def record(t: float, fld: Field, iters: int) -> None:
        diag["t"].append(t)
        diag["mass"].append(fld.mass())
        diag["l1"].append(fld.norm_l1())
        diag["l2"].append(fld.norm_l2())
        diag["linf"].append(fld.norm_linf())
        diag["newton_iters"].append(iters)

    u = u0.copy()
    record(0.0, u, 0)
    times = [0.0] if 0 in keep else []
    fields = [u.copy()] if 0 in keep else []
    for i in range(1, n + 1):
        u, rep = solve_resolvent(u, profile, cfg.dt, cfg.resolvent, faces)
        record(i * cfg.dt, u, rep.newton_iters + rep.picard_iters)
        if i in keep:
            times.append(i * cfg.dt)
            fields.append(u.copy())
    return Trajectory(
        grid=u0.grid,
        dt=cfg.dt,
        times=np.asarray(times),
        fields=fields,
        diagnostics={c: np.asarray(v) for c, v in diag.items()},
    )


def exponential_formula_check(
    u0: Field,
    profile: RegularizedProfile,
    t: float,
    n_list: list[int],
    rcfg: ResolventConfig | None = None,
) -> list[tuple[int, float]]:
    """Halving distances |(J_{t/n})^n u0 - (J_{t/2n})^{2n} u0|_1 along n_list.

    The distances shrink like 1/n when the exponential formula converges at
    first order, so successive ratios sit near 2.
    """
    rcfg = rcfg or ResolventConfig()
    faces = drift_face_normals(u0.grid, profile, rcfg.force_cutoff)

    def n_fold(n: int) -> Field:
        u = u0.copy()
        for _ in range(n):
            u, _ = solve_resolvent(u, profile, t / n, rcfg, faces)
        return u

    out = []
    cache: dict[int, Field] = {}
    for n in n_list:
        for k in (n, 2 * n):
            if k not in cache:
                cache[k] = n_fold(k)
        diff = Field(u0.grid, cache[n].values - cache[2 * n].values).norm_l1()
        out.append((n, diff))
    return out


def contraction_check(
    u0: Field, v0: Field, profile: RegularizedProfile, cfg: EvolveConfig
) -> float:
    """Largest violation of the l1 contraction along two evolutions.

    Returns max over saved times of |S(t)u0 - S(t)v0|_1 - |u0 - v0|_1;
    nonpositive values (up to solver slack) mean the contraction holds.
    """
    ta = evolve(u0, profile, cfg)
    tb = evolve(v0, profile, cfg)
    base = Field(u0.grid, u0.values - v0.values).norm_l1()
    worst = -np.inf
    for fa, fb in zip(ta.fields, tb.fields):
        worst = max(worst, Field(u0.grid, fa.values - fb.values).norm_l1() - base)
    return float(worst)


@dataclass(frozen=True)
class SpaceTimeTestFunction:
    """A compactly supported C^1-in-time, C^2-in-space test function.

    Callables are vectorized over points of shape (k, d): ``value``,
    ``time_derivative`` and ``laplacian`` return shape (k,), ``gradient``
    returns (k, d).  ``t_end`` bounds the temporal support and
    ``space_radius``/``center`` the spatial support (used to reject test
    functions that stick out of the box).
    """

    value: Callable[[float, np.ndarray], np.ndarray]
    time_derivative: Callable[[float, np.ndarray], np.ndarray]
    gradient: Callable[[float, np.ndarray], np.ndarray]
    laplacian: Callable[[float, np.ndarray], np.ndarray]
    t_end: float
    space_radius: float
    center: tuple[float, ...]


def bump_test_function(
    d: int, t_end: float, space_radius: float, center: tuple[float, ...] | None = None
) -> SpaceTimeTestFunction:
    """Separable polynomial bump: (1 - tau/t_end)^3 * prod (1 - y_i^2)^3.

    Smooth enough for the weak form (C^1 in t, C^2 in x), vanishing at the
    edges of its support together with the needed derivatives.
    """
    c = np.zeros(d) if center is None else np.asarray(center, dtype=np.float64)
    R = float(space_radius)
    T = float(t_end)

    def _w(y: np.ndarray) -> np.ndarray:
        return np.where(np.abs(y) < 1.0, (1.0 - y * y) ** 3, 0.0)

    def _wp(y: np.ndarray) -> np.ndarray:
        return np.where(np.abs(y) < 1.0, -6.0 * y * (1.0 - y * y) ** 2, 0.0)

    def _wpp(y: np.ndarray) -> np.ndarray:
        return np.where(np.abs(y) < 1.0, 6.0 * (1.0 - y * y) * (5.0 * y * y - 1.0), 0.0)

    def _s(t: float) -> float:
        return (1.0 - t / T) ** 3 if t < T else 0.0

    def _sp(t: float) -> float:
        return -3.0 / T * (1.0 - t / T) ** 2 if t < T else 0.0

    def _pts(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if d == 1 and x.ndim == 1:
            x = x[:, None]
        return (x - c) / R

    def value(t: float, x: np.ndarray) -> np.ndarray:
        y = _pts(x)
        return _s(t) * np.prod(_w(y), axis=1)

    def time_derivative(t: float, x: np.ndarray) -> np.ndarray:
        y = _pts(x)
        return _sp(t) * np.prod(_w(y), axis=1)

    def gradient(t: float, x: np.ndarray) -> np.ndarray:
        y = _pts(x)
        w = _w(y)
        out = np.empty_like(y)
        for i in range(d):
            others = np.prod(np.delete(w, i, axis=1), axis=1) if d > 1 else 1.0
            out[:, i] = _wp(y[:, i]) / R * others
        return _s(t) * out

    def laplacian(t: float, x: np.ndarray) -> np.ndarray:
        y = _pts(x)
        w = _w(y)
        total = np.zeros(y.shape[0])
        for i in range(d):
            others = np.prod(np.delete(w, i, axis=1), axis=1) if d > 1 else 1.0
            total += _wpp(y[:, i]) / R**2 * others
        return _s(t) * total

    return SpaceTimeTestFunction(
        value=value,
        time_derivative=time_derivative,
        gradient=gradient,
        laplacian=laplacian,
        t_end=T,
        space_radius=R,
        center=tuple(c),
    )


def weak_residual(
    traj: Trajectory, profile: RegularizedProfile, phi: SpaceTimeTestFunction
) -> float:
    """Distributional residual of the limit equation on a trajectory.

    Evaluates  sum_j dt * sum_x [ u_{j+1} (phi_t + b(u_{j+1}) D . grad phi)
    + beta(u_{j+1}) lap phi ](t_j, x) * h^d  +  sum_x u_0 phi(0, x) h^d,
    i.e. midpoint quadrature in space (cell centers) and the left-endpoint
    rule in time that matches the piecewise-constant mild solution.  The
    trajectory must be saved at every step; the test function's support
    must sit inside the box and inside [0, final time].
    """
    grid = traj.grid
    if np.max(np.abs(np.diff(traj.times) - traj.dt)) > 1e-9 * max(1.0, traj.dt):
        raise ValueError("weak residual needs a trajectory saved at every step")
    if traj.times[0] != 0.0:
        raise ValueError("weak residual needs the initial state in the trajectory")
    for ax, ci in enumerate(phi.center):
        if abs(ci) + phi.space_radius > grid.L + 1e-12:
            raise ValueError(
                f"test-function support [{ci - phi.space_radius}, {ci + phi.space_radius}] "
                f"along axis {ax} exceeds the box [-{grid.L}, {grid.L}]"
            )
    if phi.t_end > traj.times[-1] + 1e-12:
        raise ValueError("test-function time support exceeds the trajectory")
    centers = grid.centers()
    base = profile.base
    Dc = base.D(centers)
    vol = grid.cell_volume
    total = float(np.sum(traj.fields[0].values.ravel() * phi.value(0.0, centers)) * vol)
    for j in range(len(traj.times) - 1):
        t_left = float(traj.times[j])
        u_next = traj.fields[j + 1].values.ravel()
        phit = phi.time_derivative(t_left, centers)
        gphi = phi.gradient(t_left, centers)
        lphi = phi.laplacian(t_left, centers)
        adv = np.asarray(base.b(u_next)) * np.sum(Dc * gphi, axis=1)
        cell_sum = u_next * (phit + adv) + np.asarray(base.beta(u_next)) * lphi
        total += traj.dt * float(np.sum(cell_sum)) * vol
    return total
