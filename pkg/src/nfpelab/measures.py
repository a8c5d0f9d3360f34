"""Measure-valued initial data: mollification, evolution, and trace checks.

A measure is atoms plus an optional absolutely continuous part.  Starting
the PDE from a measure means mollifying at scale eps (cloud-in-cell
deposit followed by discrete convolution with a sampled bump whose
discrete mass is renormalized to exactly one) and evolving the resulting
field; stability of the construction is probed by repeating it along a
decreasing ladder of mollification widths, and consistency with the
initial measure by the weak-star trace gaps at small times.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .grid_field import Field, GridSpec, deposit_mass
from .profiles import Profile, RegularizedProfile
from .semigroup import EvolveConfig, Trajectory, evolve


@dataclass
class MeasureSpec:
    """Atoms (points, weights) plus an optional density part.

    ``require_probability`` turns on the checks that make the measure an
    admissible probability datum: nonnegative weights and density, total
    mass one.
    """

    points: np.ndarray | None = None
    weights: np.ndarray | None = None
    density: Field | None = None
    require_probability: bool = False

    def __post_init__(self) -> None:
        if (self.points is None) != (self.weights is None):
            raise ValueError("atoms need both points and weights")
        if self.points is not None:
            self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
            self.weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
            if self.points.shape[0] != self.weights.shape[0]:
                raise ValueError(
                    f"{self.points.shape[0]} atom points but {self.weights.shape[0]} weights"
                )
            if not np.all(np.isfinite(self.points)) or not np.all(np.isfinite(self.weights)):
                raise ValueError("atom data must be finite")
        if self.points is None and self.density is None:
            raise ValueError("measure must have atoms or a density part")
        if self.require_probability:
            if self.weights is not None and np.any(self.weights < 0):
                raise ValueError("probability measure needs nonnegative atom weights")
            if self.density is not None and np.any(self.density.values < 0):
                raise ValueError("probability measure needs a nonnegative density")
            if abs(self.total_mass() - 1.0) > 1e-12:
                raise ValueError(
                    f"probability measure must have unit mass, got {self.total_mass()}"
                )

    @classmethod
    def from_atoms(
        cls,
        atoms: Sequence[tuple],
        density: Field | None = None,
        require_probability: bool = False,
    ) -> MeasureSpec:
        """Build from (point, weight) pairs as they appear in config files."""
        points = np.array([np.atleast_1d(p) for p, _ in atoms], dtype=np.float64)
        weights = np.array([w for _, w in atoms], dtype=np.float64)
        return cls(
            points=points,
            weights=weights,
            density=density,
            require_probability=require_probability,
        )

    @property
    def d(self) -> int:
        if self.density is not None:
            return self.density.grid.d
        return self.points.shape[1]

    def total_mass(self) -> float:
        mass = 0.0
        if self.weights is not None:
            mass += float(np.sum(self.weights))
        if self.density is not None:
            mass += self.density.mass()
        return mass

    def total_variation(self) -> float:
        """Sum of absolute atom weights plus the l1 mass of the density part."""
        tv = 0.0
        if self.weights is not None:
            tv += float(np.sum(np.abs(self.weights)))
        if self.density is not None:
            tv += self.density.norm_l1()
        return tv

    def pairing(self, psi: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of psi against the measure."""
        total = 0.0
        if self.points is not None:
            total += float(np.sum(self.weights * np.asarray(psi(self.points))))
        if self.density is not None:
            grid = self.density.grid
            vals = np.asarray(psi(grid.centers()))
            total += float(np.sum(self.density.values.ravel() * vals)) * grid.cell_volume
        return total


def mollification_kernel(grid: GridSpec, eps: float) -> np.ndarray:
    """Sampled radial bump on cell offsets, renormalized to unit discrete mass.

    The renormalization removes the quadrature drift of the sampled bump,
    so convolution conserves mass exactly up to roundoff.
    """
    if not (grid.h <= eps < grid.L / 4):
        raise ValueError(
            f"mollification width must satisfy h <= eps < L/4, got eps={eps} "
            f"with h={grid.h}, L={grid.L}"
        )
    reach = int(np.ceil(eps / grid.h))
    offsets = np.arange(-reach, reach + 1) * grid.h
    mesh = np.meshgrid(*([offsets] * grid.d), indexing="ij")
    r2 = sum(m * m for m in mesh) / eps**2
    kernel = np.where(r2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    total = float(np.sum(kernel))
    if total <= 0:
        raise RuntimeError("empty mollification kernel")
    return kernel / total


def mollify(mu: MeasureSpec, eps: float, grid: GridSpec) -> Field:
    """Smooth a measure onto the grid at width eps.

    Atoms are deposited cloud-in-cell, the density part added, and the sum
    convolved with the renormalized bump (reflected at the walls, matching
    the zero-flux boundary of the evolution).  The result has exactly the
    measure's mass up to roundoff, is nonnegative for nonnegative measures,
    and its l1 norm never exceeds the measure's total variation.
    """
    if mu.density is not None and mu.density.grid != grid:
        raise ValueError("density part lives on a different grid")
    base = np.zeros(grid.shape)
    if mu.points is not None:
        base += deposit_mass(grid, mu.points, mu.weights).values
    if mu.density is not None:
        base += mu.density.values
    kernel = mollification_kernel(grid, eps)
    smoothed = ndimage.convolve(base, kernel, mode="reflect")
    return Field(grid, smoothed)


def check_measure_hypotheses(profile: Profile, d: int) -> list[str]:
    """Assumptions the measure-data theory needs, as violation messages.

    Power-law beta with declared growth, degeneracy exponent above the
    dimensional threshold, nonnegative divergence of the drift field, and
    bounded nonnegative b.
    """
    problems = []
    if profile.power_law is None:
        problems.append("measure data needs beta with declared power-law growth")
    if profile.alpha <= 1.0 - 2.0 / d:
        problems.append(
            f"degeneracy exponent alpha = {profile.alpha} inadmissible: "
            f"need alpha > 1 - 2/d = {1 - 2 / d}"
        )
    if not profile.div_D_nonneg:
        problems.append("measure data needs div D >= 0")
    if profile.sup_b <= 0 and not profile.b_is_constant:
        problems.append("b must be bounded and nonnegative")
    return problems


@dataclass
class MeasureEvolution:
    """Finest-width trajectory plus the mollification stability table."""

    trajectory: Trajectory
    eps_values: list[float]
    # one row per consecutive eps pair: l1 distances at each saved time
    stability: list[dict]

    @property
    def max_consecutive_distance(self) -> float:
        if not self.stability:
            return 0.0
        return max(max(row["l1_distances"]) for row in self.stability)


def evolve_measure(
    mu: MeasureSpec,
    profile: RegularizedProfile,
    eps_list: Sequence[float],
    cfg: EvolveConfig,
    grid: GridSpec | None = None,
    threads: int = 1,
) -> MeasureEvolution:
    """Evolve a measure datum along a decreasing ladder of mollification widths.

    Runs one evolution per width (optionally in parallel; results are
    merged in ladder order so the output is independent of scheduling),
    reports l1 distances between consecutive runs at every saved time, and
    returns the finest-width trajectory as the measure solution.
    """
    if grid is None:
        if mu.density is None:
            raise ValueError("pure-atom measure needs an explicit grid")
        grid = mu.density.grid
    eps_values = [float(e) for e in eps_list]
    if not eps_values:
        raise ValueError("eps_list must not be empty")
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    problems = check_measure_hypotheses(profile.base, grid.d)
    if problems:
        raise ValueError("; ".join(problems))

    def run(eps: float) -> Trajectory:
        return evolve(mollify(mu, eps, grid), profile, cfg)

    if threads > 1 and len(eps_values) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajectories = list(pool.map(run, eps_values))
    else:
        trajectories = [run(e) for e in eps_values]

    stability = []
    for (ea, ta), (eb, tb) in zip(
        zip(eps_values, trajectories), zip(eps_values[1:], trajectories[1:])
    ):
        dists = [
            Field(grid, fa.values - fb.values).norm_l1()
            for fa, fb in zip(ta.fields, tb.fields)
        ]
        stability.append(
            {"eps_coarse": ea, "eps_fine": eb, "times": list(map(float, ta.times)),
             "l1_distances": dists}
        )
    return MeasureEvolution(
        trajectory=trajectories[-1], eps_values=eps_values, stability=stability
    )


def weak_star_trace(
    traj: Trajectory,
    mu: MeasureSpec,
    psi_list: Sequence[Callable[[np.ndarray], np.ndarray]],
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gap |integral(u(t) psi) - mu(psi)| at every positive saved time.

    One (times, gaps) pair per test function.  As t decreases to 0 the gaps
    must shrink: that is the weak-star continuity of the solution at its
    initial measure.
    """
    grid = traj.grid
    centers = grid.centers()
    out = []
    for psi in psi_list:
        vals = np.asarray(psi(centers))
        target = mu.pairing(psi)
        times = []
        gaps = []
        for t, fld in zip(traj.times, traj.fields):
            if t <= 0:
                continue
            pairing = float(np.sum(fld.values.ravel() * vals)) * grid.cell_volume
            times.append(float(t))
            gaps.append(abs(pairing - target))
        out.append((np.asarray(times), np.asarray(gaps)))
    return out


def extrapolated_trace_gap(times: np.ndarray, gaps: np.ndarray, n_points: int = 4) -> float:
    """Linear-in-t extrapolation of the earliest trace gaps to t = 0.

    Least-squares intercept over the ``n_points`` smallest times, clamped
    at zero (the gap is a distance).  With a convex decreasing gap profile
    this overestimates the limit, so it is a safe smallness certificate.
    """
    times = np.asarray(times, dtype=np.float64)
    gaps = np.asarray(gaps, dtype=np.float64)
    if times.shape != gaps.shape or times.size < 2:
        raise ValueError("need at least two (time, gap) samples")
    order = np.argsort(times)
    k = min(n_points, times.size)
    t = times[order][:k]
    g = gaps[order][:k]
    slope, intercept = np.polyfit(t, g, 1)
    return max(0.0, float(intercept))
