"""Stochastic particle harness driven by the PDE solution.

Particles follow the Euler scheme for

    dX = D(X) b(u(t, X)) dt + sigma(u(t, X)) dW,

with the density u read off a previously computed trajectory.  The
diffusion coefficient sigma = sqrt(2 beta(u)/u) is the one whose
Fokker-Planck generator reproduces the PDE; with it the time-t law of X
should match u(t), which the comparison report quantifies by coarse
histogram distance and (in one dimension) 1-Wasserstein distance.

Randomness is counter-based: every normal increment is a pure function of
(seed, particle index, step index), so results are bitwise reproducible
regardless of batching or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .grid_field import Field, GridSpec, interpolate
from .profiles import Profile, RegularizedProfile
from .semigroup import Trajectory

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_INV52 = float(2.0**-52)


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # full 128-bit product via 32-bit limbs; wrapping uint64 arithmetic throughout
    lo = a * b
    ahi = a >> _S32
    alo = a & _MASK32
    bhi = b >> _S32
    blo = b & _MASK32
    t = ahi * blo + ((alo * blo) >> _S32)
    w = alo * bhi + (t & _MASK32)
    hi = ahi * bhi + (t >> _S32) + (w >> _S32)
    return hi, lo


def philox4x64(counter: Sequence[np.ndarray], key: tuple[int, int]) -> list[np.ndarray]:
    """Ten-round Philox 4x64 block function on vectorized counters.

    ``counter`` is four uint64 arrays of common shape, ``key`` two ints.
    Returns the four output words.  Matches the reference generator
    word for word.
    """
    old = np.seterr(over="ignore")
    try:
        c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in counter)
        k0 = np.uint64(key[0])
        k1 = np.uint64(key[1])
        for r in range(10):
            if r > 0:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        return [c0, c1, c2, c3]
    finally:
        np.seterr(**old)


def _uniform_open(words: np.ndarray) -> np.ndarray:
    # top 52 bits, offset half a step: every value of k + 0.5 with k < 2^52
    # is an exact double, so the result lies strictly inside (0, 1).  With
    # 53 bits the +0.5 rounds away at the top word and the normal-quantile
    # map would return infinity.
    return ((words >> np.uint64(12)).astype(np.float64) + 0.5) * _INV52


def rng_stream(
    seed: int, particle_indices: np.ndarray, step_index: int, d: int
) -> np.ndarray:
    """Standard normal increments for the given particles at one step.

    The block counter is (particle index, step index) and the key is the
    seed, so the draw for any (seed, particle, step) triple is a fixed
    pure function: batch order and thread count cannot change it.
    Returns shape (len(particle_indices), d) using the first d output
    words of each block.
    """
    idx = np.asarray(particle_indices, dtype=np.uint64)
    zeros = np.zeros_like(idx)
    words = philox4x64(
        [idx, np.full_like(idx, np.uint64(step_index)), zeros, zeros],
        (int(seed), 0),
    )
    cols = [ndtri(_uniform_open(words[ax])) for ax in range(d)]
    return np.stack(cols, axis=1)


def sigma_from_density(
    profile: Profile | RegularizedProfile, u: np.ndarray, density_floor: float = 1e-12
) -> np.ndarray:
    """Diffusion coefficient sqrt(2 beta(u)/u), extended by its limit at 0.

    For a declared power law beta(r) = a r^m the closed form
    sqrt(2a) u^(m-1)/2 is used: it is exact, vanishes at u = 0 for m > 1,
    and equals sqrt(2a) everywhere for m = 1.  Otherwise the ratio is
    evaluated at max(u, density_floor).
    """
    base = getattr(profile, "base", profile)
    u = np.asarray(u, dtype=np.float64)
    if base.power_law is not None:
        a_coef, m = base.power_law
        if m == 1.0:
            return np.full(u.shape, np.sqrt(2.0 * a_coef))
        return np.sqrt(2.0 * a_coef) * np.maximum(u, 0.0) ** ((m - 1.0) / 2.0)
    uc = np.maximum(u, density_floor)
    return np.sqrt(2.0 * np.asarray(base.beta(uc)) / uc)


@dataclass(frozen=True)
class SdeConfig:
    """Particle-scheme parameters.

    ``printed_prefactor`` switches the diffusion to half the default
    coefficient, for side-by-side runs with the alternative convention;
    the default is the generator-consistent one and is what passes the
    heat-kernel variance check.
    """

    dt: float
    T: float
    compare_times: tuple[float, ...] = ()
    density_floor: float = 1e-12
    printed_prefactor: bool = False

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.density_floor < 0:
            raise ValueError("density_floor must be nonnegative")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"T = {self.T} is not a whole number of dt = {self.dt} steps")
        object.__setattr__(self, "compare_times", tuple(float(t) for t in self.compare_times))
        for t in self.compare_times:
            if not (0.0 < t <= self.T + 1e-12):
                raise ValueError(f"compare time {t} outside (0, T]")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particle positions at one time, tagged with their stream identity."""

    positions: np.ndarray
    seed: int
    step_index: int
    box: GridSpec
    t: float

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != self.box.d:
            raise ValueError(f"positions must be (N, {self.box.d}), got {pos.shape}")
        if pos.size and float(np.max(np.abs(pos))) > self.box.L + 1e-9:
            raise ValueError("particle escaped the box")
        object.__setattr__(self, "positions", pos)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class MarginalComparison:
    t: float
    l1_hist_distance: float
    w1_distance: float | None
    n_particles: int


def reflect_into_box(positions: np.ndarray, L: float) -> np.ndarray:
    """Fold positions into [-L, L] by reflection at the walls.

    The triangle-wave fold handles arbitrarily long excursions in one
    shot and is exact at the walls.
    """
    y = np.mod(positions + L, 4.0 * L)
    folded = np.where(y <= 2.0 * L, y, 4.0 * L - y)
    return folded - L


def coarse_density(fld: Field, bins: int) -> np.ndarray:
    """Average the field density over blocks, bins cells per axis."""
    n = fld.grid.n
    if n % bins != 0:
        raise ValueError(f"grid n = {n} is not a multiple of {bins} bins")
    block = n // bins
    v = fld.values
    for ax in range(fld.grid.d):
        shape = v.shape[:ax] + (bins, block) + v.shape[ax + 1 :]
        v = v.reshape(shape).mean(axis=ax + 1)
    return v


def histogram_l1_distance(positions: np.ndarray, fld: Field, bins: int = 64) -> float:
    """L1 distance between the binned particle density and the field.

    Both laws are represented as average densities on the same coarse
    bins, so the value is the total-variation-style integral of the
    density mismatch.
    """
    grid = fld.grid
    pde = coarse_density(fld, bins)
    edges = np.linspace(-grid.L, grid.L, bins + 1)
    counts, _ = np.histogramdd(positions, bins=[edges] * grid.d)
    bin_volume = (2.0 * grid.L / bins) ** grid.d
    particle_density = counts / (positions.shape[0] * bin_volume)
    return float(np.sum(np.abs(particle_density - pde)) * bin_volume)


def _cell_cdf(fld: Field) -> tuple[np.ndarray, np.ndarray]:
    # cell masses clipped at zero so roundoff negatives cannot break monotonicity
    mass = np.maximum(fld.values, 0.0) * fld.grid.h
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    total = cdf[-1]
    if total <= 0:
        raise ValueError("field carries no positive mass")
    grid = fld.grid
    edges = -grid.L + np.arange(grid.n + 1) * grid.h
    return cdf / total, edges


def wasserstein1_distance(positions: np.ndarray, fld: Field) -> float:
    """1-Wasserstein distance between samples and a one-dimensional field.

    Computed as the mean gap between sorted samples and the field's
    quantiles at the midpoint ranks, the standard empirical form of the
    quantile-coupling formula.
    """
    if fld.grid.d != 1:
        raise ValueError("quantile comparison is one-dimensional only")
    x = np.sort(positions.ravel())
    cdf, edges = _cell_cdf(fld)
    q = (np.arange(x.size) + 0.5) / x.size
    xq = np.interp(q, cdf, edges)
    return float(np.mean(np.abs(x - xq)))


def ks_statistic(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Kolmogorov-Smirnov distance between samples and a reference CDF."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    f = np.asarray(cdf(x))
    upper = np.max(np.arange(1, n + 1) / n - f)
    lower = np.max(f - np.arange(0, n) / n)
    return float(max(upper, lower))


def sample_initial_positions(mu0, grid: GridSpec, n: int, seed: int) -> np.ndarray:
    """Draw n points from a probability measure (atoms and/or density).

    Atom counts are multinomial in the weights; a density part is sampled
    by inverse CDF in one dimension and by rejection against its maximum
    otherwise.  The draw is deterministic in the seed.
    """
    if abs(mu0.total_mass() - 1.0) > 1e-9:
        raise ValueError("sampling needs a probability measure (unit total mass)")
    if mu0.weights is not None and np.any(mu0.weights < 0):
        raise ValueError("sampling needs nonnegative atom weights")
    if mu0.density is not None and np.any(mu0.density.values < -1e-12):
        raise ValueError("sampling needs a nonnegative density")
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))

    atom_mass = float(np.sum(mu0.weights)) if mu0.weights is not None else 0.0
    parts = []
    if mu0.density is not None and atom_mass < 1.0 - 1e-15:
        n_atoms = int(rng.binomial(n, min(1.0, atom_mass))) if atom_mass > 0 else 0
    else:
        n_atoms = n if mu0.points is not None else 0
    n_density = n - n_atoms

    if n_atoms > 0:
        probs = mu0.weights / atom_mass
        counts = rng.multinomial(n_atoms, probs)
        parts.append(np.repeat(mu0.points, counts, axis=0))
    if n_density > 0:
        fld = mu0.density
        if fld is None:
            raise ValueError("no density part to draw remaining samples from")
        if grid.d == 1:
            cdf, edges = _cell_cdf(fld)
            xs = np.interp(rng.random(n_density), cdf, edges)
            parts.append(xs[:, None])
        else:
            umax = float(np.max(fld.values))
            out = np.empty((n_density, grid.d))
            got = 0
            while got < n_density:
                batch = max(1024, 2 * (n_density - got))
                pts = rng.uniform(-grid.L, grid.L, size=(batch, grid.d))
                accept = rng.random(batch) * umax <= interpolate(fld, pts)
                take = min(int(np.sum(accept)), n_density - got)
                out[got : got + take] = pts[accept][:take]
                got += take
            parts.append(out)
    positions = np.concatenate(parts, axis=0)
    return reflect_into_box(positions, grid.L)


def simulate(
    mu0,
    traj: Trajectory,
    profile: Profile | RegularizedProfile,
    cfg: SdeConfig,
    n_particles: int,
    seed: int,
) -> tuple[list[ParticleEnsemble], list[MarginalComparison]]:
    """Run the particle scheme against a stored trajectory.

    The density entering the coefficients at a step ending at time t is
    the saved field whose save interval contains t, mirroring the
    step-function structure of the time discretization (and keeping the
    first kick of a sharply peaked datum at the already-smoothed
    amplitude).  Snapshots and marginal comparisons are recorded at each
    compare time, which must be saved times of the trajectory.
    """
    base = getattr(profile, "base", profile)
    grid = traj.grid
    if traj.times[-1] < cfg.T - 1e-9:
        raise ValueError(
            f"trajectory ends at t = {traj.times[-1]} but the scheme needs T = {cfg.T}"
        )
    save_gaps = np.diff(traj.times)
    ratios = save_gaps / cfg.dt
    if np.any(np.abs(ratios - np.round(ratios)) > 1e-6):
        raise ValueError("dt must divide every save interval of the trajectory")
    for t in cfg.compare_times:
        if float(np.min(np.abs(np.asarray(traj.times) - t))) > 1e-9:
            raise ValueError(f"compare time {t} is not a saved time of the trajectory")

    positions = sample_initial_positions(mu0, grid, n_particles, seed)
    indices = np.arange(n_particles, dtype=np.uint64)
    sqrt_dt = np.sqrt(cfg.dt)
    sigma_scale = 0.5 if cfg.printed_prefactor else 1.0

    remaining = sorted(cfg.compare_times)
    history: list[ParticleEnsemble] = []
    report: list[MarginalComparison] = []

    def record(t: float, step: int) -> None:
        ens = ParticleEnsemble(positions=positions, seed=seed, step_index=step, box=grid, t=t)
        fld = traj.field_at(t)
        w1 = wasserstein1_distance(positions, fld) if grid.d == 1 else None
        history.append(ens)
        report.append(
            MarginalComparison(
                t=t,
                l1_hist_distance=histogram_l1_distance(positions, fld),
                w1_distance=w1,
                n_particles=n_particles,
            )
        )

    for k in range(cfg.n_steps):
        t_next = (k + 1) * cfg.dt
        fld = traj.field_for_interval(t_next)
        u_here = interpolate(fld, positions)
        drift = base.D(positions) * np.asarray(base.b(u_here))[:, None]
        sigma = sigma_scale * sigma_from_density(profile, u_here, cfg.density_floor)
        noise = rng_stream(seed, indices, k, grid.d)
        positions = positions + drift * cfg.dt + sigma[:, None] * sqrt_dt * noise
        positions = reflect_into_box(positions, grid.L)
        while remaining and t_next >= remaining[0] - 1e-9:
            record(remaining.pop(0), k + 1)

    return history, report
