"""End-to-end acceptance runs.

Each test pins one headline property of the laboratory: agreement with the
closed-form self-similar solution, the sup-norm decay exponent from measure
data, contraction and order structure of the implicit scheme, conservation
and positivity on every shipped configuration, the exponent algebra, the
distributional-residual refinement trend, particle-marginal agreement, the
regularization ladder, and byte-level determinism of the command line.

Shipped configurations are evolved once in module-scoped fixtures and all
conservation/positivity assertions read from those shared runs.
"""
from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import pytest

from nfpelab.analysis import fit_decay_rate, gamma_exponent, p0_threshold, SmoothingParams
from nfpelab.analysis import exponent_identities, smoothing_exponents
from nfpelab.cli import _initial_field, main, parse_config, shipped_configs
from nfpelab.grid_field import Field, GridSpec
from nfpelab.measures import MeasureSpec, evolve_measure, mollify
from nfpelab.oracles import barenblatt
from nfpelab.particles import SdeConfig, simulate
from nfpelab.profiles import RegularizedProfile, make_profile
from nfpelab.resolvent import (
    check_resolvent_identity,
    eps_convergence_study,
    solve_resolvent,
)
from nfpelab.semigroup import EvolveConfig, bump_test_function, evolve, weak_residual
from nfpelab.semigroup import Trajectory


def gaussian_field(grid: GridSpec, center=0.0, width=0.5, total=1.0) -> Field:
    pts = grid.centers()
    r2 = np.sum((pts - center) ** 2, axis=1)
    vals = np.exp(-r2 / (2.0 * width**2)).reshape(grid.shape)
    fld = Field(grid, vals)
    return Field(grid, vals * (total / fld.mass()))


@pytest.fixture(scope="module")
def shipped_runs():
    """One run per shipped config: ('trajectory', traj, wall) or ('report', rep)."""
    runs = {}
    for name, path in sorted(shipped_configs().items()):
        rc = parse_config(path)
        t0 = time.perf_counter()
        if rc.evolve_cfg is None:
            u, rep = solve_resolvent(_initial_field(rc), rc.profile, rc.lam,
                                     rc.resolvent_cfg)
            runs[name] = ("report", (u, rep), time.perf_counter() - t0)
        elif rc.initial_kind == "measure" and rc.eps_ladder is not None:
            ev = evolve_measure(rc.measure, rc.profile, list(rc.eps_ladder),
                                rc.evolve_cfg, grid=rc.grid)
            runs[name] = ("trajectory", ev.trajectory, time.perf_counter() - t0)
        elif rc.initial_kind == "measure":
            u0 = mollify(rc.measure, 4.0 * rc.grid.h, rc.grid)
            traj = evolve(u0, rc.profile, rc.evolve_cfg)
            runs[name] = ("trajectory", traj, time.perf_counter() - t0)
        else:
            traj = evolve(_initial_field(rc), rc.profile, rc.evolve_cfg)
            runs[name] = ("trajectory", traj, time.perf_counter() - t0)
    return runs


class TestSelfSimilarAgreement:
    """The evolved profile must track the closed-form source solution."""

    def test_relative_l1_error_below_two_percent(self, shipped_runs):
        kind, traj, wall = shipped_runs["pme_barenblatt_1d"]
        assert kind == "trajectory"
        sol = barenblatt(1, 2.0, mass=1.0)
        exact = sol.sample_field(traj.grid, 0.5)
        err = Field(traj.grid, traj.fields[-1].values - exact.values).norm_l1()
        assert err / exact.norm_l1() < 0.02
        assert wall < 60.0

    def test_mass_conserved_along_the_run(self, shipped_runs):
        # the sampled initial profile carries a small quadrature defect at
        # the free boundary, so conservation is measured against step zero
        _, traj, _ = shipped_runs["pme_barenblatt_1d"]
        masses = traj.diagnostics["mass"]
        assert np.max(np.abs(masses - masses[0])) <= 1e-11 * masses[0]


class TestSmoothingExponent:
    """Point-mass data must decay in sup norm at the predicted power of t."""

    def test_decay_slope_matches_similarity_exponent(self, shipped_runs):
        kind, traj, _ = shipped_runs["pme_dirac_smoothing_1d"]
        assert kind == "trajectory"
        fit = fit_decay_rate(traj, (0.05, 0.5))
        want = -smoothing_exponents(1, 2.0)[0]
        assert want == pytest.approx(-1.0 / 3.0, abs=1e-15)
        assert abs(fit.slope - want) <= 0.03
        assert fit.r_squared > 0.999

    @pytest.mark.slow
    def test_decay_slope_three_dimensional(self):
        grid = GridSpec(d=3, n=64, L=4.0)
        mu = MeasureSpec.from_atoms([((0.0, 0.0, 0.0), 1.0)])
        profile = RegularizedProfile(make_profile("porous_medium", m=2.0, d=3), 0.0)
        u0 = mollify(mu, 4.0 * grid.h, grid)
        t0 = time.perf_counter()
        traj = evolve(u0, profile, EvolveConfig(T=0.5, dt=2e-3))
        wall = time.perf_counter() - t0
        fit = fit_decay_rate(traj, (0.05, 0.5))
        assert abs(fit.slope - (-0.6)) <= 0.07
        assert wall < 900.0


class TestL1Contraction:
    """Random nonnegative pairs must contract in l1 along the flow."""

    def test_fifty_pairs_across_four_regimes(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        cfg = EvolveConfig(T=0.5, dt=5e-3, save_every=10)
        profiles = [
            RegularizedProfile(make_profile("porous_medium", m=2.0), 0.0),
            RegularizedProfile(
                make_profile("porous_medium", m=2.0, b_kind="rational_bump",
                             D_kind="constant", D_vector=(0.4,)), 0.0),
            RegularizedProfile(make_profile("porous_medium", m=3.0), 0.0),
            RegularizedProfile(
                make_profile("porous_medium", m=3.0, b_kind="rational_bump",
                             D_kind="constant", D_vector=(0.4,)), 0.0),
        ]
        rng = np.random.default_rng(20240811)
        worst = -np.inf
        for i in range(50):
            profile = profiles[i % 4]
            a = rng.uniform(0.0, 1.0, size=grid.shape)
            b = rng.uniform(0.0, 1.0, size=grid.shape)
            ta = evolve(Field(grid, a), profile, cfg)
            tb = evolve(Field(grid, b), profile, cfg)
            base = Field(grid, a - b).norm_l1()
            for fa, fb in zip(ta.fields, tb.fields):
                excess = Field(grid, fa.values - fb.values).norm_l1() - base
                worst = max(worst, excess)
        assert worst <= 1e-8


class TestResolventIdentity:
    """Re-solving at a smaller step from convex data must reproduce the solve."""

    def test_defect_within_budget(self):
        grid = GridSpec(d=1, n=256, L=4.0)
        f = gaussian_field(grid)
        profile = RegularizedProfile(make_profile("porous_medium", m=2.0), 0.0)
        defect = check_resolvent_identity(f, profile, 0.1, 0.5)
        assert defect <= 1e-8 * f.norm_l1()


class TestMassConservation:
    """Every shipped configuration must conserve mass over its full horizon."""

    def test_all_shipped_runs(self, shipped_runs):
        for name, (kind, payload, _) in shipped_runs.items():
            if kind == "report":
                _, rep = payload
                drift = abs(rep.mass_out - rep.mass_in) / abs(rep.mass_in)
            else:
                masses = payload.diagnostics["mass"]
                drift = float(np.max(np.abs(masses - masses[0])) / abs(masses[0]))
            assert drift <= 1e-11, f"{name}: relative mass drift {drift:.3e}"


class TestSupNormBound:
    """With no compressive drift the sup norm never exceeds its initial value."""

    def test_all_shipped_evolutions(self, shipped_runs):
        for name, (kind, payload, _) in shipped_runs.items():
            if kind != "trajectory":
                continue
            linf = payload.diagnostics["linf"]
            assert np.max(linf) <= linf[0] + 1e-8, name


class TestProbabilityPreservation:
    """Probability data stays a probability density at every saved time."""

    def test_shipped_probability_runs(self, shipped_runs):
        for name, (kind, payload, _) in shipped_runs.items():
            if kind != "trajectory":
                continue
            masses = payload.diagnostics["mass"]
            if abs(masses[0] - 1.0) > 1e-9:
                continue
            assert np.max(np.abs(masses - 1.0)) <= 1e-10, name
            for fld in payload.fields:
                assert float(np.min(fld.values)) >= -1e-10, name


class TestExponentAlgebra:
    """Bookkeeping identities of the sup-norm iteration, swept and spotted."""

    def test_spot_values_exact(self):
        assert abs(gamma_exponent(SmoothingParams(d=3, alpha=2.0, p0=2.0)) - 0.875) <= 1e-14
        assert abs(p0_threshold(2.0, 3) - 8.0 / 3.0) <= 1e-14

    def test_thousand_point_sweep(self):
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(1000):
            d = int(rng.choice([1, 3]))
            alpha = float(rng.uniform(1.0, 4.0))
            p0 = float(rng.uniform(1.01, 6.0))
            r1, r2 = exponent_identities(SmoothingParams(d=d, alpha=alpha, p0=p0))
            worst = max(worst, r1, r2)
        assert worst <= 1e-12


class TestWeakFormConvergence:
    """The distributional residual must shrink at first order under joint
    space-time refinement, drift included."""

    def test_three_refinements_halve_the_residual(self):
        profile = RegularizedProfile(
            make_profile("porous_medium", m=2.0, b_kind="rational_bump",
                         D_kind="constant", D_vector=(0.4,)), 0.0)
        residuals = []
        for n, dt in ((32, 2e-2), (64, 1e-2), (128, 5e-3), (256, 2.5e-3)):
            grid = GridSpec(d=1, n=n, L=4.0)
            u0 = gaussian_field(grid)
            traj = evolve(u0, profile, EvolveConfig(T=0.2, dt=dt, save_every=1))
            phi = bump_test_function(d=1, t_end=0.2, space_radius=3.0)
            residuals.append(abs(weak_residual(traj, profile, phi)))
        ratios = [a / b for a, b in zip(residuals, residuals[1:])]
        assert len(ratios) == 3
        for r in ratios:
            assert 1.7 <= r <= 2.6, f"refinement ratios {ratios}"


class TestParticleMarginals:
    """The interacting-particle system must reproduce the PDE density."""

    def test_histogram_distance_at_final_time(self):
        rc = parse_config(shipped_configs()["particles_pme_1d"])
        # the particle coefficients read the density on each save interval,
        # so the reference run keeps every step
        cfg_every = EvolveConfig(
            T=rc.evolve_cfg.T, dt=rc.evolve_cfg.dt, save_every=1,
            resolvent=rc.evolve_cfg.resolvent,
        )
        u0 = mollify(rc.measure, 4.0 * rc.grid.h, rc.grid)
        traj = evolve(u0, rc.profile, cfg_every)
        t0 = time.perf_counter()
        _, report = simulate(rc.measure, traj, rc.profile, rc.sde_cfg,
                             rc.n_particles, rc.seed)
        wall = time.perf_counter() - t0
        final = [row for row in report if abs(row.t - 0.5) < 1e-9]
        assert final and final[0].n_particles == 100000
        assert final[0].l1_hist_distance < 0.05
        assert wall < 300.0

    def test_heat_case_variance_within_three_sigma(self):
        grid = GridSpec(d=1, n=64, L=16.0)
        times = np.arange(0.0, 0.1 + 1e-12, 0.01)
        fields = [Field(grid, np.full(grid.shape, 1.0 / 32.0)) for _ in times]
        traj = Trajectory(grid=grid, dt=0.01, times=times, fields=fields)
        mu = MeasureSpec.from_atoms([((0.0,), 1.0)], require_probability=True)
        cfg = SdeConfig(dt=0.002, T=0.1, compare_times=(0.1,))
        n = 20000
        history, _ = simulate(mu, traj, make_profile("linear"), cfg, n, seed=13)
        var = float(np.var(history[0].positions))
        want = 2.0 * 0.1
        assert abs(var - want) <= 3.0 * want * np.sqrt(2.0 / (n - 1))


class TestRegularizationLadder:
    """The regularized resolvent must approach the plain one monotonically."""

    def test_distances_strictly_decreasing(self):
        grid = GridSpec(d=1, n=256, L=4.0)
        f = gaussian_field(grid)
        profile = RegularizedProfile(make_profile("porous_medium", m=2.0), 0.0)
        study = eps_convergence_study(f, profile, 0.2, [1e-1, 1e-2, 1e-3, 1e-4])
        assert study.eps_values == [1e-1, 1e-2, 1e-3, 1e-4]
        assert study.strictly_decreasing
        assert all(d > 0.0 for d in study.distances)


class TestCliDeterminism:
    """Reruns across thread counts must be byte-identical, wall time aside."""

    @staticmethod
    def _assert_dirs_equal(a: Path, b: Path):
        names_a = sorted(p.name for p in a.iterdir())
        names_b = sorted(p.name for p in b.iterdir())
        assert names_a == names_b
        for name in names_a:
            if name == "manifest.json":
                continue  # wall time differs by design
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_evolve_heat(self, tmp_path):
        cfg = str(shipped_configs()["heat_1d"])
        outs = []
        for threads in (1, 4):
            out = tmp_path / f"heat_t{threads}"
            assert main(["evolve", "--config", cfg, "--out", str(out),
                         "--threads", str(threads)]) == 0
            outs.append(out)
        self._assert_dirs_equal(*outs)

    def test_evolve_measure_ladder(self, tmp_path):
        cfg = str(shipped_configs()["pme_dirac_smoothing_1d"])
        outs = []
        for threads in (1, 4):
            out = tmp_path / f"dirac_t{threads}"
            assert main(["evolve", "--config", cfg, "--out", str(out), "--measure",
                         "--threads", str(threads)]) == 0
            outs.append(out)
        self._assert_dirs_equal(*outs)

    def test_particles(self, tmp_path):
        cfg = str(shipped_configs()["particles_heat_1d"])
        outs = []
        for threads in (1, 4):
            out = tmp_path / f"par_t{threads}"
            assert main(["particles", "--config", cfg, "--out", str(out),
                         "--threads", str(threads)]) == 0
            outs.append(out)
        self._assert_dirs_equal(*outs)
