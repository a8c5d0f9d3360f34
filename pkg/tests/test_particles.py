"""Particle scheme: the counter-based generator (checked word for word
against the reference implementation), density-dependent diffusion, box
reflection, marginal metrics, initial sampling, and the simulate loop.
"""
from __future__ import annotations

import numpy as np
import pytest

from nfpelab.grid_field import Field, GridSpec
from nfpelab.measures import MeasureSpec
from nfpelab.oracles import heat_kernel
from nfpelab.particles import (
    MarginalComparison,
    ParticleEnsemble,
    SdeConfig,
    _uniform_open,
    coarse_density,
    histogram_l1_distance,
    ks_statistic,
    philox4x64,
    reflect_into_box,
    rng_stream,
    sample_initial_positions,
    sigma_from_density,
    simulate,
    wasserstein1_distance,
)
from nfpelab.profiles import Profile, RegularizedProfile, make_profile
from nfpelab.semigroup import Trajectory


def dirac(x=0.0) -> MeasureSpec:
    return MeasureSpec.from_atoms([((x,), 1.0)], require_probability=True)


def constant_traj(grid: GridSpec, times, value: float) -> Trajectory:
    t = np.asarray(times, dtype=np.float64)
    fields = [Field(grid, np.full(grid.shape, value)) for _ in t]
    return Trajectory(grid=grid, dt=float(t[1] - t[0]), times=t, fields=fields)


class TestGenerator:
    @pytest.mark.parametrize("seed", [0, 1, 20240811])
    def test_blocks_match_reference_generator(self, seed):
        # numpy advances the counter before producing each block, so block k
        # corresponds to counter k+1
        raw = np.random.Generator(
            np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))
        ).bit_generator.random_raw(12)
        for k in range(3):
            ctr = [np.array([k + 1], dtype=np.uint64)] + [
                np.zeros(1, dtype=np.uint64)
            ] * 3
            words = philox4x64(ctr, (seed, 0))
            got = np.array([w[0] for w in words], dtype=np.uint64)
            assert np.array_equal(got, raw[4 * k : 4 * k + 4])

    def test_vectorized_counters_match_scalar(self):
        ctrs = np.arange(1, 6, dtype=np.uint64)
        zeros = np.zeros_like(ctrs)
        batch = philox4x64([ctrs, zeros, zeros, zeros], (7, 0))
        for i, c in enumerate(ctrs):
            one = philox4x64(
                [np.array([c], dtype=np.uint64)] + [np.zeros(1, dtype=np.uint64)] * 3,
                (7, 0),
            )
            assert all(batch[w][i] == one[w][0] for w in range(4))

    def test_uniform_open_strictly_inside(self):
        # the extreme words must map strictly inside (0, 1): a value of
        # exactly 1 would push the normal-quantile map to infinity
        lo = _uniform_open(np.array([0], dtype=np.uint64))
        hi = _uniform_open(np.array([np.iinfo(np.uint64).max], dtype=np.uint64))
        assert 0.0 < lo[0] < hi[0] < 1.0
        word = np.uint64(123456789123456789)
        want = (float(word >> np.uint64(12)) + 0.5) * 2.0**-52
        assert _uniform_open(np.array([word]))[0] == pytest.approx(want, rel=0)


class TestRngStream:
    def test_pure_function_of_triple(self):
        idx = np.arange(100, dtype=np.uint64)
        full = rng_stream(42, idx, 3, 1)
        halves = np.concatenate(
            [rng_stream(42, idx[:37], 3, 1), rng_stream(42, idx[37:], 3, 1)]
        )
        assert np.array_equal(full, halves)

    def test_permutation_equivariant(self):
        a = rng_stream(9, np.array([3, 1], dtype=np.uint64), 0, 2)
        b = rng_stream(9, np.array([1, 3], dtype=np.uint64), 0, 2)
        assert np.array_equal(a, b[::-1])

    def test_steps_and_seeds_decorrelate(self):
        idx = np.arange(10, dtype=np.uint64)
        assert not np.array_equal(rng_stream(1, idx, 0, 1), rng_stream(1, idx, 1, 1))
        assert not np.array_equal(rng_stream(1, idx, 0, 1), rng_stream(2, idx, 0, 1))

    def test_moments_are_standard_normal(self):
        n = 50000
        draws = rng_stream(123, np.arange(n, dtype=np.uint64), 0, 2)
        assert draws.shape == (n, 2)
        for ax in range(2):
            col = draws[:, ax]
            assert abs(np.mean(col)) < 3.0 / np.sqrt(n)
            assert abs(np.var(col) - 1.0) < 3.0 * np.sqrt(2.0 / n)


class TestSigma:
    def test_quadratic_law_closed_form(self):
        p = make_profile("porous_medium", m=2.0, a=1.0)
        u = np.array([0.0, 0.25, 1.0, 4.0])
        got = sigma_from_density(p, u)
        assert np.allclose(got, np.sqrt(2.0 * u))
        assert got[0] == 0.0

    def test_linear_law_is_constant(self):
        p = make_profile("linear")
        got = sigma_from_density(p, np.array([0.0, 1.0, 9.0]))
        assert np.allclose(got, np.sqrt(2.0))

    def test_coefficient_scales_with_a(self):
        p = make_profile("porous_medium", m=3.0, a=2.0)
        got = sigma_from_density(p, np.array([4.0]))
        assert got[0] == pytest.approx(np.sqrt(2.0 * 2.0) * 4.0, rel=1e-14)

    def test_generic_profile_uses_floor(self):
        base = make_profile("porous_medium", m=2.0)
        anon = Profile(
            beta=base.beta, beta_prime=base.beta_prime, b=base.b,
            b_prime=base.b_prime, D=base.D, div_D=base.div_D,
            alpha=base.alpha, a=base.a, m=base.m, sup_b=base.sup_b,
            M_drift=base.M_drift, b_is_constant=True,
            beta_strictly_increasing=True, div_D_nonneg=True, power_law=None,
        )
        tiny = sigma_from_density(anon, np.array([0.0]), density_floor=1e-8)
        # ratio beta(u)/u evaluated at the floor: sqrt(2 * 1e-8)
        assert tiny[0] == pytest.approx(np.sqrt(2.0e-8), rel=1e-12)

    def test_wrapped_profile_accepted(self):
        p = RegularizedProfile(make_profile("porous_medium", m=2.0), 0.0)
        got = sigma_from_density(p, np.array([1.0]))
        assert got[0] == pytest.approx(np.sqrt(2.0), rel=1e-14)


class TestReflection:
    def test_interior_unchanged(self):
        x = np.array([[0.0], [0.7], [-0.99]])
        assert np.array_equal(reflect_into_box(x, 1.0), x)

    def test_single_bounce(self):
        assert reflect_into_box(np.array([[1.3]]), 1.0)[0, 0] == pytest.approx(0.7)
        assert reflect_into_box(np.array([[-1.5]]), 1.0)[0, 0] == pytest.approx(-0.5)

    def test_long_excursion(self):
        # 0 -> 5L bounces at L, travels back to -L, and forward again to L
        assert reflect_into_box(np.array([[5.0]]), 1.0)[0, 0] == pytest.approx(1.0)

    def test_walls_are_fixed_points(self):
        got = reflect_into_box(np.array([[1.0], [-1.0]]), 1.0)
        assert got[0, 0] == pytest.approx(1.0)
        assert got[1, 0] == pytest.approx(-1.0)

    def test_range_always_inside(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-50, 50, size=(1000, 3))
        got = reflect_into_box(x, 2.5)
        assert np.all(np.abs(got) <= 2.5)


class TestMarginalMetrics:
    def test_coarse_density_block_means(self):
        grid = GridSpec(d=1, n=8, L=1.0)
        fld = Field(grid, np.arange(8, dtype=np.float64))
        got = coarse_density(fld, 4)
        assert np.allclose(got, [0.5, 2.5, 4.5, 6.5])
        with pytest.raises(ValueError, match="multiple"):
            coarse_density(fld, 3)

    def test_histogram_distance_vanishes_on_matched_uniform(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        fld = Field(grid, np.full(grid.shape, 1.0 / 8.0))
        bins = 16
        centers = np.linspace(-4.0, 4.0, bins, endpoint=False) + 4.0 / bins
        positions = np.repeat(centers, 10)[:, None]
        assert histogram_l1_distance(positions, fld, bins=bins) < 1e-12

    def test_histogram_distance_detects_shift(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        fld = Field(grid, np.full(grid.shape, 1.0 / 8.0))
        positions = np.full((100, 1), 2.0)
        assert histogram_l1_distance(positions, fld, bins=16) > 1.0

    def test_wasserstein_vanishes_at_exact_quantiles(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        fld = Field(grid, np.full(grid.shape, 1.0 / 8.0))
        n = 500
        q = (np.arange(n) + 0.5) / n
        positions = (-4.0 + 8.0 * q)[:, None]
        assert wasserstein1_distance(positions, fld) < 1e-12

    def test_wasserstein_measures_translation(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        fld = Field(grid, np.full(grid.shape, 1.0 / 8.0))
        n = 500
        q = (np.arange(n) + 0.5) / n
        positions = (-4.0 + 8.0 * q)[:, None] * 0.99 + 0.03
        got = wasserstein1_distance(positions, fld)
        assert got == pytest.approx(np.mean(np.abs(0.03 - 0.01 * (-4.0 + 8.0 * q))), rel=1e-10)

    def test_wasserstein_needs_positive_mass(self):
        grid = GridSpec(d=1, n=16, L=1.0)
        fld = Field(grid, np.zeros(grid.shape))
        with pytest.raises(ValueError, match="mass"):
            wasserstein1_distance(np.zeros((3, 1)), fld)

    def test_ks_statistic_hand_value(self):
        got = ks_statistic(np.array([0.5]), lambda x: x)
        assert got == pytest.approx(0.5, abs=1e-15)

    def test_ks_statistic_uniform_samples_small(self):
        rng = np.random.default_rng(8)
        samples = rng.uniform(0, 1, size=10000)
        assert ks_statistic(samples, lambda x: np.clip(x, 0, 1)) < 1.63 / np.sqrt(10000)


class TestInitialSampling:
    def test_single_atom_exact(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        pos = sample_initial_positions(dirac(0.25), grid, 1000, seed=5)
        assert pos.shape == (1000, 1)
        assert np.all(pos == 0.25)

    def test_two_atoms_multinomial_split(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        mu = MeasureSpec.from_atoms(
            [((-1.0,), 0.25), ((1.0,), 0.75)], require_probability=True
        )
        pos = sample_initial_positions(mu, grid, 20000, seed=6)
        frac = float(np.mean(pos[:, 0] > 0))
        assert frac == pytest.approx(0.75, abs=3.0 * np.sqrt(0.25 * 0.75 / 20000))
        assert set(np.unique(pos)) == {-1.0, 1.0}

    def test_probability_gate(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        lopsided = MeasureSpec.from_atoms([((0.0,), 0.5)])
        with pytest.raises(ValueError, match="probability"):
            sample_initial_positions(lopsided, grid, 10, seed=0)

    def test_density_sampling_matches_cdf(self):
        grid = GridSpec(d=1, n=256, L=4.0)
        mu = MeasureSpec(density=Field(grid, np.full(grid.shape, 1.0 / 8.0)))
        n = 40000
        pos = sample_initial_positions(mu, grid, n, seed=7)
        ks = ks_statistic(pos.ravel(), lambda x: np.clip((x + 4.0) / 8.0, 0.0, 1.0))
        assert ks < 1.63 / np.sqrt(n)

    def test_deterministic_in_seed(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        mu = MeasureSpec(density=Field(grid, np.full(grid.shape, 1.0 / 8.0)))
        a = sample_initial_positions(mu, grid, 100, seed=11)
        b = sample_initial_positions(mu, grid, 100, seed=11)
        c = sample_initial_positions(mu, grid, 100, seed=12)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestConfigs:
    def test_sde_config_validation(self):
        with pytest.raises(ValueError):
            SdeConfig(dt=0.0, T=1.0)
        with pytest.raises(ValueError):
            SdeConfig(dt=0.1, T=0.0)
        with pytest.raises(ValueError, match="whole number"):
            SdeConfig(dt=0.3, T=1.0)
        with pytest.raises(ValueError, match="outside"):
            SdeConfig(dt=0.1, T=1.0, compare_times=(1.5,))
        assert SdeConfig(dt=0.1, T=1.0).n_steps == 10

    def test_ensemble_validation(self):
        grid = GridSpec(d=2, n=8, L=1.0)
        with pytest.raises(ValueError, match="positions"):
            ParticleEnsemble(
                positions=np.zeros((5, 1)), seed=0, step_index=0, box=grid, t=0.0
            )
        with pytest.raises(ValueError, match="escaped"):
            ParticleEnsemble(
                positions=np.array([[0.0, 3.0]]), seed=0, step_index=0, box=grid, t=0.0
            )


class TestSimulate:
    def test_compare_time_must_be_saved(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        traj = constant_traj(grid, [0.0, 0.05, 0.1], 1.0 / 8.0)
        cfg = SdeConfig(dt=0.01, T=0.1, compare_times=(0.07,))
        with pytest.raises(ValueError, match="not a saved time"):
            simulate(dirac(), traj, make_profile("linear"), cfg, 10, seed=0)

    def test_dt_must_divide_save_gaps(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        traj = constant_traj(grid, [0.0, 0.05, 0.1], 1.0 / 8.0)
        cfg = SdeConfig(dt=0.02, T=0.1)
        with pytest.raises(ValueError, match="divide"):
            simulate(dirac(), traj, make_profile("linear"), cfg, 10, seed=0)

    def test_trajectory_must_cover_horizon(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        traj = constant_traj(grid, [0.0, 0.05], 1.0 / 8.0)
        cfg = SdeConfig(dt=0.01, T=0.2)
        with pytest.raises(ValueError, match="ends at"):
            simulate(dirac(), traj, make_profile("linear"), cfg, 10, seed=0)

    def test_brownian_variance_within_three_sigma(self):
        # linear nonlinearity: sigma = sqrt(2) independent of the density
        grid = GridSpec(d=1, n=64, L=16.0)
        traj = constant_traj(grid, [0.0, 0.05, 0.1], 1.0 / 32.0)
        n = 20000
        cfg = SdeConfig(dt=0.002, T=0.1, compare_times=(0.1,))
        history, report = simulate(dirac(), traj, make_profile("linear"), cfg, n, seed=3)
        assert len(history) == 1 and len(report) == 1
        var = float(np.var(history[0].positions))
        want = 2.0 * 0.1
        assert abs(var - want) <= 3.0 * want * np.sqrt(2.0 / (n - 1))

    def test_same_seed_bitwise_reproducible(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        traj = constant_traj(grid, [0.0, 0.05, 0.1], 1.0 / 8.0)
        cfg = SdeConfig(dt=0.01, T=0.1, compare_times=(0.05, 0.1))
        p = make_profile("porous_medium", m=2.0)
        h1, r1 = simulate(dirac(), traj, p, cfg, 500, seed=9)
        h2, r2 = simulate(dirac(), traj, p, cfg, 500, seed=9)
        for a, b in zip(h1, h2):
            assert np.array_equal(a.positions, b.positions)
        assert [c.l1_hist_distance for c in r1] == [c.l1_hist_distance for c in r2]
        h3, _ = simulate(dirac(), traj, p, cfg, 500, seed=10)
        assert not np.array_equal(h1[-1].positions, h3[-1].positions)

    def test_printed_prefactor_halves_the_noise(self):
        grid = GridSpec(d=1, n=64, L=16.0)
        traj = constant_traj(grid, [0.0, 0.1], 1.0 / 32.0)
        base_cfg = SdeConfig(dt=0.01, T=0.1, compare_times=(0.1,))
        half_cfg = SdeConfig(dt=0.01, T=0.1, compare_times=(0.1,), printed_prefactor=True)
        p = make_profile("linear")
        full, _ = simulate(dirac(), traj, p, base_cfg, 2000, seed=4)
        half, _ = simulate(dirac(), traj, p, half_cfg, 2000, seed=4)
        # same noise stream, zero drift, no reflections: exactly half the path
        assert np.allclose(half[0].positions, 0.5 * full[0].positions, rtol=1e-12)

    def test_report_rows_are_tagged(self):
        grid = GridSpec(d=1, n=64, L=4.0)
        traj = constant_traj(grid, [0.0, 0.05, 0.1], 1.0 / 8.0)
        cfg = SdeConfig(dt=0.01, T=0.1, compare_times=(0.05, 0.1))
        _, report = simulate(dirac(), traj, make_profile("linear"), cfg, 200, seed=1)
        assert [c.t for c in report] == [0.05, 0.1]
        assert all(isinstance(c, MarginalComparison) for c in report)
        assert all(c.n_particles == 200 for c in report)
        assert all(c.w1_distance is not None for c in report)
