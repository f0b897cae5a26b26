"""Ensemble machinery: sampling, EM steps, density recovery, SDE solvers."""

import numpy as np
import pytest

from mfgflow.costs import CostConfig
from mfgflow.errors import ConfigError, ZeroMass
from mfgflow.flow import ModelParams, SteadyStateParams, steady_profile
from mfgflow.mfg1 import solve_mfg1
from mfgflow.mfg2 import IterationConfig
from mfgflow.particles import (
    Ensemble,
    KdeConfig,
    em_step,
    empirical_density,
    sample_from_density,
    solve_mfg1_sde,
    solve_mfg2_sde,
    wrap_positions,
)
from mfgflow.spectral import Grid, ScalarField, VectorField
from mfgflow.timestep import FieldTrajectory, TimeWindow


class TestSampling:
    def test_count_and_domain(self):
        g = Grid(1, 10.0, 64)
        rho = steady_profile(SteadyStateParams(1.0, 3.0, 0.5), g)
        ens = sample_from_density(rho, 500, seed=1)
        assert ens.n == 500
        assert np.all(ens.positions >= -g.L) and np.all(ens.positions < g.L)

    def test_uniform_ks_statistic(self):
        # KS critical value at the 1% level is 1.63/sqrt(N)
        g = Grid(1, 10.0, 64)
        N = 10_000
        rho = ScalarField(g, np.ones(g.shape))
        ens = sample_from_density(rho, N, seed=2)
        x = np.sort(ens.positions[:, 0])
        cdf = (x + g.L) / (2 * g.L)
        emp = np.arange(1, N + 1) / N
        ks = max(np.abs(emp - cdf).max(), np.abs(cdf - (emp - 1 / N)).max())
        assert ks < 1.63 / np.sqrt(N)

    def test_narrow_profile_mean(self):
        g = Grid(1, 10.0, 256)
        a = 2.0
        rho = steady_profile(SteadyStateParams(8.0, a, 0.5), g)
        N = 10_000
        ens = sample_from_density(rho, N, seed=3)
        # profile std computed from the grid density itself (CLT bound)
        w = rho.values / rho.values.sum()
        mu = float(np.dot(w, g.x))
        sigma = float(np.sqrt(np.dot(w, (g.x - mu) ** 2)))
        assert abs(ens.positions[:, 0].mean() - a) < 3 * sigma / np.sqrt(N)

    def test_2d_sampling_matches_marginals(self):
        g = Grid(2, 5.0, 32)
        rho = steady_profile(SteadyStateParams(1.0, (1.0, -2.0), 0.5), g)
        N = 20_000
        ens = sample_from_density(rho, N, seed=4)
        assert ens.positions.shape == (N, 2)
        for axis, other in ((0, 1), (1, 0)):
            marg = rho.values.sum(axis=other) * g.h
            marg /= marg.sum() * g.h
            hist, edges = np.histogram(ens.positions[:, axis], bins=g.J // 2, range=(-g.L, g.L), density=True)
            centers = 0.5 * (edges[:-1] + edges[1:])
            ref = np.interp(centers, g.axes[axis], marg, period=2 * g.L)
            assert np.abs(hist - ref).sum() * (edges[1] - edges[0]) < 0.1

    def test_zero_mass_raises(self):
        g = Grid(1, 10.0, 64)
        with pytest.raises(ZeroMass):
            sample_from_density(ScalarField(g, -np.ones(g.shape)), 10, seed=0)

    def test_deterministic(self):
        g = Grid(1, 10.0, 64)
        rho = steady_profile(SteadyStateParams(1.0, 0.0, 0.5), g)
        a = sample_from_density(rho, 100, seed=7)
        b = sample_from_density(rho, 100, seed=7)
        assert np.array_equal(a.positions, b.positions)


class TestEmStep:
    def test_constant_drift_no_noise(self):
        g = Grid(1, 10.0, 64)
        c, dt = 0.8, 0.25
        ens = Ensemble(np.linspace(-9, 9, 11)[:, None], g.L, seed=0)
        drift = VectorField((ScalarField(g, np.full(g.shape, c)),))
        out = em_step(ens, drift, 0.0, dt, np.random.default_rng(0))
        expect = wrap_positions(ens.positions + c * dt, g.L)
        assert np.abs(out.positions - expect).max() < 1e-12
        assert out.time == pytest.approx(dt)

    def test_wrap_across_seam(self):
        g = Grid(1, 10.0, 64)
        ens = Ensemble(np.array([[-g.L + 0.01]]), g.L, seed=0)
        drift = VectorField((ScalarField(g, np.full(g.shape, -1.0)),))
        out = em_step(ens, drift, 0.0, 0.1, np.random.default_rng(0))
        assert out.positions[0, 0] > g.L - 0.2

    def test_diffusion_variance(self):
        # displacement variance after n steps is 2 D n dt, within the
        # chi-squared concentration band 5 * (2 D n dt) * sqrt(2/N)
        g = Grid(1, 1000.0, 64)  # wide box: no wrapping
        D, dt, nsteps, N = 0.5, 0.01, 10, 10_000
        ens = Ensemble(np.zeros((N, 1)), g.L, seed=0)
        drift = VectorField.zeros(g)
        rng = np.random.default_rng(11)
        start = ens.positions.copy()
        for _ in range(nsteps):
            ens = em_step(ens, drift, D, dt, rng)
        var = float(np.var(ens.positions - start))
        expect = 2 * D * nsteps * dt
        assert abs(var - expect) < 5 * expect * np.sqrt(2 / N)

    def test_divergence_free_drift_preserves_uniform(self):
        # volume-preserving advection keeps a uniform ensemble uniform up to
        # Monte Carlo noise and O(dt) integration error
        from mfgflow.spectral import to_coefficients, velocity_from_vorticity

        g = Grid(2, 4.0, 16)
        rng = np.random.default_rng(60)
        c = to_coefficients(rng.standard_normal(g.shape), g)
        c *= np.exp(-g.k2 * 0.3)
        q = ScalarField.from_coefficients(g, c)
        u = velocity_from_vorticity(q)
        N = 20_000
        ens = Ensemble(rng.uniform(-g.L, g.L, (N, 2)), g.L, seed=0)
        for _ in range(20):
            ens = em_step(ens, u, 0.0, 5e-3, rng)
        emp = empirical_density(ens, KdeConfig(bandwidth=2 * g.h, target_mass=1.0), g)
        uniform = 1.0 / (2 * g.L) ** 2
        l1 = g.integrate(np.abs(emp.values - uniform))
        # MC floor measured for the undisplaced ensemble, same draw count
        base = empirical_density(
            Ensemble(rng.uniform(-g.L, g.L, (N, 2)), g.L, seed=1),
            KdeConfig(bandwidth=2 * g.h, target_mass=1.0),
            g,
        )
        floor = g.integrate(np.abs(base.values - uniform))
        assert l1 < 3.0 * floor

    def test_2d_interponly_drift(self):
        g = Grid(2, 4.0, 32)
        f = ScalarField(g, g.x[0] * 0.1)  # drift_x = x/10 (linear: interp exact)
        drift = VectorField((f, ScalarField(g, np.zeros(g.shape))))
        ens = Ensemble(np.array([[1.0, 2.0], [-2.0, 0.5]]), g.L, seed=0)
        out = em_step(ens, drift, 0.0, 1.0, np.random.default_rng(0))
        assert np.abs(out.positions[:, 0] - (ens.positions[:, 0] * 1.1)).max() < 1e-12
        assert np.abs(out.positions[:, 1] - ens.positions[:, 1]).max() < 1e-14


class TestEmpiricalDensity:
    def test_single_particle_at_node(self):
        g = Grid(1, 10.0, 64)
        j = 20
        ens = Ensemble(np.array([[g.x[j]]]), g.L, seed=0)
        kde = KdeConfig(bandwidth=2 * g.h, target_mass=1.0)
        rho = empirical_density(ens, kde, g)
        assert rho.mass() == pytest.approx(1.0, abs=1e-12)
        assert abs(g.x[np.argmax(rho.values)] - g.x[j]) < 1.5 * g.h

    def test_mass_modes(self):
        g = Grid(1, 10.0, 64)
        rng = np.random.default_rng(12)
        ens = Ensemble(rng.uniform(-g.L, g.L, (500, 1)), g.L, seed=0)
        unit = empirical_density(ens, KdeConfig(bandwidth=2 * g.h), g)
        assert unit.mass() == pytest.approx(1.0, abs=1e-12)
        scaled = empirical_density(ens, KdeConfig(bandwidth=2 * g.h, target_mass=2.0), g)
        assert scaled.mass() == pytest.approx(2.0, abs=1e-12)

    def test_bandwidth_validation(self):
        g = Grid(1, 10.0, 64)
        ens = Ensemble(np.zeros((3, 1)), g.L, seed=0)
        with pytest.raises(ConfigError):
            empirical_density(ens, KdeConfig(bandwidth=0.1 * g.h), g)

    def test_monte_carlo_convergence(self):
        g = Grid(1, 10.0, 256)
        Q = steady_profile(SteadyStateParams(1.0, 0.0, 0.5), g)
        target = ScalarField(g, Q.values / Q.mass())
        kde = KdeConfig(bandwidth=2 * g.h, target_mass=1.0)
        errors = []
        for N in (100, 1000, 10_000):
            ens = sample_from_density(target, N, seed=13)
            emp = empirical_density(ens, kde, g)
            errors.append(g.integrate(np.abs(emp.values - target.values)))
        assert errors[-1] < 0.1
        slope = np.polyfit(np.log([100, 1000, 10_000]), np.log(errors), 1)[0]
        assert -0.7 < slope < -0.3


def tracer_setup(J=64, T=0.5, dt=2e-3):
    g = Grid(1, 10.0, J)
    p = ModelParams(nu=0.5, grid=g)
    w = TimeWindow(0.0, T, dt)
    Qi = steady_profile(SteadyStateParams(1.0, -5.0, 0.5), g)
    Qf = steady_profile(SteadyStateParams(1.0, 5.0, 0.5), g)
    Q0 = steady_profile(SteadyStateParams(1.0, 0.0, 0.5), g)
    cfg = CostConfig(kind="kl", gamma=0.2, Q_i=Qi, Q_f=Qf)
    return g, p, w, cfg, FieldTrajectory.from_constant(Q0, w), Qi


class TestMfg1Sde:
    def test_stationary_without_forcing(self):
        g = Grid(1, 10.0, 64)
        p = ModelParams(nu=0.0, grid=g)
        w = TimeWindow(0.0, 0.2, 1e-2)
        zero_q = FieldTrajectory.from_constant(ScalarField(g, np.zeros(g.shape)), w)
        rho0 = steady_profile(SteadyStateParams(1.0, 0.0, 0.5), g)
        sol = solve_mfg1_sde(zero_q, rho0, None, 200, seed=5, params=p, window=w)
        ens0 = sample_from_density(rho0, 200, seed=5)
        assert np.abs(sol.ensemble.positions - ens0.positions).max() < 1e-14
        ref = empirical_density(ens0, KdeConfig(bandwidth=2 * g.h, target_mass=rho0.mass()), g)
        assert np.abs(sol.empirical.data[-1] - ref.values).max() < 1e-13

    def test_cost_estimate_near_pde_cost(self):
        g, p, w, cfg, q_traj, rho0 = tracer_setup(J=64, T=0.5)
        pde = solve_mfg1(q_traj, rho0, cfg, p, w)
        N = 4000
        sde = solve_mfg1_sde(q_traj, rho0, cfg, N, seed=6, params=p, window=w, stride=10)
        gap = abs(sde.cost.total - pde.cost.total) / max(abs(pde.cost.total), 1.0)
        assert gap < 3 / np.sqrt(N) + 0.02

    def test_empirical_tracks_pde_density(self):
        # J = 256 keeps the KDE smoothing bias (~bandwidth^2) below the
        # Monte Carlo band; coarser grids are dominated by the mollifier
        g, p, w, cfg, q_traj, rho0 = tracer_setup(J=256, T=0.5, dt=1e-3)
        pde = solve_mfg1(q_traj, rho0, cfg, p, w)
        sde = solve_mfg1_sde(q_traj, rho0, cfg, 10_000, seed=7, params=p, window=w, stride=50)
        target = pde.rho.data[-1]
        l1 = g.integrate(np.abs(sde.empirical.data[-1] - target))
        assert l1 < 0.15 * g.integrate(np.abs(target))

    def test_seed_determinism(self):
        g, p, w, cfg, q_traj, rho0 = tracer_setup(J=32, T=0.1, dt=5e-3)
        a = solve_mfg1_sde(q_traj, rho0, cfg, 100, seed=8, params=p, window=w)
        b = solve_mfg1_sde(q_traj, rho0, cfg, 100, seed=8, params=p, window=w)
        assert np.array_equal(a.ensemble.positions, b.ensemble.positions)
        assert np.array_equal(a.empirical.data, b.empirical.data)
        assert a.cost.total == b.cost.total

    def test_cost_gap_shrinks_over_a_decade_of_n(self):
        # Monte Carlo cost error ~ N^(-1/2): one decade of N should shrink
        # the seed-averaged gap clearly
        g, p, w, cfg, q_traj, rho0 = tracer_setup(J=64, T=0.5)
        pde = solve_mfg1(q_traj, rho0, cfg, p, w).cost.total

        def mean_gap(N):
            gaps = [
                abs(solve_mfg1_sde(q_traj, rho0, cfg, N, seed=s, params=p, window=w, stride=50).cost.total - pde)
                for s in (1, 2, 3)
            ]
            return float(np.mean(gaps))

        small, large = mean_gap(300), mean_gap(3000)
        assert large < small


class TestMfg2Sde:
    def test_single_particle_smoke(self):
        # degenerate one-particle ensemble must run to completion
        g, p, w, cfg, _, Qi = tracer_setup(J=64, T=0.2)
        it = IterationConfig(n_max=2, eps=1e-6, mu_grid=4, initializer="zero-control")
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sol = solve_mfg2_sde(Qi, cfg, it, 1, seed=9, params=p, window=w)
        assert np.isfinite(sol.loss_history).all()
        assert sol.q.data.shape[0] == w.n_steps + 1

    def test_monotone_and_deterministic(self):
        g, p, w, cfg, _, Qi = tracer_setup(J=64, T=0.5)
        it = IterationConfig(n_max=3, eps=1e-5, mu_grid=8, initializer="zero-control")
        kwargs = dict(params=p, window=w, stride=10)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            a = solve_mfg2_sde(Qi, cfg, it, 2000, seed=10, **kwargs)
            b = solve_mfg2_sde(Qi, cfg, it, 2000, seed=10, **kwargs)
        assert a.loss_history == b.loss_history
        assert np.array_equal(a.q.data, b.q.data)
        hist = a.loss_history
        for x, y in zip(hist, hist[1:]):
            assert y <= x + 1e-12 * abs(x)
