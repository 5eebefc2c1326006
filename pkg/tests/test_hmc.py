import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from astpa.densities import IndependentGaussian
from astpa.hmc import (
    ChainStagnation,
    DualAveraging,
    SamplerConfig,
    ess,
    ess_1d,
    ess_min,
    hmcmc_chain,
    leapfrog,
    thinning_stride,
)
from astpa.target import DensityTarget, TargetEval


def gaussian_target(d, sigma=1.0):
    return DensityTarget(IndependentGaussian(d, sigma=sigma))


class FreeFlight:
    """Uniform improper target on a box interior: zero gradient field."""

    def __init__(self, d):
        self.d = d

    def eval(self, x):
        return TargetEval(0.0, np.zeros(self.d), np.nan, 0.0, 0.0)


class TestLeapfrog:
    def test_reversibility(self):
        t = gaussian_target(3)
        rng = np.random.default_rng(0)
        x, z = rng.normal(size=3), rng.normal(size=3)
        xf, zf, _ = leapfrog(t, x, z, eps=0.05, n_steps=25)
        xb, zb, _ = leapfrog(t, xf, -zf, eps=0.05, n_steps=25)
        assert np.max(np.abs(xb - x)) <= 1e-10
        assert np.max(np.abs(-zb - z)) <= 1e-10

    def test_energy_drift_1d_gaussian(self):
        t = gaussian_target(1)
        x, z = np.array([1.3]), np.array([-0.4])
        h0 = 0.5 * x @ x + 0.5 * z @ z + 0.5 * math.log(2 * math.pi)
        xf, zf, info = leapfrog(t, x, z, eps=0.01, n_steps=100)
        h1 = -info["eval"].log_h + 0.5 * zf @ zf
        h0 = -t.eval(x).log_h + 0.5 * z @ z
        assert abs(h1 - h0) <= 1e-3

    def test_free_flight(self):
        t = FreeFlight(2)
        x, z = np.array([0.5, -0.5]), np.array([1.0, 2.0])
        xf, zf, _ = leapfrog(t, x, z, eps=0.1, n_steps=7)
        np.testing.assert_allclose(xf, x + 0.1 * 7 * z, rtol=1e-14)
        np.testing.assert_allclose(zf, z, rtol=1e-14)

    def test_free_flight_with_mass(self):
        t = FreeFlight(2)
        M = np.array([4.0, 0.25])
        x, z = np.zeros(2), np.array([1.0, 1.0])
        xf, _, _ = leapfrog(t, x, z, eps=0.1, n_steps=5, mass=M)
        np.testing.assert_allclose(xf, 0.5 * z / M, rtol=1e-14)

    def test_volume_preservation_one_step(self):
        # numerical Jacobian of the (x, z) -> (x', z') map has |det| = 1
        t = gaussian_target(2)

        def step(u):
            x, z = u[:2], u[2:]
            xf, zf, _ = leapfrog(t, x, z, eps=0.2, n_steps=1)
            return np.concatenate([xf, zf])

        rng = np.random.default_rng(5)
        for _ in range(5):
            u0 = rng.normal(size=4)
            J = np.empty((4, 4))
            h = 1e-5
            for i in range(4):
                up, um = u0.copy(), u0.copy()
                up[i] += h
                um[i] -= h
                J[:, i] = (step(up) - step(um)) / (2 * h)
            assert abs(abs(np.linalg.det(J)) - 1.0) <= 1e-6

    def test_divergent_flagged(self):
        class Cliff:
            d = 1

            def eval(self, x):
                if abs(x[0]) > 2.0:
                    return TargetEval(-np.inf, np.zeros(1), np.nan, -np.inf, 0.0)
                return TargetEval(0.0, np.zeros(1), np.nan, 0.0, 0.0)

        x, z = np.array([0.0]), np.array([10.0])
        _, _, info = leapfrog(Cliff(), x, z, eps=1.0, n_steps=3)
        assert info["diverged"]


class TestDualAveraging:
    def test_on_target_is_fixed_point(self):
        # zero error keeps H-bar at 0, so log eps sits at the anchor after
        # the first update and the averaged value converges toward it
        da = DualAveraging(0.1)
        da.update(0.65)
        anchor = da.log_eps
        prev_gap = abs(da.log_eps_bar - anchor)
        for _ in range(50):
            da.update(0.65)
            assert abs(da.log_eps - anchor) <= 1e-12
            gap = abs(da.log_eps_bar - anchor)
            assert gap <= prev_gap + 1e-15
            prev_gap = gap

    def test_all_rejections_shrink_eps(self):
        da = DualAveraging(0.1)
        eps_prev = da.update(0.0)  # first move is dominated by the anchor
        for _ in range(20):
            e = da.update(0.0)
            assert e < eps_prev
            eps_prev = e

    def test_all_accepts_grow_eps(self):
        da = DualAveraging(0.1)
        eps_prev = da.eps
        for _ in range(20):
            e = da.update(1.0)
            assert e > eps_prev
            eps_prev = e

    def test_adaptation_hits_target_window(self):
        t = gaussian_target(10)
        cfg = SamplerConfig(n_iter=3000, n_burnin=500, seed=42)
        run = hmcmc_chain(t, cfg, np.zeros(10))
        # mean acceptance after the adaptation horizon
        frozen = run.accept_prob[1000:]
        assert 0.55 <= frozen.mean() <= 0.75


class TestChain:
    def test_gaussian_moments(self):
        t = gaussian_target(2)
        cfg = SamplerConfig(n_iter=11_000, n_burnin=1000, n_leapfrog=5, seed=3)
        run = hmcmc_chain(t, cfg, np.zeros(2))
        draws = run.post_burnin
        assert draws.shape == (10_000, 2)
        assert np.all(np.abs(draws.mean(axis=0)) <= 0.05)
        assert np.all((draws.var(axis=0) >= 0.9) & (draws.var(axis=0) <= 1.1))

    def test_tiny_step_accepts(self):
        t = gaussian_target(3)
        cfg = SamplerConfig(n_iter=50, n_burnin=10, step_size=1e-6, seed=0)
        run = hmcmc_chain(t, cfg, np.zeros(3))
        assert np.all(run.accept_prob > 0.999999)

    def test_bit_identical_reruns(self):
        t = gaussian_target(4)
        cfg = SamplerConfig(n_iter=400, n_burnin=100, seed=7)
        a = hmcmc_chain(t, cfg, np.ones(4))
        b = hmcmc_chain(t, cfg, np.ones(4))
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.accept_prob, b.accept_prob)
        assert a.eps_final == b.eps_final

    def test_call_accounting(self):
        problem_like = gaussian_target(2)
        calls = {"n": 0}

        class Counting:
            d = 2

            def eval(self, x):
                calls["n"] += 1
                return problem_like.eval(x)

        cfg = SamplerConfig(n_iter=100, n_burnin=20, n_leapfrog=3, seed=1)
        run = hmcmc_chain(Counting(), cfg, np.zeros(2))
        assert run.n_target_evals == 3 * 100 + 1
        assert calls["n"] == run.n_target_evals
        assert np.all(run.calls_per_iter == 3)

    def test_finite_log_target_after_burnin(self):
        t = gaussian_target(3)
        cfg = SamplerConfig(n_iter=500, n_burnin=100, seed=9)
        run = hmcmc_chain(t, cfg, np.zeros(3))
        assert np.all(np.isfinite(run.post(run.log_target)))

    def test_explicit_mass_matches_scaled_space(self):
        # sampling N(0, diag(100, 1)) with M = diag(1/100, 1) should mix well
        t = DensityTarget(IndependentGaussian(2, sigma=np.array([10.0, 1.0])))
        cfg = SamplerConfig(
            n_iter=6000, n_burnin=1000, mass=np.array([0.01, 1.0]), seed=11,
            n_leapfrog=3,
        )
        run = hmcmc_chain(t, cfg, np.zeros(2))
        draws = run.post_burnin
        assert abs(draws[:, 0].std() - 10.0) < 1.0
        assert abs(draws[:, 1].std() - 1.0) < 0.1

    def test_stagnation_aborts(self):
        class Wall:
            d = 1

            def eval(self, x):
                if abs(x[0]) > 1e-12:
                    return TargetEval(-np.inf, np.zeros(1), np.nan, -np.inf, 0.0)
                return TargetEval(0.0, np.zeros(1), np.nan, 0.0, 0.0)

        cfg = SamplerConfig(n_iter=300, n_burnin=50, step_size=1.0, seed=0)
        with pytest.raises(ChainStagnation):
            hmcmc_chain(Wall(), cfg, np.zeros(1))

    def test_detailed_balance_ks_smoke(self):
        t = gaussian_target(1)
        cfg = SamplerConfig(n_iter=11_000, n_burnin=1000, n_leapfrog=4, seed=13)
        run = hmcmc_chain(t, cfg, np.zeros(1))
        draws = run.post_burnin[:, 0]
        j = thinning_stride(draws.size, ess_min(run.post_burnin))
        thinned = draws[::j]
        direct = np.random.default_rng(99).standard_normal(thinned.size)
        assert ks_2samp(thinned, direct).pvalue > 0.01


class TestEss:
    def test_iid_chain(self):
        x = np.random.default_rng(0).standard_normal((10_000, 1))
        r = ess_min(x)
        assert 0.8 <= r / 10_000 <= 1.2

    def test_ar1_half(self):
        rng = np.random.default_rng(1)
        n = 200_000
        x = np.empty(n)
        x[0] = rng.standard_normal()
        eps = rng.standard_normal(n)
        rho = 0.5
        for i in range(1, n):
            x[i] = rho * x[i - 1] + math.sqrt(1 - rho**2) * eps[i]
        ratio = ess_1d(x) / n
        assert abs(ratio - 1.0 / 3.0) <= 0.25 / 3.0

    def test_min_across_dimensions(self):
        rng = np.random.default_rng(2)
        iid = rng.standard_normal(5000)
        corr = np.repeat(rng.standard_normal(1000), 5)  # strongly dependent
        states = np.column_stack([iid, corr])
        assert ess_min(states) == pytest.approx(min(ess(states)))
        assert ess_1d(corr) < ess_1d(iid)

    def test_constant_dimension(self):
        assert ess_1d(np.ones(500)) == 1.0


class TestThinning:
    def test_examples(self):
        assert thinning_stride(4000, 100.0) == 10
        assert thinning_stride(4000, 1000.0) == 3
        assert thinning_stride(4000, 10.0) == 30

    def test_bounds(self):
        for n in (100, 1000, 9999):
            for e in (1.0, 10.0, 1e6):
                assert 3 <= thinning_stride(n, e) <= 30
