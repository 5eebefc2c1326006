import math

import numpy as np
import pytest
from scipy.stats import norm

from astpa.baselines import (
    McResult,
    SusConfig,
    crude_mc,
    direct_space,
    standard_normal_space,
    sus,
)
from astpa.densities import GaussianCopulaGumbel, IndependentGaussian
from astpa.limit_states import LinearSum


def linear_gaussian(d=2, beta=3.0):
    """P(x_1 >= beta) for standard normal x_1: exact Phi(-beta)."""
    model = IndependentGaussian(d)

    class OneCoord(LinearSum):
        def _gval(self, x):
            return self.threshold - x[0], np.array([-1.0] + [0.0] * (self.d - 1))

        def _gval_batch(self, X):
            return self.threshold - X[:, 0]

    return OneCoord(d, threshold=beta), model


class TestCrudeMc:
    def test_ratio(self):
        assert McResult(5 / 1000, 0.1, 1000, 5).p == 0.005

    def test_cov_formula(self):
        problem, model = linear_gaussian(beta=0.0)  # p = 0.5
        res = crude_mc(problem, model, 100, seed=1)
        expect = math.sqrt((1 - res.p) / (100 * res.p))
        assert res.cov == pytest.approx(expect, rel=1e-12)

    def test_closed_form_within_2se(self):
        problem, model = linear_gaussian(beta=2.0)
        exact = norm.cdf(-2.0)
        n = 200_000
        res = crude_mc(problem, model, n, seed=3)
        se = math.sqrt(exact * (1 - exact) / n)
        assert abs(res.p - exact) <= 2.5 * se

    def test_mean_over_seeds(self):
        problem, model = linear_gaussian(beta=2.0)
        exact = norm.cdf(-2.0)
        vals = [crude_mc(problem, model, 20_000, seed=s).p for s in range(100)]
        vals = np.array(vals)
        se = vals.std(ddof=1) / 10.0
        assert abs(vals.mean() - exact) <= 2 * se

    def test_zero_failures_flagged(self):
        problem, model = linear_gaussian(beta=10.0)
        with pytest.warns(UserWarning):
            res = crude_mc(problem, model, 1000, seed=0)
        assert res.p == 0.0 and math.isnan(res.cov)

    def test_call_counting(self):
        problem, model = linear_gaussian()
        crude_mc(problem, model, 5000, seed=0, chunk=1024)
        assert problem.n_calls == 5000

    def test_custom_stream(self):
        problem, model = linear_gaussian()
        stream = lambda k, seed: np.zeros((k, 2))  # all safe points
        with pytest.warns(UserWarning):
            res = crude_mc(problem, model, 100, seed=0, sample_stream=stream)
        assert res.n_failures == 0


class TestSus:
    def test_product_rule_shape(self):
        problem, model = linear_gaussian(beta=2.8)
        res = sus(problem, direct_space(model),
                  SusConfig(n_per_level=2000, seed=4))
        # p must equal the product of the recorded level probabilities
        prod = 1.0
        for _, p_cond in res.levels:
            prod *= p_cond
        assert res.p == pytest.approx(prod, rel=1e-12)
        assert res.n_levels == len(res.levels)

    def test_single_level_degeneration(self):
        problem, model = linear_gaussian(beta=0.5)  # p ~ 0.3 > p0
        res = sus(problem, direct_space(model),
                  SusConfig(n_per_level=1000, seed=0))
        assert res.n_levels == 1
        exact = norm.cdf(-0.5)
        assert res.p == pytest.approx(exact, abs=0.05)

    def test_accuracy_closed_form(self):
        problem, model = linear_gaussian(beta=3.0)
        exact = norm.cdf(-3.0)
        vals = []
        for s in range(25):
            res = sus(problem, direct_space(model),
                      SusConfig(n_per_level=1000, seed=100 + s))
            vals.append(res.p)
        vals = np.array(vals)
        assert abs(np.median(vals) - exact) <= 0.4 * exact

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SusConfig(n_per_level=997, p0=0.1)  # n * p0 not an integer
        with pytest.raises(ValueError):
            SusConfig(n_per_level=1000, p0=1.5)

    def test_copula_space_round_trip(self):
        model = GaussianCopulaGumbel(3)
        space = standard_normal_space(model)
        u = np.random.default_rng(0).standard_normal((50, 3))
        X = np.array([space.to_physical(ui) for ui in u])
        # physical samples look like the model's own draws
        direct = model.sample(200_000, seed=5)
        assert abs(X.mean() - direct.mean()) < 1.5
        # the mapped density space is standard normal
        assert space.log_density(np.zeros(3)) == 0.0

    def test_call_ledger(self):
        problem, model = linear_gaussian(beta=2.0)
        res = sus(problem, direct_space(model),
                  SusConfig(n_per_level=500, seed=9))
        assert problem.n_calls == res.n_calls
