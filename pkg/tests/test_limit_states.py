import math

import numpy as np
import pytest

from astpa.limit_states import (
    Hyperspherical,
    LinearSum,
    OcticLognormal,
    QuadraticGumbel,
    RingQuadratic,
)

from helpers import assert_grad_close


def all_problems():
    return [
        QuadraticGumbel(2, lam=70.0, gamma=2),
        QuadraticGumbel(5, lam=5.0, gamma=3),
        LinearSum(3),
        Hyperspherical(4, r=2.0),
        OcticLognormal(20, y0=15.0),
        RingQuadratic(3, r=3.8),
    ]


class TestValues:
    def test_quadratic_gumbel_at_10_10(self):
        p = QuadraticGumbel(2, lam=70.0, gamma=2)
        g, _ = p.evaluate(np.array([10.0, 10.0]))
        assert g == pytest.approx(70.0 - 20.0 / math.sqrt(2.0), abs=1e-12)

    def test_hyperspherical_center(self):
        p = Hyperspherical(2, r=2.0)
        g, _ = p.evaluate(np.array([0.0, -6.0]))
        assert g == pytest.approx(-4.0, abs=1e-14)

    def test_octic_all_ones(self):
        p = OcticLognormal(200, y0=15.0)
        g, _ = p.evaluate(np.ones(200))
        expected = 15.0 - 200.0 / math.sqrt(200.0) + 2.5 * 64.0 + 16.0 + 1.0
        assert g == pytest.approx(expected, abs=1e-10)
        assert g == pytest.approx(177.8579, abs=1e-4)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            LinearSum(3).evaluate(np.zeros(2))


class TestIndicator:
    @pytest.mark.parametrize(
        "gval,expected", [(-0.001, 1), (0.0, 1), (1e-12, 0)]
    )
    def test_boundary_convention(self, gval, expected):
        p = LinearSum(1, threshold=gval)  # g(0) = threshold
        assert p.indicator(np.zeros(1)) == expected

    def test_indicator_does_not_double_count(self):
        p = Hyperspherical(2, r=2.0)
        x = np.array([0.1, -5.9])
        p.evaluate(x)
        n = p.n_calls
        p.indicator(x)
        assert p.n_calls == n


class TestCounting:
    def test_one_call_per_evaluate(self):
        p = RingQuadratic(2, r=3.8)
        rng = np.random.default_rng(0)
        for i in range(10):
            p.evaluate(rng.normal(size=2))
        assert p.n_calls == 10

    def test_cached_repeat_is_free(self):
        p = LinearSum(2)
        x = np.array([1.0, 2.0])
        g1, grad1 = p.evaluate(x)
        g2, grad2 = p.evaluate(x)
        assert p.n_calls == 1
        assert g1 == g2 and np.array_equal(grad1, grad2)

    def test_batch_counts_every_row(self):
        p = Hyperspherical(3, r=1.0)
        X = np.random.default_rng(1).normal(size=(500, 3))
        g = p.evaluate_batch(X)
        assert g.shape == (500,)
        assert p.n_calls == 500

    def test_reset(self):
        p = LinearSum(2)
        p.evaluate(np.zeros(2))
        p.reset_calls()
        assert p.n_calls == 0


class TestGradients:
    @pytest.mark.parametrize("problem", all_problems(), ids=lambda p: p.family)
    def test_gradient_matches_fd_100_points(self, problem):
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 100:
            if problem.family == "octic-lognormal":
                # natural domain is the positive lognormal space
                x = np.exp(rng.normal(loc=-0.35, scale=0.83, size=problem.d))
            else:
                x = rng.normal(loc=1.0, scale=1.5, size=problem.d)
            g, grad = problem.evaluate(x)
            if abs(g) > 1e4:
                # roundoff of g would dominate the finite-difference oracle
                continue
            assert_grad_close(lambda t: problem.evaluate(t)[0], grad, x)
            checked += 1

    def test_batch_matches_scalar(self):
        for problem in all_problems():
            X = np.random.default_rng(3).normal(size=(20, problem.d))
            gb = problem.evaluate_batch(X)
            gs = np.array([problem.evaluate(x)[0] for x in X])
            np.testing.assert_allclose(gb, gs, rtol=1e-13)
