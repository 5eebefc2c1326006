import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from astpa.densities import IndependentGaussian, IndependentLognormal
from astpa.limit_states import LinearSum
from astpa.transforms import (
    BoundSpec,
    TransformedLimitState,
    pushforward_log_density,
)

from helpers import assert_grad_close


class TestMaps:
    def test_lower_at_one(self):
        spec = BoundSpec.lower(0.0, 1)
        y = spec.to_unbounded(np.array([1.0]))
        assert y[0] == 0.0
        assert spec.to_bounded(y)[0] == 1.0

    def test_interval_midpoint(self):
        spec = BoundSpec.interval(0.0, 1.0, 1)
        y = spec.to_unbounded(np.array([0.5]))
        assert y[0] == pytest.approx(0.0, abs=1e-15)

    def test_upper(self):
        spec = BoundSpec.upper(3.0, 1)
        assert spec.to_unbounded(np.array([2.0]))[0] == 0.0

    def test_out_of_bounds_rejected(self):
        spec = BoundSpec.lower(0.0, 2)
        with pytest.raises(ValueError):
            spec.to_unbounded(np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            BoundSpec.interval(0.0, 1.0, 1).to_unbounded(np.array([1.0]))

    def test_mixed_kinds(self):
        spec = BoundSpec(
            ["unbounded", "lower", "upper", "interval"],
            lo=np.array([0.0, 1.0, 0.0, -1.0]),
            hi=np.array([0.0, 0.0, 5.0, 1.0]),
        )
        x = np.array([0.3, 1.5, 4.0, 0.2])
        y = spec.to_unbounded(x)
        np.testing.assert_allclose(spec.to_bounded(y), x, atol=1e-14)

    @settings(max_examples=250, deadline=None)
    @given(
        x=st.floats(min_value=1e-8, max_value=1e8),
        kind=st.sampled_from(["lower", "upper", "interval"]),
    )
    def test_round_trip_property(self, x, kind):
        if kind == "lower":
            spec = BoundSpec.lower(0.0, 1)
            pt = np.array([x])
            scale = max(1.0, x)
        elif kind == "upper":
            spec = BoundSpec.upper(1e9, 1)
            pt = np.array([x])
            scale = 1e9  # cancellation against the bound magnitude
        else:
            spec = BoundSpec.interval(0.0, 1e9, 1)
            pt = np.array([min(x, 1e9 - 1.0)])
            scale = 1e9
        back = spec.to_bounded(spec.to_unbounded(pt))
        assert abs(back[0] - pt[0]) <= 1e-12 * scale

    def test_round_trip_1000_points_each_kind(self):
        rng = np.random.default_rng(8)
        for spec, draw in [
            (BoundSpec.lower(-2.0, 1), lambda: -2.0 + rng.lognormal()),
            (BoundSpec.upper(4.0, 1), lambda: 4.0 - rng.lognormal()),
            (BoundSpec.interval(-1.0, 2.0, 1), lambda: -1.0 + 3.0 * rng.uniform(1e-6, 1 - 1e-6)),
        ]:
            for _ in range(1000):
                x = np.array([draw()])
                back = spec.to_bounded(spec.to_unbounded(x))
                assert abs(back[0] - x[0]) <= 1e-12 * max(1.0, abs(x[0]))


class TestPushforward:
    def test_lognormal_becomes_gaussian(self):
        m = IndependentLognormal(3, mean=1.0, std=1.0)
        push = pushforward_log_density(BoundSpec.lower(0.0, 3), m)
        ref = IndependentGaussian(3, mean=m.mu_log, sigma=m.sigma_log)
        rng = np.random.default_rng(5)
        for _ in range(20):
            y = rng.normal(size=3)
            lp, grad = push.log_density_and_grad(y)
            lr, gr = ref.log_density_and_grad(y)
            assert lp == pytest.approx(lr, rel=1e-12)
            np.testing.assert_allclose(grad, gr, rtol=1e-12)

    def test_uniform_pushforward_is_logistic(self):
        class Uniform01:
            d = 1
            normalized = True
            mean = np.array([0.5])

            def log_density_and_grad(self, x):
                if not 0 < x[0] < 1:
                    return -np.inf, np.zeros(1)
                return 0.0, np.zeros(1)

        push = pushforward_log_density(BoundSpec.interval(0.0, 1.0, 1), Uniform01())
        # closed-form logistic density e^-y / (1+e^-y)^2
        for y in [-3.0, -0.5, 0.0, 1.2, 4.0]:
            lp, _ = push.log_density_and_grad(np.array([y]))
            logistic = -y - 2.0 * math.log1p(math.exp(-y))
            assert lp == pytest.approx(logistic, rel=1e-12)
        mass, _ = quad(
            lambda y: math.exp(push.log_density_and_grad(np.array([y]))[0]), -40, 40
        )
        assert abs(mass - 1.0) <= 1e-3

    def test_unbounded_spec_is_identity(self):
        m = IndependentGaussian(2)
        assert pushforward_log_density(BoundSpec.unbounded(2), m) is m

    def test_pushforward_gradients_fd(self):
        m = IndependentLognormal(2, mean=1.0, std=1.0)
        for spec in [BoundSpec.lower(0.0, 2)]:
            push = pushforward_log_density(spec, m)
            rng = np.random.default_rng(9)
            for _ in range(100):
                y = rng.normal(size=2)
                _, grad = push.log_density_and_grad(y)
                assert_grad_close(
                    lambda t: push.log_density_and_grad(t)[0], grad, y
                )

    def test_pushforward_1d_integrates_to_one(self):
        m = IndependentLognormal(1)
        push = pushforward_log_density(BoundSpec.lower(0.0, 1), m)
        mass, _ = quad(
            lambda y: math.exp(push.log_density_and_grad(np.array([y]))[0]), -15, 15
        )
        assert abs(mass - 1.0) <= 1e-3


class TestTransformedLimitState:
    def test_values_and_gradient(self):
        inner = LinearSum(3, threshold=5.0)
        spec = BoundSpec.lower(0.0, 3)
        wrapped = TransformedLimitState(inner, spec)
        y = np.array([0.2, -0.1, 0.4])
        g, grad = wrapped.evaluate(y)
        x = np.exp(y)
        assert g == pytest.approx(5.0 - 3.0 * x[0] - x[1] - x[2], rel=1e-14)
        assert_grad_close(lambda t: wrapped.evaluate(t)[0], grad, y)

    def test_counter_owned_by_wrapper(self):
        wrapped = TransformedLimitState(LinearSum(2), BoundSpec.lower(0.0, 2))
        wrapped.evaluate(np.zeros(2))
        wrapped.evaluate(np.zeros(2))
        assert wrapped.n_calls == 1
