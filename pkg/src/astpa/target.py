"""Smoothed sampling target for rare-event estimation.

The unnormalized target is ``h(x) = l(g(x)) * pi(x)`` where ``l`` is a
logistic CDF of the negated, scaled limit-state value.  The dispersion
``sigma``, the scaling constant ``g_c`` and the mean shift ``mu_g`` control
how far the target leans into the rare-event domain.
"""

from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np
from scipy.special import expit

SQRT3_OVER_PI = math.sqrt(3.0) / math.pi


class TargetEval(NamedTuple):
    log_h: float
    grad: np.ndarray
    g: float
    log_pi: float
    log_l: float


def limit_state_scale(g_at_anchor, q):
    """Scaling constant g_c placing g(anchor)/g_c inside [10, 20].

    Values of g(anchor) already in [10, 20] keep g_c = 1; non-positive
    values also map to 1 (flagged by the caller, the optimizer run confirms
    target placement in that case).
    """
    if not 10.0 <= q <= 20.0:
        raise ValueError("q must lie in [10, 20]")
    v = float(g_at_anchor)
    if v > 20.0 or 0.0 < v < 10.0:
        return v / q
    return 1.0


def logistic_mean_shift(sigma, p=0.1):
    """Mean parameter placing percentile p of the logistic CDF at g = 0."""
    return -SQRT3_OVER_PI * sigma * math.log(p / (1.0 - p))


class AstpaTarget:
    """Unnormalized smoothed target exposing log h and its gradient.

    Parameters
    ----------
    model : Density
        Joint density pi (in the sampler's space).
    problem : LimitState
        Performance function, already composed with any bound transform.
    sigma : float
        Logistic dispersion factor; 0.1-0.6 is the effective range.
    q : float
        Scaling exponent in [10, 20] for the g_c rule.
    anchor : array, optional
        Influential point used for the g_c rule and as the optimizer start;
        defaults to the model mean.
    log_scale : float
        Additive constant on log h (the estimate of the rare event
        probability is invariant to it).
    """

    def __init__(self, model, problem, sigma, q=20.0, p=0.1, anchor=None,
                 g_scale=None, log_scale=0.0):
        if model.d != problem.d:
            raise ValueError("model/problem dimension mismatch")
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0.1 <= sigma <= 0.6:
            warnings.warn(
                f"sigma={sigma} outside the recommended range [0.1, 0.6]",
                stacklevel=2,
            )
        self.model = model
        self.problem = problem
        self.d = model.d
        self.sigma = float(sigma)
        self.q = float(q)
        self.p = float(p)
        self.log_scale = float(log_scale)
        self.anchor = np.asarray(
            model.mean if anchor is None else anchor, dtype=float
        )
        g_anchor, _ = problem.evaluate(self.anchor)
        self.g_at_anchor = g_anchor
        self.anchor_in_failure_domain = g_anchor <= 0.0
        if g_scale is not None:
            self.g_c = float(g_scale)
        else:
            self.g_c = limit_state_scale(g_anchor, self.q)
            if self.anchor_in_failure_domain:
                warnings.warn(
                    "g(anchor) <= 0; using g_c = 1 (check target placement)",
                    stacklevel=2,
                )
        self.mu_g = logistic_mean_shift(self.sigma, self.p)
        self._z_scale = SQRT3_OVER_PI * self.sigma

    def scaled_margin(self, g):
        """Logistic argument z for a limit-state value g."""
        return (g / self.g_c + self.mu_g) / self._z_scale

    def log_likelihood(self, g):
        """log l(g) and its derivative d log l / d g (softplus-stable)."""
        z = self.scaled_margin(g)
        log_l = -np.logaddexp(0.0, z)
        dlogl_dg = -expit(z) / (self.g_c * self._z_scale)
        return float(log_l), float(dlogl_dg)

    def eval(self, x):
        """Evaluate log h and its gradient; exactly one model call."""
        g, grad_g = self.problem.evaluate(x)
        log_pi, grad_pi = self.model.log_density_and_grad(x)
        log_l, dlogl_dg = self.log_likelihood(g)
        if not np.isfinite(log_pi):
            return TargetEval(-np.inf, np.zeros(self.d), g, -np.inf, log_l)
        log_h = log_l + log_pi + self.log_scale
        grad = dlogl_dg * grad_g + grad_pi
        return TargetEval(float(log_h), grad, g, float(log_pi), log_l)


class DensityTarget:
    """Adapter presenting a plain density through the target interface."""

    def __init__(self, density):
        self.density = density
        self.d = density.d

    def eval(self, x):
        log_p, grad = self.density.log_density_and_grad(x)
        return TargetEval(float(log_p), grad, np.nan, float(log_p), 0.0)
