"""Bijective maps between bounded and unconstrained coordinates.

Each coordinate is mapped independently (diagonal Jacobian): a log transform
for one-sided bounds and a logit transform for intervals.  Pushforwards of a
density add the log-Jacobian term and chain-rule the gradient; a wrapped
limit state evaluates g in the original space with the gradient mapped back.
"""

from __future__ import annotations

import numpy as np

from .densities import Density
from .limit_states import LimitState

UNBOUNDED = "unbounded"
LOWER = "lower"
UPPER = "upper"
INTERVAL = "interval"


def _sigmoid(y):
    out = np.empty_like(y)
    pos = y >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
    ey = np.exp(y[~pos])
    out[~pos] = ey / (1.0 + ey)
    return out


class BoundSpec:
    """Per-coordinate bound description for a d-dimensional space."""

    def __init__(self, kinds, lo=None, hi=None):
        self.kinds = list(kinds)
        d = len(self.kinds)
        self.d = d
        self.lo = np.zeros(d) if lo is None else np.asarray(lo, float)
        self.hi = np.zeros(d) if hi is None else np.asarray(hi, float)
        for i, k in enumerate(self.kinds):
            if k not in (UNBOUNDED, LOWER, UPPER, INTERVAL):
                raise ValueError(f"unknown bound kind {k!r}")
            if k == INTERVAL and not self.lo[i] < self.hi[i]:
                raise ValueError("interval requires lo < hi")
        self._unb = np.array([k == UNBOUNDED for k in self.kinds])
        self._low = np.array([k == LOWER for k in self.kinds])
        self._upp = np.array([k == UPPER for k in self.kinds])
        self._int = np.array([k == INTERVAL for k in self.kinds])

    @property
    def all_unbounded(self):
        return bool(np.all(self._unb))

    # -- constructors ------------------------------------------------------

    @classmethod
    def unbounded(cls, d):
        return cls([UNBOUNDED] * d)

    @classmethod
    def lower(cls, alpha, d):
        return cls([LOWER] * d, lo=np.full(d, float(alpha)))

    @classmethod
    def upper(cls, beta, d):
        return cls([UPPER] * d, hi=np.full(d, float(beta)))

    @classmethod
    def interval(cls, alpha, beta, d):
        return cls(
            [INTERVAL] * d, lo=np.full(d, float(alpha)), hi=np.full(d, float(beta))
        )

    # -- maps ---------------------------------------------------------------

    def _check(self, x):
        x = np.asarray(x, float)
        if x.shape != (self.d,):
            raise ValueError(f"expected point of dimension {self.d}")
        return x

    def to_unbounded(self, x):
        x = self._check(x)
        bad = (
            (self._low & (x <= self.lo))
            | (self._upp & (x >= self.hi))
            | (self._int & ((x <= self.lo) | (x >= self.hi)))
        )
        if np.any(bad):
            raise ValueError("point on or outside its bounds")
        y = x.copy()
        y[self._low] = np.log(x[self._low] - self.lo[self._low])
        y[self._upp] = np.log(self.hi[self._upp] - x[self._upp])
        if np.any(self._int):
            w = (x[self._int] - self.lo[self._int]) / (
                self.hi[self._int] - self.lo[self._int]
            )
            y[self._int] = np.log(w) - np.log1p(-w)
        return y

    def to_bounded(self, y):
        y = self._check(y)
        x = y.copy()
        x[self._low] = np.exp(y[self._low]) + self.lo[self._low]
        x[self._upp] = self.hi[self._upp] - np.exp(y[self._upp])
        if np.any(self._int):
            s = _sigmoid(y[self._int])
            x[self._int] = self.lo[self._int] + (
                self.hi[self._int] - self.lo[self._int]
            ) * s
        return x

    def dxdy(self, y):
        """Diagonal of the Jacobian dX/dY at y (signed)."""
        y = self._check(y)
        d = np.ones(self.d)
        d[self._low] = np.exp(y[self._low])
        d[self._upp] = -np.exp(y[self._upp])
        if np.any(self._int):
            s = _sigmoid(y[self._int])
            d[self._int] = (self.hi[self._int] - self.lo[self._int]) * s * (1.0 - s)
        return d

    def log_abs_det_jacobian(self, y):
        y = self._check(y)
        total = 0.0
        total += np.sum(y[self._low]) + np.sum(y[self._upp])
        if np.any(self._int):
            s = _sigmoid(y[self._int])
            total += np.sum(
                np.log(self.hi[self._int] - self.lo[self._int])
                + np.log(s)
                + np.log1p(-s)
            )
        return float(total)

    def dlogjac_dy(self, y):
        y = self._check(y)
        g = np.zeros(self.d)
        g[self._low] = 1.0
        g[self._upp] = 1.0
        if np.any(self._int):
            s = _sigmoid(y[self._int])
            g[self._int] = 1.0 - 2.0 * s
        return g


class TransformedDensity(Density):
    """Pushforward of a density through a BoundSpec map, on unbounded space."""

    family = "transformed"

    def __init__(self, inner, spec):
        if inner.d != spec.d:
            raise ValueError("dimension mismatch between density and bounds")
        super().__init__(inner.d)
        self.inner = inner
        self.spec = spec
        self.normalized = inner.normalized

    @property
    def mean(self):
        # Anchor point: image of the base distribution's anchor, not the
        # pushforward's first moment.
        return self.spec.to_unbounded(self.inner.mean)

    def log_density_and_grad(self, y):
        x = self.spec.to_bounded(np.asarray(y, float))
        lp, grad_x = self.inner.log_density_and_grad(x)
        if not np.isfinite(lp):
            return -np.inf, np.zeros(self.d)
        lp = lp + self.spec.log_abs_det_jacobian(y)
        grad = grad_x * self.spec.dxdy(y) + self.spec.dlogjac_dy(y)
        return lp, grad

    def sample(self, n, seed):
        X = self.inner.sample(n, seed)
        return np.array([self.spec.to_unbounded(x) for x in X])


def pushforward_log_density(spec, model):
    """Model on the unbounded space; identity when all coordinates are free."""
    if spec.all_unbounded:
        return model
    return TransformedDensity(model, spec)


class TransformedLimitState(LimitState):
    """Limit state evaluated through the inverse map, with chain-rule gradient.

    Carries its own call counter; use a single instance per pipeline so the
    ledger reads from one place.
    """

    def __init__(self, inner, spec):
        if inner.d != spec.d:
            raise ValueError("dimension mismatch between limit state and bounds")
        super().__init__(inner.d)
        self.inner = inner
        self.spec = spec
        self.family = inner.family

    def _gval(self, y):
        x = self.spec.to_bounded(y)
        g, grad_x = self.inner._gval(x)
        return g, grad_x * self.spec.dxdy(y)

    def _gval_batch(self, Y):
        X = np.array([self.spec.to_bounded(y) for y in Y])
        return self.inner._gval_batch(X)
