"""Benchmark limit-state functions with analytic gradients and call counting.

A "model call" evaluates the performance function g together with its full
gradient; the counter increments exactly once per call.  Repeating the last
point is served from a one-deep cache without incrementing, so indicator
checks and pipeline stages that revisit a point do not double-count.
"""

from __future__ import annotations

import math
import threading

import numpy as np


class LimitState:
    """Base class: subclasses implement ``_gval(x) -> (g, grad)``."""

    family = "base"

    def __init__(self, d):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.d = int(d)
        self._n_calls = 0
        self._lock = threading.Lock()
        self._cache_x = None
        self._cache_val = None

    def _gval(self, x):
        raise NotImplementedError

    def evaluate(self, x):
        """Return (g, grad) at x, counting one model call (cached repeats are free)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected point of dimension {self.d}, got shape {x.shape}")
        with self._lock:
            if self._cache_x is not None and np.array_equal(x, self._cache_x):
                g, grad = self._cache_val
                return g, grad.copy()
        g, grad = self._gval(x)
        g = float(g)
        grad = np.asarray(grad, dtype=float)
        with self._lock:
            self._n_calls += 1
            self._cache_x = x.copy()
            self._cache_val = (g, grad.copy())
        return g, grad

    def evaluate_batch(self, X):
        """Vectorized g values for an (n, d) batch; counts n model calls."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError("expected an (n, d) batch")
        g = self._gval_batch(X)
        with self._lock:
            self._n_calls += X.shape[0]
        return g

    def _gval_batch(self, X):
        return np.array([self._gval(x)[0] for x in X])

    def indicator(self, x):
        """1 if g(x) <= 0 else 0 (boundary included in the rare event)."""
        g, _ = self.evaluate(x)
        return 1 if g <= 0.0 else 0

    @property
    def n_calls(self):
        return self._n_calls

    def reset_calls(self):
        with self._lock:
            self._n_calls = 0
            self._cache_x = None
            self._cache_val = None


class QuadraticGumbel(LimitState):
    """g = lam - sum(x)/sqrt(d) + 2.5*(x_1 - sum_{j=2..gamma} x_j)^2."""

    family = "quadratic-gumbel"

    def __init__(self, d, lam, gamma):
        super().__init__(d)
        if not 2 <= gamma <= d:
            raise ValueError("gamma must be in [2, d]")
        self.lam = float(lam)
        self.gamma = int(gamma)

    def _gval(self, x):
        q = x[0] - np.sum(x[1:self.gamma])
        g = self.lam - np.sum(x) / math.sqrt(self.d) + 2.5 * q * q
        grad = np.full(self.d, -1.0 / math.sqrt(self.d))
        grad[0] += 5.0 * q
        grad[1:self.gamma] += -5.0 * q
        return g, grad

    def _gval_batch(self, X):
        q = X[:, 0] - np.sum(X[:, 1:self.gamma], axis=1)
        return self.lam - np.sum(X, axis=1) / math.sqrt(self.d) + 2.5 * q * q


class LinearSum(LimitState):
    """g = threshold - 3*x_1 - sum_{i>=2} x_i."""

    family = "linear-rosenbrock"

    def __init__(self, d, threshold=250.0):
        super().__init__(d)
        self.threshold = float(threshold)

    def _gval(self, x):
        g = self.threshold - 3.0 * x[0] - np.sum(x[1:])
        grad = np.full(self.d, -1.0)
        grad[0] = -3.0
        return g, grad

    def _gval_batch(self, X):
        return self.threshold - 3.0 * X[:, 0] - np.sum(X[:, 1:], axis=1)


class Hyperspherical(LimitState):
    """g = sum_{i<d} x_i^2 + (x_d + 6)^2 - r^2."""

    family = "hyperspherical"

    def __init__(self, d, r):
        super().__init__(d)
        if r <= 0:
            raise ValueError("radius must be positive")
        self.r = float(r)

    def _gval(self, x):
        g = np.dot(x[:-1], x[:-1]) + (x[-1] + 6.0) ** 2 - self.r**2
        grad = 2.0 * x.copy()
        grad[-1] = 2.0 * (x[-1] + 6.0)
        return g, grad

    def _gval_batch(self, X):
        return (
            np.sum(X[:, :-1] ** 2, axis=1) + (X[:, -1] + 6.0) ** 2 - self.r**2
        )


class OcticLognormal(LimitState):
    """High-order polynomial limit state in the positive (lognormal) space.

    g = Y0 - sum(x)/sqrt(d) + 2.5*(x_1 - sum_{2..10})^2
        + (x_11 - sum_{12..14})^4 + (x_15 - sum_{16..17})^8
    """

    family = "octic-lognormal"

    def __init__(self, d, y0):
        super().__init__(d)
        if d < 17:
            raise ValueError("octic limit state needs d >= 17")
        self.y0 = float(y0)

    def _blocks(self, x):
        q1 = x[0] - np.sum(x[1:10])
        q2 = x[10] - np.sum(x[11:14])
        q3 = x[14] - np.sum(x[15:17])
        return q1, q2, q3

    def _gval(self, x):
        q1, q2, q3 = self._blocks(x)
        g = (
            self.y0
            - np.sum(x) / math.sqrt(self.d)
            + 2.5 * q1 * q1
            + q2**4
            + q3**8
        )
        grad = np.full(self.d, -1.0 / math.sqrt(self.d))
        grad[0] += 5.0 * q1
        grad[1:10] += -5.0 * q1
        grad[10] += 4.0 * q2**3
        grad[11:14] += -4.0 * q2**3
        grad[14] += 8.0 * q3**7
        grad[15:17] += -8.0 * q3**7
        return g, grad

    def _gval_batch(self, X):
        q1 = X[:, 0] - np.sum(X[:, 1:10], axis=1)
        q2 = X[:, 10] - np.sum(X[:, 11:14], axis=1)
        q3 = X[:, 14] - np.sum(X[:, 15:17], axis=1)
        return (
            self.y0
            - np.sum(X, axis=1) / math.sqrt(self.d)
            + 2.5 * q1 * q1
            + q2**4
            + q3**8
        )


class RingQuadratic(LimitState):
    """g = r^2 - (x_1 - 2)^2 - sum_{i>=2} x_i^2."""

    family = "ring-quadratic"

    def __init__(self, d, r):
        super().__init__(d)
        if r <= 0:
            raise ValueError("radius must be positive")
        self.r = float(r)

    def _gval(self, x):
        g = self.r**2 - (x[0] - 2.0) ** 2 - np.dot(x[1:], x[1:])
        grad = -2.0 * x.copy()
        grad[0] = -2.0 * (x[0] - 2.0)
        return g, grad

    def _gval_batch(self, X):
        return (
            self.r**2 - (X[:, 0] - 2.0) ** 2 - np.sum(X[:, 1:] ** 2, axis=1)
        )
