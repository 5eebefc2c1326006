"""Shared test oracles: finite differences and quadrature helpers."""

import numpy as np


def fd_gradient(f, x, rel_step=1e-6):
    """Central finite differences with per-coordinate step 1e-6*(1+|x_i|)."""
    x = np.asarray(x, float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def assert_grad_close(f, grad, x, rtol=1e-5):
    """Check an analytic gradient against central differences.

    The comparison is relative with a unit floor so near-zero components are
    judged on absolute scale.
    """
    fd = fd_gradient(f, x)
    err = np.abs(fd - grad) / np.maximum(1.0, np.abs(grad))
    assert np.all(err <= rtol), (
        f"gradient mismatch at {x}: analytic {grad}, fd {fd}, rel err {err.max():.3e}"
    )


def random_points_from(model, n, seed):
    """Typical interior points drawn from the model itself."""
    return model.sample(n, seed)
