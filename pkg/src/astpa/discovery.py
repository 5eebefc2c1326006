"""Rare-event domain discovery with the Adam optimizer.

Minimizes ``-log h`` from the distribution's anchor point to hand the
sampler an initial state inside (or near) the rare-event domain, and checks
afterwards that the smoothed target is actually placed there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class AdamConfig:
    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iters: int = 500
    tol: float = 1e-7  # L2 norm of the applied update

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class DiscoveryResult:
    x: np.ndarray
    n_calls: int
    converged: bool
    objective_trace: np.ndarray  # -log h at each evaluated point
    trace: np.ndarray  # every evaluated point, final included
    g_final: float


def discover(target, x0=None, config: Optional[AdamConfig] = None):
    """Run Adam on ``-log h`` and return the final state and call count.

    One model call per iteration; the last visited point is evaluated too,
    so its gradient is available (and cached) for the sampler start.
    """
    config = config or AdamConfig()
    x = np.asarray(target.anchor if x0 is None else x0, dtype=float).copy()
    ev = target.eval(x)
    if not np.isfinite(ev.log_h):
        raise ValueError("non-finite objective at the starting point")

    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace = [x.copy()]
    objective = [-ev.log_h]
    converged = False
    prev = (x.copy(), ev)

    for t in range(1, config.max_iters):
        grad_u = -ev.grad  # gradient of the objective -log h
        m = config.beta1 * m + (1.0 - config.beta1) * grad_u
        v = config.beta2 * v + (1.0 - config.beta2) * grad_u * grad_u
        m_hat = m / (1.0 - config.beta1**t)
        v_hat = v / (1.0 - config.beta2**t)
        update = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
        prev = (x.copy(), ev)
        x = x - update
        ev = target.eval(x)
        trace.append(x.copy())
        objective.append(-ev.log_h)
        if not np.isfinite(ev.log_h):
            # walked out of support: return the last finite point
            x, ev = prev
            break
        if float(np.linalg.norm(update)) < config.tol:
            converged = True
            break

    return DiscoveryResult(
        x=x,
        n_calls=len(trace),
        converged=converged,
        objective_trace=np.array(objective),
        trace=np.array(trace),
        g_final=ev.g,
    )


#: scaled-margin band accepted as "near the limit-state surface"
PLACEMENT_BAND = 20.0


def placement_check(target, x_found):
    """'ok' when the found state sits in or near the rare-event domain.

    Returns ``(verdict, suggestion)``; the suggestion proposes a smaller
    dispersion and a larger scaling exponent when the target looks
    misplaced, and a re-run should start from ``x_found``.
    """
    g, _ = target.problem.evaluate(np.asarray(x_found, float))
    z = target.scaled_margin(g)
    if g <= 0.0 or abs(z) <= PLACEMENT_BAND:
        return "ok", None
    suggestion = {
        "sigma": max(target.sigma - 0.05, 0.02),
        "q": min(target.q + 5.0, 20.0),
        "restart_from": np.asarray(x_found, float),
    }
    return "relax-needed", suggestion
