"""Quasi-Newton mass preconditioned HMCMC.

During burn-in the dynamics are preconditioned by W, a BFGS estimate of the
inverse Hessian of the potential ``U = -log h``, built from the gradients the
leapfrog steps already produce (momenta stay standard normal).  Updates are
applied only when the curvature ``s'y`` clears a positive threshold, which
keeps W symmetric positive definite.  After burn-in the final W supplies a
constant mass matrix ``M = W^-1`` for standard leapfrog sampling.

With a single leapfrog step per iteration the sampler coincides with a
preconditioned Metropolis-adjusted Langevin algorithm; ``mala_acceptance``
and ``verify_mala_equivalence`` check the two routes against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .hmc import _DiagMassFromInverse, _MassFromInverse, _run_chain

# Full inverse-Hessian adaptation up to this dimension, diagonal beyond it.
FULL_W_MAX_DIM = 150


@dataclass
class BfgsState:
    """Inverse-Hessian estimate with the curvature skip rule."""

    W: np.ndarray
    c_min: float = 10.0
    n_updates: int = 0
    n_skips: int = 0

    @classmethod
    def identity(cls, d, c_min=10.0):
        return cls(W=np.eye(d), c_min=c_min)


def bfgs_update(state, s, y):
    """Apply the inverse-Hessian update if s'y exceeds the curvature threshold.

    Returns a new state on update, the unchanged state on skip.
    """
    s = np.asarray(s, float)
    y = np.asarray(y, float)
    sy = float(np.dot(s, y))
    if not np.isfinite(sy) or sy <= state.c_min:
        state.n_skips += 1
        return state
    W = state.W
    Wy = W @ y
    yWy = float(np.dot(y, Wy))
    sWy = np.outer(s, Wy)
    W_new = (
        W
        - (sWy + sWy.T) / sy
        + np.outer(s, s) * ((sy + yWy) / sy**2)
    )
    return BfgsState(
        W=W_new, c_min=state.c_min, n_updates=state.n_updates + 1,
        n_skips=state.n_skips,
    )


def bfgs_update_diag(w, s, y, c_min=10.0):
    """Diagonal of the full update applied to a diagonal W (stays positive)."""
    sy = float(np.dot(s, y))
    if not np.isfinite(sy) or sy <= c_min:
        return w, False
    yWy = float(np.dot(y, w * y))
    w_new = w - 2.0 * s * (w * y) / sy + s * s * ((sy + yWy) / sy**2)
    return w_new, True


class _FullWAdapter:
    """Driver hook: full-matrix W with snapshot/restore and mass export."""

    def __init__(self, d, c_min=10.0, alpha_floor=0.01):
        self.state = BfgsState.identity(d, c_min)
        self.alpha_floor = alpha_floor
        self.d = d

    def matvec(self, v):
        return self.state.W @ v

    def update(self, s, y):
        self.state = bfgs_update(self.state, s, y)

    def snapshot(self):
        return self.state

    def restore(self, snapshot):
        self.state = snapshot

    def export(self):
        return self.state.W.copy()

    def build_mass(self):
        try:
            return _MassFromInverse(self.state.W), None
        except np.linalg.LinAlgError:
            floor = np.clip(np.diag(self.state.W), 1e-8, None)
            return (
                _DiagMassFromInverse(floor),
                "inverse-Hessian factorization failed; using its floored diagonal",
            )


class _DiagWAdapter:
    """Diagonal-W mode for high-dimensional problems."""

    def __init__(self, d, c_min=10.0, alpha_floor=0.01):
        self.w = np.ones(d)
        self.c_min = c_min
        self.alpha_floor = alpha_floor
        self.n_updates = 0
        self.n_skips = 0
        self.d = d

    def matvec(self, v):
        return self.w * v

    def update(self, s, y):
        self.w, applied = bfgs_update_diag(self.w, s, y, self.c_min)
        if applied:
            self.n_updates += 1
        else:
            self.n_skips += 1

    def snapshot(self):
        return self.w

    def restore(self, snapshot):
        self.w = snapshot

    def export(self):
        return self.w.copy()

    def build_mass(self):
        w = self.w
        msg = None
        if np.any(w < 1e-8):
            w = np.clip(w, 1e-8, None)
            msg = "inverse-Hessian diagonal floored at 1e-8"
        return _DiagMassFromInverse(w), msg


@dataclass
class QnpConfig:
    c_min: float = 10.0
    alpha_floor: float = 0.01  # revert W when the acceptance was below this
    diag: Optional[bool] = None  # None -> full for d <= 150, diagonal above

    def make_adapter(self, d):
        diag = (d > FULL_W_MAX_DIM) if self.diag is None else self.diag
        if diag:
            return _DiagWAdapter(d, self.c_min, self.alpha_floor)
        return _FullWAdapter(d, self.c_min, self.alpha_floor)


def qnp_chain(target, config, x0, qnp=None):
    """Preconditioned chain: adaptive burn-in then fixed mass M = W^-1."""
    qnp = qnp or QnpConfig()
    adapter = qnp.make_adapter(target.d)
    return _run_chain(target, config, x0, wadapter=adapter)


def preconditioned_leapfrog(target, x, z, eps, n_steps, B):
    """Burn-in leapfrog: kicks and drift both preconditioned by B (M = I)."""
    x = np.asarray(x, float).copy()
    z = np.asarray(z, float).copy()
    B = np.asarray(B, float)
    ev = target.eval(x)
    n_evals = 1
    diverged = not np.isfinite(ev.log_h)
    if not diverged:
        for _ in range(n_steps):
            z = z + 0.5 * eps * (B @ ev.grad)
            x = x + eps * (B @ z)
            ev = target.eval(x)
            n_evals += 1
            if not np.isfinite(ev.log_h) or not np.all(np.isfinite(ev.grad)):
                diverged = True
                break
            z = z + 0.5 * eps * (B @ ev.grad)
    return x, z, {"eval": ev, "n_evals": n_evals, "diverged": diverged}


# ---------------------------------------------------------------------------
# equivalence with the preconditioned Metropolis-adjusted Langevin algorithm


def mala_acceptance(x, x_tilde, eps, A, target):
    """Acceptance probability of preconditioned MALA with matrix A.

    The proposal law is N(x + eps^2/2 A grad(x), eps^2 A); the ratio uses the
    same Gaussian evaluated in both directions.
    """
    A = np.asarray(A, float)
    LA = cholesky(A, lower=True)  # raises on non-SPD input

    def quad_form(v):
        sol = solve_triangular(LA, v, lower=True)
        return float(np.dot(sol, sol))

    ev_x = target.eval(np.asarray(x, float))
    ev_t = target.eval(np.asarray(x_tilde, float))
    fwd = x_tilde - x - 0.5 * eps**2 * (A @ ev_x.grad)
    bwd = x - x_tilde - 0.5 * eps**2 * (A @ ev_t.grad)
    log_ratio = (
        ev_t.log_h
        - ev_x.log_h
        - quad_form(bwd) / (2.0 * eps**2)
        + quad_form(fwd) / (2.0 * eps**2)
    )
    return min(1.0, math.exp(log_ratio))


def verify_mala_equivalence(target, x, seed, eps, W=None, M=None):
    """Compare one preconditioned-HMCMC step against its MALA construction.

    With W given (burn-in form) the preconditioning matrix is A = W M^-1 W;
    without it (sampling form) A = M^-1.  Both routes share the same standard
    normal draw z' (momentum z = M^(1/2) z'), so proposal and acceptance
    should agree to floating-point accuracy.  Returns the max-norm proposal
    difference and the absolute acceptance difference.
    """
    x = np.asarray(x, float)
    d = x.size
    rng = np.random.default_rng(seed)
    z_prime = rng.standard_normal(d)

    M = np.eye(d) if M is None else np.asarray(M, float)
    LM = cholesky(M, lower=True)
    z0 = LM @ z_prime
    Minv = np.linalg.inv(M)

    ev_x = target.eval(x)
    if W is not None:
        W = np.asarray(W, float)
        A = W @ Minv @ W
        # matched square root: eps * W M^(-1/2)^T z' drives both routes
        S = W @ solve_triangular(LM, np.eye(d), lower=True).T
        # burn-in leapfrog step with preconditioner B = W and drift W M^-1
        zh = z0 + 0.5 * eps * (W @ ev_x.grad)
        x_hmc = x + eps * (W @ (Minv @ zh))
        ev_t = target.eval(x_hmc)
        zt = zh + 0.5 * eps * (W @ ev_t.grad)
    else:
        A = Minv
        S = solve_triangular(LM, np.eye(d), lower=True).T
        zh = z0 + 0.5 * eps * ev_x.grad
        x_hmc = x + eps * (Minv @ zh)
        ev_t = target.eval(x_hmc)
        zt = zh + 0.5 * eps * ev_t.grad

    x_mala = x + 0.5 * eps**2 * (A @ ev_x.grad) + eps * (S @ z_prime)
    d_prop = float(np.max(np.abs(x_hmc - x_mala)))

    k0 = 0.5 * float(z0 @ np.linalg.solve(M, z0))
    k1 = 0.5 * float(zt @ np.linalg.solve(M, zt))
    alpha_hmc = min(1.0, math.exp(ev_t.log_h - k1 - ev_x.log_h + k0))
    alpha_mala = mala_acceptance(x, x_hmc, eps, A, target)
    d_acc = abs(alpha_hmc - alpha_mala)
    return d_prop, d_acc
