"""Reference estimators: crude Monte Carlo and subset simulation.

Subset simulation runs component-wise Metropolis-Hastings chains between
adaptively chosen intermediate thresholds (the p0-quantile of g at each
level).  Proposals are uniform of width 2 in the space where the first-level
samples were drawn: the independent standard-normal space for copula-based
models, the original space otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .densities import GaussianCopulaGumbel, _CDF_CLIP


@dataclass
class McResult:
    p: float
    cov: float
    n: int
    n_failures: int


def crude_mc(problem, model, n, seed=0, chunk=1_000_000, sample_stream=None):
    """Direct Monte Carlo failure fraction with its analytical C.o.V.

    ``sample_stream(k, seed)`` overrides the model's sampler (e.g. an MCMC
    stream for posteriors without direct sampling).
    """
    draw = sample_stream if sample_stream is not None else model.sample
    failures = 0
    done = 0
    block = 0
    while done < n:
        k = min(chunk, n - done)
        X = draw(k, seed + block)
        g = problem.evaluate_batch(X)
        failures += int(np.sum(g <= 0.0))
        done += k
        block += 1
    p = failures / n
    if failures == 0:
        warnings.warn("no failures observed; C.o.V undefined", stacklevel=2)
        return McResult(p=0.0, cov=float("nan"), n=n, n_failures=0)
    cov = math.sqrt((1.0 - p) / (n * p))
    return McResult(p=p, cov=cov, n=n, n_failures=failures)


# ---------------------------------------------------------------------------
# subset simulation


class SusStagnation(RuntimeError):
    """Raised when a level's chains essentially stop moving."""


@dataclass
class SusSpace:
    """Sampling-space adapter for subset simulation.

    ``sample_initial`` draws the first-level states, ``log_density`` scores a
    state in the sampling space, ``to_physical`` maps a state to the limit
    state's input space.
    """

    d: int
    sample_initial: Callable
    log_density: Callable
    to_physical: Callable = None

    def g_of(self, problem, state):
        x = state if self.to_physical is None else self.to_physical(state)
        g, _ = problem.evaluate(np.asarray(x, float))
        return g


def direct_space(model):
    """Sampling space = original space with the model's own density."""
    return SusSpace(
        d=model.d,
        sample_initial=lambda n, seed: model.sample(n, seed),
        log_density=lambda x: model.log_density(x),
        to_physical=None,
    )


def standard_normal_space(model):
    """Independent standard-normal space behind a copula-based model."""
    if not isinstance(model, GaussianCopulaGumbel):
        raise TypeError("standard-normal space is defined for the copula family")
    L = model._chol

    def to_physical(u):
        z = L @ u
        F = np.clip(ndtr(z), _CDF_CLIP, 1.0 - _CDF_CLIP)
        return model.loc - model.scale * np.log(-np.log(F))

    return SusSpace(
        d=model.d,
        sample_initial=lambda n, seed: np.random.default_rng(seed).standard_normal(
            (n, model.d)
        ),
        log_density=lambda u: -0.5 * float(u @ u),
        to_physical=to_physical,
    )


def chain_space(model, states):
    """First level from a precomputed chain (posteriors without samplers)."""
    states = np.asarray(states, float)

    def sample_initial(n, seed):
        if n > states.shape[0]:
            raise ValueError("not enough chain states for the first level")
        idx = np.random.default_rng(seed).choice(states.shape[0], n, replace=False)
        return states[idx]

    return SusSpace(
        d=model.d,
        sample_initial=sample_initial,
        log_density=lambda x: model.log_density(x),
        to_physical=None,
    )


@dataclass
class SusConfig:
    n_per_level: int = 1000
    p0: float = 0.1
    proposal_width: float = 2.0
    max_levels: int = 20
    seed: int = 0
    min_level_accept: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        n_seeds = self.n_per_level * self.p0
        if abs(n_seeds - round(n_seeds)) > 1e-9:
            raise ValueError("n_per_level * p0 must be an integer")


@dataclass
class SusResult:
    p: float
    levels: list  # (threshold, conditional probability) per level
    n_calls: int
    n_levels: int
    log_p: float = field(init=False)

    def __post_init__(self):
        self.log_p = math.log(self.p) if self.p > 0 else -np.inf


def _cwmh_step(space, problem, state, g_state, threshold, width, rng):
    """One component-wise MH move constrained to {g <= threshold}.

    Components are pre-accepted by density ratio; the composite candidate
    costs a single model call and is kept only inside the current event.
    """
    d = space.d
    cand = state.copy()
    moved = False
    log_p_cur = space.log_density(cand)
    for i in range(d):
        old = cand[i]
        cand[i] = old + width * (rng.uniform() - 0.5)
        log_p_new = space.log_density(cand)
        if math.log(rng.uniform()) < log_p_new - log_p_cur:
            log_p_cur = log_p_new
            moved = True
        else:
            cand[i] = old
    if not moved:
        return state, g_state, False, 0
    g_cand = space.g_of(problem, cand)
    if g_cand <= threshold:
        return cand, g_cand, True, 1
    return state, g_state, False, 1


def sus(problem, space, config: Optional[SusConfig] = None):
    """Subset simulation estimate of P(g <= 0)."""
    config = config or SusConfig()
    rng = np.random.default_rng(config.seed)
    n = config.n_per_level
    n_seeds = int(round(n * config.p0))
    chain_len = n // n_seeds  # states per seed chain, seed included

    states = np.asarray(space.sample_initial(n, config.seed), float)
    g = np.array([space.g_of(problem, s) for s in states])
    n_calls = n
    levels = []

    for level in range(config.max_levels):
        order = np.argsort(g)
        g_sorted = g[order]
        n_fail = int(np.sum(g <= 0.0))
        if n_fail >= n_seeds:
            # final level resolved directly
            p_cond = n_fail / n
            levels.append((0.0, p_cond))
            p = config.p0**level * p_cond
            return SusResult(p=p, levels=levels, n_calls=n_calls,
                             n_levels=level + 1)
        threshold = 0.5 * (g_sorted[n_seeds - 1] + g_sorted[n_seeds])
        if threshold <= 0.0:
            threshold = 0.0
        levels.append((threshold, config.p0))

        seeds = states[order[:n_seeds]]
        g_seeds = g_sorted[:n_seeds]
        new_states = np.empty_like(states)
        new_g = np.empty(n)
        accepted = 0
        proposed = 0
        idx = 0
        for s_i in range(n_seeds):
            cur = seeds[s_i].copy()
            g_cur = g_seeds[s_i]
            new_states[idx] = cur
            new_g[idx] = g_cur
            idx += 1
            for _ in range(chain_len - 1):
                cur, g_cur, acc, calls = _cwmh_step(
                    space, problem, cur, g_cur, threshold,
                    config.proposal_width, rng,
                )
                n_calls += calls
                proposed += 1
                accepted += int(acc)
                new_states[idx] = cur
                new_g[idx] = g_cur
                idx += 1
        if proposed and accepted / proposed < config.min_level_accept:
            raise SusStagnation(
                f"level {level + 1} acceptance "
                f"{accepted / max(proposed, 1):.3%} below "
                f"{config.min_level_accept:.0%}"
            )
        states, g = new_states, new_g

    warnings.warn("maximum subset levels reached", stacklevel=2)
    n_fail = int(np.sum(g <= 0.0))
    p_cond = max(n_fail / n, 1.0 / n)
    levels.append((0.0, p_cond))
    p = config.p0**config.max_levels * p_cond
    return SusResult(p=p, levels=levels, n_calls=n_calls,
                     n_levels=config.max_levels + 1)
