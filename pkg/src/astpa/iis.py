"""Inverse importance sampling for normalizing constants.

A Gaussian mixture is fitted (generic EM) on the chain samples already in
hand, an i.i.d. set is drawn from it, and the normalizing constant of the
unnormalized target follows as the mean importance ratio.  A split-half rule
guards against anomalous draws: the two half-sample estimates are averaged
when they agree within a factor of three, otherwise the smaller one is kept.
All accumulation happens in log space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .densities import GaussianMixture
from .hmc import SamplerConfig, ess_min, hmcmc_chain, thinning_stride
from .target import DensityTarget


@dataclass
class EmConfig:
    n_components: int = 10
    cov_kind: str = "full"  # 'full' | 'diag'
    max_iters: int = 200
    tol: float = 1e-6  # on mean log-likelihood
    cov_floor: float = 1e-8
    prune_weight: float = 1e-6

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("need at least one component")
        if self.cov_kind not in ("full", "diag"):
            raise ValueError("cov_kind must be 'full' or 'diag'")

    @classmethod
    def for_dimension(cls, d):
        """Default mixture structure: rich in low d, lean in high d.

        Strongly correlated targets at moderate dimension should override
        this with a single full-covariance component (a diagonal proposal
        under-covers their ridge and destabilizes the constant estimate).
        """
        if d < 20:
            return cls(n_components=10, cov_kind="full")
        return cls(n_components=1, cov_kind="diag")

    @classmethod
    def single_full(cls):
        return cls(n_components=1, cov_kind="full")


def _kmeans_pp_centers(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(
            [np.sum((X - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(X[rng.integers(n)])
            continue
        centers.append(X[rng.choice(n, p=d2 / total)])
    return np.array(centers)


def _floor_full_cov(C, floor):
    C = 0.5 * (C + C.T)
    evals, evecs = np.linalg.eigh(C)
    if evals[0] < floor:
        evals = np.clip(evals, floor, None)
        C = (evecs * evals) @ evecs.T
        C = 0.5 * (C + C.T)
    return C


def fit_gmm(samples, config: Optional[EmConfig] = None, seed=0):
    """Fit a Gaussian mixture by EM with k-means++ seeding.

    The per-sample mean log-likelihood is non-decreasing across iterations;
    components whose weight collapses are pruned with a warning.  Returns
    ``(mixture, info)`` where info carries the log-likelihood trace.
    """
    X = np.asarray(samples, float)
    if X.ndim != 2:
        raise ValueError("samples must be an (n, d) array")
    if not np.all(np.isfinite(X)):
        raise ValueError("samples must be finite")
    n, d = X.shape
    config = config or EmConfig.for_dimension(d)
    k = config.n_components
    # sample-count heuristic: ~10 samples per free parameter and component
    if config.cov_kind == "full":
        params_per_comp = d + d * (d + 1) // 2 + 1
    else:
        params_per_comp = 2 * d + 1
    k_max = max(1, n // (10 * params_per_comp))
    if k > k_max:
        warnings.warn(
            f"only {n} samples for {k} components; reducing to {k_max}",
            stacklevel=2,
        )
        k = k_max
    rng = np.random.default_rng(seed)

    means = _kmeans_pp_centers(X, k, rng)
    weights = np.full(k, 1.0 / k)
    global_var = np.clip(X.var(axis=0), config.cov_floor, None)
    if config.cov_kind == "diag":
        covs = np.tile(global_var, (k, 1))
    else:
        covs = np.tile(np.diag(global_var), (k, 1, 1))

    ll_trace = []
    pruned = 0
    prev_ll = -np.inf
    for _ in range(config.max_iters):
        # E step in log space
        comp = np.empty((n, k))
        for j in range(k):
            single = GaussianMixture(
                [1.0], means[j:j + 1],
                covs[j:j + 1], kind=config.cov_kind,
            )
            comp[:, j] = single.logpdf(X)
        log_w = np.log(weights)
        joint = comp + log_w[None, :]
        norm = logsumexp(joint, axis=1)
        ll = float(np.mean(norm))
        ll_trace.append(ll)
        resp = np.exp(joint - norm[:, None])

        # M step
        nk = resp.sum(axis=0)
        keep = nk / n >= config.prune_weight
        if not np.all(keep):
            pruned += int(np.sum(~keep))
            warnings.warn(
                f"pruning {int(np.sum(~keep))} degenerate mixture component(s)",
                stacklevel=2,
            )
            resp = resp[:, keep]
            nk = nk[keep]
            means = means[keep]
            covs = covs[keep]
            k = nk.size
        weights = nk / n
        means = (resp.T @ X) / nk[:, None]
        if config.cov_kind == "diag":
            covs = np.empty((k, d))
            for j in range(k):
                diff = X - means[j]
                covs[j] = np.clip(
                    (resp[:, j][:, None] * diff * diff).sum(axis=0) / nk[j],
                    config.cov_floor,
                    None,
                )
        else:
            covs = np.empty((k, d, d))
            for j in range(k):
                diff = X - means[j]
                C = (resp[:, j][:, None] * diff).T @ diff / nk[j]
                # shrink toward the diagonal when the component's effective
                # sample count is small for the parameter count
                lam = min(0.5, 2.0 * d / max(nk[j], 1.0))
                if lam > 0:
                    C = (1.0 - lam) * C + lam * np.diag(np.diag(C))
                covs[j] = _floor_full_cov(C, config.cov_floor)

        if ll - prev_ll < config.tol and len(ll_trace) > 1:
            break
        prev_ll = ll

    weights = weights / weights.sum()
    gmm = GaussianMixture(weights, means, covs, kind=config.cov_kind)
    info = {"ll_trace": np.array(ll_trace), "n_iters": len(ll_trace), "pruned": pruned}
    return gmm, info


@dataclass
class IisResult:
    log_ch: float
    log_ch_half: tuple
    rule: str  # 'average' | 'min'
    m_requested: int
    m_used: int
    relvar: float  # Var(C_h) / C_h^2
    n_dropped: int

    @property
    def ch(self):
        return math.exp(self.log_ch)

    @property
    def cov(self):
        return math.sqrt(self.relvar)


RATIO_BAND = 3.0


def _combine_halves(log_r):
    """Split-half combination rule on log importance ratios."""
    m = log_r.size
    half = m // 2
    log_c1 = float(logsumexp(log_r[:half]) - math.log(half))
    log_c2 = float(logsumexp(log_r[half:]) - math.log(m - half))
    if abs(log_c1 - log_c2) <= math.log(RATIO_BAND):
        log_ch = float(logsumexp(log_r) - math.log(m))
        rule = "average"
    else:
        log_ch = min(log_c1, log_c2)
        rule = "min"
    return log_ch, (log_c1, log_c2), rule


def estimate_ch(target, proposal, m, seed=0):
    """Normalizing-constant estimate of the target from m proposal draws.

    Each draw costs one model call.  Non-finite ratios are dropped with a
    warning and the sample count adjusted.
    """
    if m < 4 or m % 2 != 0:
        raise ValueError("m must be an even number >= 4")
    rng = np.random.default_rng(seed)
    draws = proposal.sample(m, rng)
    log_q = proposal.logpdf(draws)
    log_h = np.empty(m)
    for i in range(m):
        log_h[i] = target.eval(draws[i]).log_h
    log_r = log_h - log_q
    ok = np.isfinite(log_r) | (log_h == -np.inf)  # -inf ratio is a valid zero
    log_r = np.where(log_h == -np.inf, -np.inf, log_r)
    dropped = int(np.sum(~ok))
    if dropped:
        warnings.warn(f"dropping {dropped} non-finite importance ratio(s)",
                      stacklevel=2)
        log_r = log_r[ok]
    log_ch, halves, rule = _combine_halves(log_r)

    # relative variance around the chosen estimate, stable in log space
    m_used = log_r.size
    if np.isfinite(log_ch):
        dev = np.exp(log_r - log_ch) - 1.0
        relvar = float(np.sum(dev * dev) / (m_used * (m_used - 1)))
    else:
        relvar = np.inf
    return IisResult(
        log_ch=log_ch,
        log_ch_half=halves,
        rule=rule,
        m_requested=m,
        m_used=m_used,
        relvar=relvar,
        n_dropped=dropped,
    )


@dataclass
class CpiResult:
    log_c: float
    cov: float
    n_chain: int
    m_draws: int
    ess_min: float

    @property
    def c(self):
        return math.exp(self.log_c)

    @property
    def n_total(self):
        return self.n_chain + self.m_draws


def estimate_c_pi(posterior, n_pi, m_pi, n_burnin, seed=0, em=None, x0=None):
    """Normalizing constant of an unnormalized density via chain + mixture.

    Draws ``n_pi`` states with standard HMCMC (after ``n_burnin``), fits the
    mixture on the thinned set, then evaluates the mean importance ratio on
    ``m_pi`` i.i.d. mixture draws, entirely in log space.
    """
    target = DensityTarget(posterior)
    cfg = SamplerConfig(
        n_iter=n_burnin + n_pi, n_burnin=n_burnin, seed=seed,
        n_leapfrog=1,
    )
    start = np.zeros(posterior.d) if x0 is None else np.asarray(x0, float)
    run = hmcmc_chain(target, cfg, start)
    draws = run.post_burnin
    j = thinning_stride(draws.shape[0], ess_min(draws))
    thinned = draws[::j]
    em = em or EmConfig.for_dimension(posterior.d)
    gmm, _ = fit_gmm(thinned, em, seed=seed + 1)

    rng = np.random.default_rng(seed + 2)
    pts = gmm.sample(m_pi, rng)
    log_q = gmm.logpdf(pts)
    log_p = np.array([posterior.log_density(p) for p in pts])
    log_r = log_p - log_q
    log_c = float(logsumexp(log_r) - math.log(m_pi))
    dev = np.exp(log_r - log_c) - 1.0
    relvar = float(np.sum(dev * dev) / (m_pi * (m_pi - 1)))
    return CpiResult(
        log_c=log_c,
        cov=math.sqrt(relvar),
        n_chain=run.n_target_evals,
        m_draws=m_pi,
        ess_min=float(ess_min(draws)),
    )
