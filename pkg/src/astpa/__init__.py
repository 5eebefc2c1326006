"""Rare event probability estimation in non-Gaussian spaces.

Builds an unnormalized smoothed sampling target from a joint density and a
limit-state function, samples it with (quasi-Newton preconditioned)
Hamiltonian MCMC, and recovers the rare event probability by combining a
shifted chain estimate with an inverse-importance-sampling estimate of the
target's normalizing constant.
"""

__version__ = "0.1.0"

from .densities import (
    Density,
    GaussianCopulaGumbel,
    GaussianMixture,
    IndependentGaussian,
    IndependentLognormal,
    NealFunnel,
    NoDirectSampler,
    RingPosterior,
    RosenbrockDensity,
    gumbel_params_from_moments,
    load_ring_observations,
)
from .limit_states import (
    Hyperspherical,
    LimitState,
    LinearSum,
    OcticLognormal,
    QuadraticGumbel,
    RingQuadratic,
)
from .transforms import (
    BoundSpec,
    TransformedDensity,
    TransformedLimitState,
    pushforward_log_density,
)
from .target import AstpaTarget, DensityTarget, limit_state_scale, logistic_mean_shift
