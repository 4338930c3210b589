"""Dirichlet process mixture inference from privatized data.

Releases produced by standard differential-privacy mechanisms (additive
Laplace or Gaussian noise, noisy wavelet coefficients, smoothed
histogram samples) are treated as the observed data of a measurement
error model, and the mixture posterior is explored by MCMC samplers
that only ever see the release.
"""

from .channels import (
    GLOBAL_KIND,
    SCALAR_KIND,
    WAVELET_KIND,
    GaussianChannel,
    LaplaceChannel,
    SanitizedDataset,
    SmoothedHistogramChannel,
    WaveletChannel,
    gaussian_sigma,
    solve_delta,
    zcdp_gaussian_variance,
)
from .diagnostics import (
    DensityEstimate,
    RunSummary,
    ari,
    density_estimate,
    density_from_csv,
    density_to_csv,
    ess,
    hellinger,
    point_estimate_partition,
)
from .errors import ConfigurationError, DomainError, InfeasibleError, PrivmixError
from .marginal_gaussian import (
    MarginalGaussianModel,
    TruncatedNIGBase,
    cluster_log_marginal,
    marginal_kernel_log_density,
    neal2_sweep,
    neal3_sweep,
)
from .mixtures import (
    BetaKernel,
    GammaGammaBase,
    GaussianKernel,
    NIGBase,
    eppf_log_prob,
    prior_predictive_density,
    stick_breaking_weights,
)
from .samplers import (
    AcceptanceTracker,
    ChainConfig,
    DPMixtureModel,
    check_compatibility,
    pseudo_marginal_estimate,
    run_chain,
)

__version__ = "0.1.0"

__all__ = [
    "GLOBAL_KIND",
    "SCALAR_KIND",
    "WAVELET_KIND",
    "GaussianChannel",
    "LaplaceChannel",
    "SanitizedDataset",
    "SmoothedHistogramChannel",
    "WaveletChannel",
    "gaussian_sigma",
    "solve_delta",
    "zcdp_gaussian_variance",
    "DensityEstimate",
    "RunSummary",
    "ari",
    "density_estimate",
    "density_from_csv",
    "density_to_csv",
    "ess",
    "hellinger",
    "point_estimate_partition",
    "ConfigurationError",
    "DomainError",
    "InfeasibleError",
    "PrivmixError",
    "MarginalGaussianModel",
    "TruncatedNIGBase",
    "cluster_log_marginal",
    "marginal_kernel_log_density",
    "neal2_sweep",
    "neal3_sweep",
    "BetaKernel",
    "GammaGammaBase",
    "GaussianKernel",
    "NIGBase",
    "eppf_log_prob",
    "prior_predictive_density",
    "stick_breaking_weights",
    "AcceptanceTracker",
    "ChainConfig",
    "DPMixtureModel",
    "check_compatibility",
    "pseudo_marginal_estimate",
    "run_chain",
    "__version__",
]
