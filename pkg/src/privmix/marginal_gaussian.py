"""Conjugate marginalized model for Gaussian noise on Gaussian kernels.

When the channel adds N(0, noise_var) noise to a latent Gaussian mixture,
the released values are themselves a Gaussian mixture with per-cluster
variance total_var = kernel variance + noise_var, bounded below by
noise_var.  Placing a normal-inverse-gamma prior on (mean, total_var)
truncated to total_var >= noise_var restores conjugacy in z-space, which
is what the collapsed samplers exploit:

    mean | total_var ~ N(mu0, total_var / lam)
    total_var        ~ IG(shape, rate) restricted to [noise_var, inf).

The cluster marginal likelihood is the standard normal-inverse-gamma
evidence times the ratio of posterior to prior truncation masses; both
masses are regularized incomplete gamma integrals evaluated in log space,
so deep truncation does not underflow.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConfigurationError
from .mixtures import LOG_2PI, NIGBase, categorical_from_log_weights, nig_posterior

__all__ = [
    "TruncatedNIGBase",
    "MarginalGaussianModel",
    "marginal_kernel_log_density",
    "truncated_nig_sample",
    "cluster_log_marginal",
    "log_gammainc_lower",
    "neal2_sweep",
    "neal3_sweep",
]


def log_gammainc_lower(a, x):
    """log of the regularized lower incomplete gamma P(a, x), stable for
    values far below the double-precision floor of P itself."""
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0.0:
        return -math.inf
    p = special.gammainc(a, x)
    if p > 1e-280:
        return math.log(p)
    # left-tail series P(a, x) = x^a e^(-x) / Gamma(a+1) * sum_k prod term
    log_pref = a * math.log(x) - x - math.lgamma(a + 1.0)
    term = 1.0
    total = 1.0
    k = 0
    while term > 1e-17 * total and k < 10_000:
        term *= x / (a + 1.0 + k)
        total += term
        k += 1
    return log_pref + math.log(total)


def marginal_kernel_log_density(z, theta, noise_var):
    """log N(z | mean, kernel variance + noise_var) for theta = (mean, var).

    This is the released-value density after Gaussian noise is convolved
    with a Gaussian kernel; at noise_var = 0 it reduces to the kernel.
    """
    mu, var = theta
    total = var + noise_var
    if total <= 0:
        raise ValueError(f"total variance must be positive, got {total}")
    return -0.5 * (LOG_2PI + math.log(total)) - (z - mu) ** 2 / (2.0 * total)


@dataclass(frozen=True)
class TruncatedNIGBase:
    """Normal-inverse-gamma base over (mean, total variance), truncated to
    total variance >= noise_var.  noise_var = 0 recovers the plain base."""

    mu0: float = 0.0
    lam: float = 1.0
    shape: float = 1.0
    rate: float = 1.0
    noise_var: float = 0.0
    log_prior_mass: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.lam <= 0 or self.shape <= 0 or self.rate <= 0:
            raise ValueError(f"lam, shape, rate must be positive, got {self}")
        if self.noise_var < 0:
            raise ValueError(f"noise_var must be nonnegative, got {self.noise_var}")
        object.__setattr__(self, "log_prior_mass", _log_trunc_mass(self.shape, self.rate, self.noise_var))
        if not math.isfinite(self.log_prior_mass):
            raise ConfigurationError(
                f"prior truncation mass underflows at noise_var={self.noise_var} "
                f"with IG({self.shape}, {self.rate}); hyperparameters infeasible"
            )

    def untruncated(self):
        return NIGBase(mu0=self.mu0, lam=self.lam, shape=self.shape, rate=self.rate)

    def sample(self, rng):
        return truncated_nig_sample(self, rng)

    def quadrature_nodes(self):
        return _truncated_nig_quadrature_nodes(self)


def _log_trunc_mass(shape, rate, noise_var):
    # P(total_var >= noise_var) with total_var ~ IG(shape, rate); the
    # reciprocal is Gamma(shape, rate)-distributed, so the mass is the
    # regularized lower incomplete gamma at rate / noise_var
    if noise_var == 0.0:
        return 0.0
    return log_gammainc_lower(shape, rate / noise_var)


def truncated_nig_sample(base, rng):
    """One draw (mean, total_var) from a truncated normal-inverse-gamma base.

    total_var is drawn by inverse CDF on the Gamma representation of its
    reciprocal restricted to (0, rate/noise_var]; exact for any truncation
    mass the log-space representation can hold.  A rejection fallback only
    runs if the inverse CDF ever returns a non-finite value.
    """
    mass = math.exp(base.log_prior_mass)
    if mass < 1e-12:
        raise ConfigurationError(
            f"truncation mass {mass:.3e} too small to sample reliably; "
            "hyperparameters infeasible"
        )
    u = max(rng.random() * mass, 1e-300)
    x = special.gammaincinv(base.shape, u) / base.rate
    total_var = 1.0 / x if x > 0 else math.inf
    if not math.isfinite(total_var) or total_var < base.noise_var * (1.0 - 1e-9):
        for _ in range(100_000):
            cand = base.rate / rng.gamma(base.shape)
            if cand >= base.noise_var:
                total_var = cand
                break
        else:  # pragma: no cover - unreachable given the mass check above
            raise ConfigurationError("truncated variance sampling failed")
    total_var = max(total_var, base.noise_var)
    mu = rng.normal(base.mu0, math.sqrt(total_var / base.lam))
    return (mu, total_var)


def _log_marginal_from_stats(base, n, sum_z, sum_sq):
    # standard normal-inverse-gamma evidence plus the log ratio of
    # posterior to prior truncation masses
    if n == 0:
        return 0.0
    lam_n = base.lam + n
    mean = sum_z / n
    shape_n = base.shape + 0.5 * n
    ss = sum_sq - sum_z * sum_z / n
    if ss < 0.0:
        ss = 0.0
    rate_n = base.rate + 0.5 * ss + base.lam * n * (mean - base.mu0) ** 2 / (2.0 * lam_n)
    out = -0.5 * n * LOG_2PI
    out += 0.5 * (math.log(base.lam) - math.log(lam_n))
    out += math.lgamma(shape_n) - math.lgamma(base.shape)
    out += base.shape * math.log(base.rate) - shape_n * math.log(rate_n)
    if base.noise_var > 0.0:
        log_mass_n = log_gammainc_lower(shape_n, rate_n / base.noise_var)
        if not math.isfinite(log_mass_n):
            raise ConfigurationError(
                "posterior truncation mass underflows; noise_var/hyperparameter "
                "combination infeasible for this data"
            )
        out += log_mass_n - base.log_prior_mass
    return out


def cluster_log_marginal(z_values, base):
    """log marginal likelihood of one cluster's released values.

    Integrates the product of N(z_i | mean, total_var) over the truncated
    normal-inverse-gamma base.  The empty cluster returns 0 (log of 1).
    """
    z = np.asarray(z_values, dtype=float)
    if z.size == 0:
        return 0.0
    return _log_marginal_from_stats(base, z.size, float(z.sum()), float((z**2).sum()))


def _truncated_nig_posterior(base, n, sum_z, sum_sq):
    post = nig_posterior(base.untruncated(), n, sum_z, sum_sq)
    return TruncatedNIGBase(
        mu0=post.mu0, lam=post.lam, shape=post.shape, rate=post.rate, noise_var=base.noise_var
    )


@dataclass(frozen=True)
class MarginalGaussianModel:
    """Bundle of the truncated base and concentration used by the collapsed
    Gaussian-channel samplers."""

    base: TruncatedNIGBase
    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"concentration must be positive, got {self.alpha}")

    @property
    def noise_var(self):
        return self.base.noise_var

    def cluster_log_marginal(self, z_values):
        return cluster_log_marginal(z_values, self.base)

    def log_marginal_stats(self, n, sum_z, sum_sq):
        return _log_marginal_from_stats(self.base, n, sum_z, sum_sq)

    def posterior_sample(self, n, sum_z, sum_sq, rng):
        """Draw (mean, total_var) from the exact posterior of one cluster."""
        return truncated_nig_sample(_truncated_nig_posterior(self.base, n, sum_z, sum_sq), rng)


def _prob_space_gauss_legendre(n_nodes):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# Collapsed sweeps over allocations (and unique values)
# ---------------------------------------------------------------------------


def _partition_stats(labels, z):
    k = int(labels.max()) + 1 if labels.size else 0
    sizes = [0] * k
    s1 = [0.0] * k
    s2 = [0.0] * k
    for zi, h in zip(z, labels):
        sizes[h] += 1
        s1[h] += zi
        s2[h] += zi * zi
    if any(s == 0 for s in sizes):
        raise ValueError("cluster labels must be contiguous 0..k-1 with no empty cluster")
    return sizes, s1, s2


def _drop_cluster(h, labels, *columns):
    # swap-with-last so labels stay contiguous without a full relabel pass
    last = len(columns[0]) - 1
    if h != last:
        for col in columns:
            col[h] = col[last]
        labels[labels == last] = h
    for col in columns:
        col.pop()


def neal3_sweep(labels, z, model, rng):
    """One collapsed Gibbs pass over allocations.

    Each site is removed from its cluster and reassigned with probability
    proportional to size * exp(marginal with the site - marginal without)
    for existing clusters and alpha * exp(singleton marginal) for a fresh
    one.  Marginals of untouched clusters are cached across sites.
    """
    z = np.asarray(z, dtype=float)
    labels = np.asarray(labels, dtype=np.int64).copy()
    lms = model.log_marginal_stats
    sizes, s1, s2 = _partition_stats(labels, z)
    lm = [lms(sizes[h], s1[h], s2[h]) for h in range(len(sizes))]
    log_alpha = math.log(model.alpha)
    for i in range(z.size):
        zi = z[i]
        zi2 = zi * zi
        h0 = labels[i]
        sizes[h0] -= 1
        s1[h0] -= zi
        s2[h0] -= zi2
        if sizes[h0] == 0:
            _drop_cluster(h0, labels, sizes, s1, s2, lm)
        else:
            lm[h0] = lms(sizes[h0], s1[h0], s2[h0])
        k = len(sizes)
        logw = [0.0] * (k + 1)
        for h in range(k):
            logw[h] = math.log(sizes[h]) + lms(sizes[h] + 1, s1[h] + zi, s2[h] + zi2) - lm[h]
        logw[k] = log_alpha + lms(1, zi, zi2)
        c = categorical_from_log_weights(logw, rng)
        if c == k:
            sizes.append(1)
            s1.append(zi)
            s2.append(zi2)
            lm.append(logw[k] - log_alpha)
        else:
            lm[c] = lm[c] + logw[c] - math.log(sizes[c])
            sizes[c] += 1
            s1[c] += zi
            s2[c] += zi2
        labels[i] = c
    return labels


def neal2_sweep(labels, thetas, z, model, rng):
    """One pass resampling allocations against instantiated unique values,
    then redrawing every unique value from its exact cluster posterior.

    Existing clusters weight by size * N(z | mean, total_var); a fresh
    cluster weights by alpha * exp(singleton marginal), the exact conjugate
    predictive, and its unique value is drawn from the singleton posterior.
    """
    z = np.asarray(z, dtype=float)
    labels = np.asarray(labels, dtype=np.int64).copy()
    thetas = list(thetas)
    sizes, s1, s2 = _partition_stats(labels, z)
    if len(thetas) != len(sizes):
        raise ValueError(f"expected {len(sizes)} unique values, got {len(thetas)}")
    floor = model.noise_var
    if any(t[1] < floor for t in thetas):
        raise ValueError("unique-value variances must sit at or above the noise floor")
    # per-cluster log-normalizer and half-precision terms, updated on birth
    const = [-0.5 * (LOG_2PI + math.log(t[1])) for t in thetas]
    half_prec = [0.5 / t[1] for t in thetas]
    log_alpha = math.log(model.alpha)
    for i in range(z.size):
        zi = z[i]
        zi2 = zi * zi
        h0 = labels[i]
        sizes[h0] -= 1
        s1[h0] -= zi
        s2[h0] -= zi2
        if sizes[h0] == 0:
            _drop_cluster(h0, labels, sizes, s1, s2, thetas, const, half_prec)
        k = len(sizes)
        logw = [0.0] * (k + 1)
        for h in range(k):
            d = zi - thetas[h][0]
            logw[h] = math.log(sizes[h]) + const[h] - d * d * half_prec[h]
        logw[k] = log_alpha + model.log_marginal_stats(1, zi, zi2)
        c = categorical_from_log_weights(logw, rng)
        if c == k:
            theta = model.posterior_sample(1, zi, zi2, rng)
            sizes.append(1)
            s1.append(zi)
            s2.append(zi2)
            thetas.append(theta)
            const.append(-0.5 * (LOG_2PI + math.log(theta[1])))
            half_prec.append(0.5 / theta[1])
        else:
            sizes[c] += 1
            s1[c] += zi
            s2[c] += zi2
        labels[i] = c
    for h in range(len(sizes)):
        thetas[h] = model.posterior_sample(sizes[h], s1[h], s2[h], rng)
        assert thetas[h][1] >= floor
    return labels, thetas


@functools.lru_cache(maxsize=64)
def _truncated_nig_quadrature_nodes(base):
    # nodes in latent-kernel space: (mean, total_var - noise_var); used for
    # the prior predictive of the latent mixture density
    from scipy.stats import norm

    uv, wv = _prob_space_gauss_legendre(8)
    um, wm = _prob_space_gauss_legendre(4)
    mass = math.exp(base.log_prior_mass)
    thetas, weights = [], []
    for u_var, w_var in zip(uv, wv):
        x = special.gammaincinv(base.shape, u_var * mass) / base.rate
        total_var = 1.0 / x
        y_var = max(total_var - base.noise_var, 1e-12)
        mu_nodes = norm(base.mu0, math.sqrt(total_var / base.lam)).ppf(um)
        for mu, w_mu in zip(mu_nodes, wm):
            thetas.append((mu, y_var))
            weights.append(w_var * w_mu)
    return tuple(thetas), np.array(weights)
