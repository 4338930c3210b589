"""Mixture-model building blocks shared by every sampler.

Kernels are observation densities f(y | theta) with theta a plain tuple,
(mu, var) for the Gaussian kernel and (a, b) for the Beta kernel.  Base
measures are priors over theta; the normal-inverse-gamma base is conjugate
to the Gaussian kernel, the product-gamma base for Beta shapes is not and
is updated with a Metropolis-adjusted Langevin step.

The Dirichlet process enters through three small functions: stick-breaking
weights, urn proposals proportional to cluster sizes (or the concentration
for a new cluster), and the exchangeable partition probability

    p(partition) = alpha^k * prod_h (n_h - 1)! / (alpha)_(n),

where (alpha)_(n) is the rising factorial over n terms.  The concentration
is a fixed constant throughout the package (default 1).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigurationError

__all__ = [
    "GaussianKernel",
    "BetaKernel",
    "NIGBase",
    "GammaGammaBase",
    "stick_breaking_weights",
    "polya_urn_propose",
    "categorical_from_log_weights",
    "eppf_log_prob",
    "validate_partition",
    "nig_posterior",
    "mala_beta_params_step",
    "prior_predictive_density",
]

_CLAMP = 1e-12
LOG_2PI = math.log(2.0 * math.pi)


class GaussianKernel:
    """Gaussian observation kernel, theta = (mean, variance), support R."""

    name = "gaussian"
    support = None

    def validate_theta(self, theta):
        mu, var = theta
        if not (var > 0 and math.isfinite(var) and math.isfinite(mu)):
            raise ValueError(f"gaussian kernel needs finite mean and positive variance, got {theta}")

    def log_density(self, theta, y):
        mu, var = theta
        return -0.5 * (LOG_2PI + math.log(var)) - (y - mu) ** 2 / (2.0 * var)

    def sample(self, theta, rng, size=None):
        mu, var = theta
        return rng.normal(mu, math.sqrt(var), size=size)

    def density_grid(self, theta, x):
        mu, var = theta
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x - mu) ** 2 / var) / math.sqrt(2.0 * math.pi * var)

    def __repr__(self):
        return "GaussianKernel()"

    def __eq__(self, other):
        return type(other) is GaussianKernel

    def __hash__(self):
        return hash("gaussian-kernel")


class BetaKernel:
    """Beta observation kernel, theta = (a, b), support (0, 1).

    Evaluation points are clamped away from the endpoints by 1e-12 inside
    the log density only; sampling and stored values are untouched.
    """

    name = "beta"
    support = (0.0, 1.0)

    def validate_theta(self, theta):
        a, b = theta
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
            raise ValueError(f"beta kernel needs positive finite shapes, got {theta}")

    def log_density(self, theta, y):
        a, b = theta
        y = min(max(y, _CLAMP), 1.0 - _CLAMP)
        lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        return (a - 1.0) * math.log(y) + (b - 1.0) * math.log1p(-y) - lbeta

    def sample(self, theta, rng, size=None):
        a, b = theta
        return rng.beta(a, b, size=size)

    def density_grid(self, theta, x):
        a, b = theta
        x = np.clip(np.asarray(x, dtype=float), _CLAMP, 1.0 - _CLAMP)
        lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        return np.exp((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - lbeta)

    def __repr__(self):
        return "BetaKernel()"

    def __eq__(self, other):
        return type(other) is BetaKernel

    def __hash__(self):
        return hash("beta-kernel")


@dataclass(frozen=True)
class NIGBase:
    """Normal-inverse-gamma base measure over (mean, variance).

    mean | variance ~ N(mu0, variance / lam), variance ~ IG(shape, rate).
    Conjugate to the Gaussian kernel.
    """

    mu0: float = 0.0
    lam: float = 1.0
    shape: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        if self.lam <= 0 or self.shape <= 0 or self.rate <= 0:
            raise ValueError(f"lam, shape, rate must be positive, got {self}")

    def sample(self, rng):
        var = self.rate / rng.gamma(self.shape)
        mu = rng.normal(self.mu0, math.sqrt(var / self.lam))
        return (mu, var)

    def log_density(self, theta):
        mu, var = theta
        if var <= 0:
            return -math.inf
        lp = self.shape * math.log(self.rate) - math.lgamma(self.shape)
        lp += -(self.shape + 1.0) * math.log(var) - self.rate / var
        lp += -0.5 * (LOG_2PI + math.log(var / self.lam))
        lp += -self.lam * (mu - self.mu0) ** 2 / (2.0 * var)
        return lp

    def quadrature_nodes(self):
        return _nig_quadrature_nodes(self)


@dataclass(frozen=True)
class GammaGammaBase:
    """Independent Gamma priors over the two Beta kernel shapes.

    a ~ Gamma(shape_a, rate_a), b ~ Gamma(shape_b, rate_b); the default
    Gamma(2, 2) on both keeps the shapes near one.
    """

    shape_a: float = 2.0
    rate_a: float = 2.0
    shape_b: float = 2.0
    rate_b: float = 2.0

    def __post_init__(self):
        if min(self.shape_a, self.rate_a, self.shape_b, self.rate_b) <= 0:
            raise ValueError(f"all gamma hyperparameters must be positive, got {self}")

    def sample(self, rng):
        return (rng.gamma(self.shape_a) / self.rate_a, rng.gamma(self.shape_b) / self.rate_b)

    def log_density(self, theta):
        a, b = theta
        if a <= 0 or b <= 0:
            return -math.inf
        lp = self.shape_a * math.log(self.rate_a) - math.lgamma(self.shape_a)
        lp += (self.shape_a - 1.0) * math.log(a) - self.rate_a * a
        lp += self.shape_b * math.log(self.rate_b) - math.lgamma(self.shape_b)
        lp += (self.shape_b - 1.0) * math.log(b) - self.rate_b * b
        return lp

    def quadrature_nodes(self):
        return _gamma_gamma_quadrature_nodes(self)


# ---------------------------------------------------------------------------
# Dirichlet process machinery
# ---------------------------------------------------------------------------


def stick_breaking_weights(alpha, n_sticks, rng):
    """First ``n_sticks`` stick-breaking weights of a Dirichlet process.

    w_h = nu_h * prod_{j < h} (1 - nu_j) with nu_j ~ Beta(1, alpha).  The
    weights are positive and sum to less than one; the remainder
    1 - sum(w) is the mass of the unbroken stick.
    """
    if alpha <= 0:
        raise ValueError(f"concentration must be positive, got {alpha}")
    if n_sticks < 1:
        raise ValueError(f"need at least one stick, got {n_sticks}")
    nu = rng.beta(1.0, alpha, size=n_sticks)
    w = nu.copy()
    if n_sticks > 1:
        w[1:] *= np.cumprod(1.0 - nu[:-1])
    return w


def polya_urn_propose(cluster_sizes, alpha, rng):
    """Draw a cluster index with probability proportional to its size,
    or ``len(cluster_sizes)`` (a new cluster) with probability
    proportional to alpha."""
    if alpha <= 0:
        raise ValueError(f"concentration must be positive, got {alpha}")
    total = alpha
    for s in cluster_sizes:
        if s < 0:
            raise ValueError(f"cluster sizes must be nonnegative, got {cluster_sizes}")
        total += s
    r = rng.random() * total
    acc = 0.0
    for h, s in enumerate(cluster_sizes):
        acc += s
        if r < acc:
            return h
    return len(cluster_sizes)


def categorical_from_log_weights(log_weights, rng):
    """Draw an index with probability proportional to exp(log_weights),
    shifted by the max so nothing overflows.  Scalar loop on purpose: the
    callers pass short per-site weight lists inside sampler sweeps."""
    m = max(log_weights)
    probs = [math.exp(l - m) for l in log_weights]
    r = rng.random() * math.fsum(probs)
    acc = 0.0
    for h, p in enumerate(probs):
        acc += p
        if r < acc:
            return h
    return len(probs) - 1


def eppf_log_prob(cluster_sizes, alpha):
    """Log probability of a partition with the given cluster sizes.

    log [ alpha^k * prod_h (n_h - 1)! / (alpha)_(n) ] with the rising
    factorial (alpha)_(n) = alpha (alpha+1) ... (alpha+n-1).
    """
    if alpha <= 0:
        raise ValueError(f"concentration must be positive, got {alpha}")
    sizes = [int(s) for s in cluster_sizes]
    if any(s < 1 for s in sizes):
        raise ValueError(f"cluster sizes must be positive, got {cluster_sizes}")
    n = sum(sizes)
    k = len(sizes)
    if n == 0:
        return 0.0
    out = k * math.log(alpha)
    out += sum(math.lgamma(s) for s in sizes)
    out -= math.lgamma(alpha + n) - math.lgamma(alpha)
    return out


def validate_partition(labels):
    """Check labels are contiguous 0..k-1 and return the cluster sizes."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return np.zeros(0, dtype=int)
    k = labels.max() + 1
    if labels.min() < 0:
        raise ValueError("cluster labels must be nonnegative")
    sizes = np.bincount(labels, minlength=k)
    if np.any(sizes == 0):
        raise ValueError(f"cluster labels must be contiguous 0..k-1, got sizes {sizes}")
    return sizes


# ---------------------------------------------------------------------------
# Conjugate and Langevin parameter updates
# ---------------------------------------------------------------------------


def nig_posterior(base, n, sum_y, sum_sq):
    """Posterior hyperparameters after n Gaussian observations.

    Takes sufficient statistics (n, sum of y, sum of y squared) and returns
    an :class:`NIGBase` holding the updated (mu0, lam, shape, rate).
    """
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if n == 0:
        return base
    lam_n = base.lam + n
    mean = sum_y / n
    mu_n = (base.lam * base.mu0 + sum_y) / lam_n
    shape_n = base.shape + 0.5 * n
    ss = max(sum_sq - sum_y * sum_y / n, 0.0)
    rate_n = base.rate + 0.5 * ss + base.lam * n * (mean - base.mu0) ** 2 / (2.0 * lam_n)
    return NIGBase(mu0=mu_n, lam=lam_n, shape=shape_n, rate=rate_n)


def _beta_shape_log_target(n, s1, s2, u, v):
    # log target over (u, v) = (log a, log b), including the Gamma(2, 2)
    # priors and the log-space Jacobian
    a = math.exp(u)
    b = math.exp(v)
    val = n * (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))
    val += (a - 1.0) * s1 + (b - 1.0) * s2
    val += 2.0 * u + 2.0 * v - 2.0 * a - 2.0 * b
    return val


def _beta_shape_grad(n, s1, s2, u, v):
    a = math.exp(u)
    b = math.exp(v)
    dab = special.digamma(a + b)
    gu = a * (n * (dab - special.digamma(a)) + s1 - 2.0) + 2.0
    gv = b * (n * (dab - special.digamma(b)) + s2 - 2.0) + 2.0
    return gu, gv


def _mala_beta_step_from_stats(n, s1, s2, a, b, rng, step):
    u = math.log(a)
    v = math.log(b)
    lp = _beta_shape_log_target(n, s1, s2, u, v)
    gu, gv = _beta_shape_grad(n, s1, s2, u, v)
    sd = math.sqrt(step)
    mu_u = u + 0.5 * step * gu
    mu_v = v + 0.5 * step * gv
    up = mu_u + sd * rng.standard_normal()
    vp = mu_v + sd * rng.standard_normal()
    lp_p = _beta_shape_log_target(n, s1, s2, up, vp)
    if not math.isfinite(lp_p):
        return (a, b), False
    gu_p, gv_p = _beta_shape_grad(n, s1, s2, up, vp)
    mu_u_p = up + 0.5 * step * gu_p
    mu_v_p = vp + 0.5 * step * gv_p
    fwd = (up - mu_u) ** 2 + (vp - mu_v) ** 2
    rev = (u - mu_u_p) ** 2 + (v - mu_v_p) ** 2
    log_accept = lp_p - lp + (fwd - rev) / (2.0 * step)
    if not math.isfinite(log_accept):
        return (a, b), False
    if log_accept >= 0.0 or rng.random() < math.exp(log_accept):
        return (math.exp(up), math.exp(vp)), True
    return (a, b), False


def mala_beta_params_step(values, params, rng, step=0.05):
    """One Langevin step on the Beta kernel shapes given cluster data.

    The target is the product of Beta likelihood terms over ``values`` and
    Gamma(2, 2) priors on each shape; the step is taken on (log a, log b)
    with drift step/2 times the gradient and noise variance ``step``, and
    accepted with the usual asymmetric-proposal correction.  Numerical
    overflow in the proposal is treated as a rejection.

    Returns ``((a, b), accepted)``.
    """
    a, b = params
    if a <= 0 or b <= 0:
        raise ValueError(f"shapes must be positive, got {params}")
    values = np.asarray(values, dtype=float)
    clipped = np.clip(values, _CLAMP, 1.0 - _CLAMP)
    n = values.size
    s1 = float(np.log(clipped).sum())
    s2 = float(np.log1p(-clipped).sum())
    return _mala_beta_step_from_stats(n, s1, s2, a, b, rng, step)


# ---------------------------------------------------------------------------
# Prior predictive by fixed quadrature
# ---------------------------------------------------------------------------


def _prob_space_gauss_legendre(n_nodes):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * (x + 1.0), 0.5 * w


@functools.lru_cache(maxsize=64)
def _nig_quadrature_nodes(base):
    # 8 variance nodes x 4 mean nodes, both Gauss-Legendre in probability
    # space; the mean layer is exact enough because the mean integral of a
    # Gaussian kernel is itself Gaussian
    from scipy.stats import invgamma, norm

    uv, wv = _prob_space_gauss_legendre(8)
    um, wm = _prob_space_gauss_legendre(4)
    var_nodes = invgamma(base.shape, scale=base.rate).ppf(uv)
    thetas, weights = [], []
    for var, w_var in zip(var_nodes, wv):
        mu_nodes = norm(base.mu0, math.sqrt(var / base.lam)).ppf(um)
        for mu, w_mu in zip(mu_nodes, wm):
            thetas.append((mu, var))
            weights.append(w_var * w_mu)
    return tuple(thetas), np.array(weights)


@functools.lru_cache(maxsize=64)
def _gamma_gamma_quadrature_nodes(base):
    from scipy.stats import gamma

    ua, wa = _prob_space_gauss_legendre(8)
    ub, wb = _prob_space_gauss_legendre(4)
    a_nodes = gamma(base.shape_a, scale=1.0 / base.rate_a).ppf(ua)
    b_nodes = gamma(base.shape_b, scale=1.0 / base.rate_b).ppf(ub)
    thetas, weights = [], []
    for a, w_a in zip(a_nodes, wa):
        for b, w_b in zip(b_nodes, wb):
            thetas.append((a, b))
            weights.append(w_a * w_b)
    return tuple(thetas), np.array(weights)


def prior_predictive_density(kernel, base, grid):
    """E_{theta ~ base}[ f(x | theta) ] on a grid, by 32-node quadrature.

    Nodes and weights are cached per base measure, so repeated calls during
    a chain cost one weighted sum of kernel rows.
    """
    grid = np.asarray(grid, dtype=float)
    thetas, weights = base.quadrature_nodes()
    out = np.zeros_like(grid)
    for theta, w in zip(thetas, weights):
        out += w * kernel.density_grid(theta, grid)
    return out
