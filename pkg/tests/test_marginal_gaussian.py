"""Tests for the conjugate marginalized Gaussian-channel model.

Expected values come from three independent oracle families: the
sequential Student-t predictive product for the untruncated conjugate
evidence, direct nested quadrature of the raw prior-times-likelihood
integrand for truncated cases, and rejection sampling from scipy
distributions for the truncated draws.
"""

import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from privmix.errors import ConfigurationError
from privmix.marginal_gaussian import (
    MarginalGaussianModel,
    TruncatedNIGBase,
    cluster_log_marginal,
    log_gammainc_lower,
    marginal_kernel_log_density,
    neal2_sweep,
    neal3_sweep,
    truncated_nig_sample,
)
from privmix.mixtures import GaussianKernel, eppf_log_prob


# ---------------------------------------------------------------------------
# marginal kernel density
# ---------------------------------------------------------------------------


def test_marginal_kernel_reduces_to_kernel_at_zero_noise():
    kern = GaussianKernel()
    for z, mu, var in [(0.3, -1.0, 2.0), (5.0, 4.0, 0.5), (-2.2, 0.0, 1.0)]:
        assert marginal_kernel_log_density(z, (mu, var), 0.0) == pytest.approx(
            kern.log_density((mu, var), z), abs=1e-14
        )


def test_marginal_kernel_closed_form():
    # variance 1 + noise 3 gives N(1 | 0, 4): -log(8 pi)/2 - 1/8
    expected = -0.5 * math.log(8.0 * math.pi) - 0.125
    assert marginal_kernel_log_density(1.0, (0.0, 1.0), 3.0) == pytest.approx(expected, abs=1e-14)


def test_marginal_kernel_matches_convolution_quadrature():
    rng = np.random.default_rng(17)
    for _ in range(20):
        mu = rng.normal(0, 2)
        var = rng.uniform(0.2, 3.0)
        noise = rng.uniform(0.0, 2.0)
        z = rng.normal(mu, 2)

        def integrand(y):
            return stats.norm.pdf(z, y, math.sqrt(noise)) * stats.norm.pdf(y, mu, math.sqrt(var))

        if noise == 0.0:
            continue
        val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=0, epsrel=1e-12)
        assert marginal_kernel_log_density(z, (mu, var), noise) == pytest.approx(
            math.log(val), abs=1e-8
        )


def test_marginal_kernel_rejects_nonpositive_total_variance():
    with pytest.raises(ValueError):
        marginal_kernel_log_density(0.0, (0.0, 0.0), 0.0)


# ---------------------------------------------------------------------------
# base validation and log-space incomplete gamma
# ---------------------------------------------------------------------------


def test_base_rejects_bad_hyperparameters():
    with pytest.raises(ValueError):
        TruncatedNIGBase(lam=0.0)
    with pytest.raises(ValueError):
        TruncatedNIGBase(shape=-1.0)
    with pytest.raises(ValueError):
        TruncatedNIGBase(rate=0.0)
    with pytest.raises(ValueError):
        TruncatedNIGBase(noise_var=-0.5)


def test_log_gammainc_lower_matches_direct():
    for a, x in [(2.0, 1.0), (3.5, 0.01), (0.7, 5.0), (10.0, 30.0)]:
        assert log_gammainc_lower(a, x) == pytest.approx(
            math.log(special.gammainc(a, x)), rel=1e-13
        )
    assert log_gammainc_lower(2.0, 0.0) == -math.inf


def test_log_gammainc_lower_deep_tail():
    # reference values from 60-digit arithmetic; far below the double floor
    cases = [
        (2.0, 1e-150, -691.4686750787737),
        (5.0, 1e-80, -925.8215289404003),
        (2.5, 1e-200, -1152.49352009937),
    ]
    for a, x, want in cases:
        assert log_gammainc_lower(a, x) == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# truncated base sampling
# ---------------------------------------------------------------------------


def test_truncated_sampling_matches_analytic_cdf():
    base = TruncatedNIGBase(mu0=0.0, lam=1.0, shape=3.0, rate=3.0, noise_var=2.0)
    rng = np.random.default_rng(5)
    draws = np.array([truncated_nig_sample(base, rng)[1] for _ in range(20_000)])
    assert draws.min() >= 2.0
    mass = special.gammainc(3.0, 1.5)

    def trunc_cdf(t):
        t = np.asarray(t, dtype=float)
        upper = 1.0 - special.gammainc(3.0, 3.0 / t)
        return np.clip((upper - (1.0 - mass)) / mass, 0.0, 1.0)

    assert stats.kstest(draws, trunc_cdf).pvalue > 0.01


def test_untruncated_sampling_matches_inverse_gamma():
    base = TruncatedNIGBase(mu0=0.0, lam=1.0, shape=3.0, rate=3.0, noise_var=0.0)
    rng = np.random.default_rng(6)
    draws = np.array([truncated_nig_sample(base, rng)[1] for _ in range(20_000)])
    assert stats.kstest(draws, stats.invgamma(3.0, scale=3.0).cdf).pvalue > 0.01


def test_truncated_sampling_mean_is_conditionally_gaussian():
    base = TruncatedNIGBase(mu0=0.7, lam=2.0, shape=3.0, rate=3.0, noise_var=2.0)
    rng = np.random.default_rng(7)
    standardized = []
    for _ in range(20_000):
        mu, total_var = truncated_nig_sample(base, rng)
        standardized.append((mu - 0.7) / math.sqrt(total_var / 2.0))
    assert stats.kstest(np.array(standardized), stats.norm.cdf).pvalue > 0.01


def test_truncated_sampling_far_tail_respects_floor():
    # floor at ten prior means: every draw still sits above it
    base = TruncatedNIGBase(mu0=0.0, lam=1.0, shape=3.0, rate=3.0, noise_var=15.0)
    rng = np.random.default_rng(8)
    draws = np.array([truncated_nig_sample(base, rng)[1] for _ in range(10_000)])
    assert (draws >= 15.0).all()


def test_truncation_mass_matches_monte_carlo():
    shape, rate, floor = 3.0, 3.0, 4.0
    mass = math.exp(TruncatedNIGBase(shape=shape, rate=rate, noise_var=floor).log_prior_mass)
    rng = np.random.default_rng(9)
    draws = stats.invgamma(shape, scale=rate).rvs(size=100_000, random_state=rng)
    frac = np.mean(draws >= floor)
    se = math.sqrt(mass * (1.0 - mass) / draws.size)
    assert abs(frac - mass) < 3.0 * se


def test_sampling_raises_on_vanishing_mass():
    base = TruncatedNIGBase(mu0=0.0, lam=1.0, shape=3.0, rate=3.0, noise_var=2e4)
    assert math.exp(base.log_prior_mass) < 1e-12
    with pytest.raises(ConfigurationError):
        truncated_nig_sample(base, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# cluster marginal likelihood
# ---------------------------------------------------------------------------


def _sequential_predictive_log_marginal(z, mu0, lam, a, b):
    # independent conjugate oracle: product of Student-t predictives with
    # one-observation hyperparameter updates done inline
    total = 0.0
    for zi in z:
        scale = math.sqrt(b * (lam + 1.0) / (a * lam))
        total += stats.t.logpdf(zi, df=2.0 * a, loc=mu0, scale=scale)
        lam1 = lam + 1.0
        mu0, a, b = (
            (lam * mu0 + zi) / lam1,
            a + 0.5,
            b + lam * (zi - mu0) ** 2 / (2.0 * lam1),
        )
        lam = lam1
    return total


def _quadrature_log_marginal(z, mu0, lam, a, b, noise_var):
    # direct nested integration of the raw integrand over (mean, total_var)
    ig = stats.invgamma(a, scale=b)
    mass, _ = integrate.quad(ig.pdf, noise_var, np.inf)

    def outer(total_var):
        sd_mu = math.sqrt(total_var / lam)

        def inner(mu):
            ll = sum(stats.norm.logpdf(zi, mu, math.sqrt(total_var)) for zi in z)
            return math.exp(ll) * stats.norm.pdf(mu, mu0, sd_mu)

        val, _ = integrate.quad(inner, -np.inf, np.inf, epsabs=0, epsrel=1e-11, limit=200)
        return val * ig.pdf(total_var)

    val, _ = integrate.quad(outer, noise_var, np.inf, epsabs=0, epsrel=1e-10, limit=200)
    return math.log(val / mass)


def test_cluster_log_marginal_empty_subset_is_zero():
    base = TruncatedNIGBase(noise_var=1.0, shape=3.0, rate=3.0)
    assert cluster_log_marginal([], base) == 0.0


def test_cluster_log_marginal_matches_sequential_predictive():
    rng = np.random.default_rng(11)
    base = TruncatedNIGBase(mu0=0.3, lam=0.7, shape=2.1, rate=1.6, noise_var=0.0)
    for _ in range(10):
        z = rng.normal(1.2, 2.0, size=rng.integers(1, 6))
        want = _sequential_predictive_log_marginal(z, 0.3, 0.7, 2.1, 1.6)
        assert cluster_log_marginal(z, base) == pytest.approx(want, abs=1e-10)


def test_cluster_log_marginal_matches_quadrature():
    rng = np.random.default_rng(12)
    base = TruncatedNIGBase(mu0=0.2, lam=1.3, shape=2.5, rate=2.0, noise_var=0.8)
    for n in (1, 2, 5):
        z = rng.normal(0.5, 1.5, size=n)
        want = _quadrature_log_marginal(z, 0.2, 1.3, 2.5, 2.0, 0.8)
        got = cluster_log_marginal(z, base)
        assert abs(got - want) < 1e-6


def test_cluster_log_marginal_pinned_quadrature_case():
    z = np.array([0.4, -1.1])
    base = TruncatedNIGBase(mu0=0.0, lam=1.0, shape=3.0, rate=3.0, noise_var=1.0)
    want = _quadrature_log_marginal(z, 0.0, 1.0, 3.0, 3.0, 1.0)
    assert abs(cluster_log_marginal(z, base) - want) < 1e-6


def test_cluster_log_marginal_deep_truncation_matches_quadrature():
    rng = np.random.default_rng(13)
    z = rng.normal(0.0, 0.5, size=3)
    base = TruncatedNIGBase(mu0=0.0, lam=1.0, shape=3.0, rate=0.5, noise_var=3.0)
    assert math.exp(base.log_prior_mass) < 1e-3
    want = _quadrature_log_marginal(z, 0.0, 1.0, 3.0, 0.5, 3.0)
    assert abs(cluster_log_marginal(z, base) - want) < 1e-6


def test_cluster_log_marginal_is_exchangeable():
    rng = np.random.default_rng(14)
    z = rng.normal(0.0, 1.5, size=6)
    base = TruncatedNIGBase(mu0=0.1, lam=0.9, shape=2.2, rate=1.8, noise_var=0.6)
    want = cluster_log_marginal(z, base)
    for _ in range(5):
        perm = rng.permutation(z)
        assert cluster_log_marginal(perm, base) == pytest.approx(want, abs=1e-12)


# ---------------------------------------------------------------------------
# collapsed sweeps
# ---------------------------------------------------------------------------


def _default_model(noise_var=1.0, alpha=1.0):
    base = TruncatedNIGBase(mu0=0.0, lam=0.5, shape=2.0, rate=2.0, noise_var=noise_var)
    return MarginalGaussianModel(base=base, alpha=alpha)


def test_neal3_single_site_is_noop():
    model = _default_model()
    rng = np.random.default_rng(0)
    for _ in range(20):
        labels = neal3_sweep(np.array([0]), np.array([1.3]), model, rng)
        assert labels.tolist() == [0]


def test_neal3_two_site_probability_matches_exhaustive():
    model = _default_model()
    z = np.array([-1.0, 1.0])
    m_joint = cluster_log_marginal(z, model.base)
    m_split = cluster_log_marginal(z[:1], model.base) + cluster_log_marginal(z[1:], model.base)
    w_same = math.exp(eppf_log_prob([2], 1.0) + m_joint)
    w_split = math.exp(eppf_log_prob([1, 1], 1.0) + m_split)
    p_same = w_same / (w_same + w_split)

    rng = np.random.default_rng(1)
    labels = np.array([0, 1])
    hits = 0
    sweeps = 100_000
    for _ in range(sweeps):
        labels = neal3_sweep(labels, z, model, rng)
        hits += int(labels[0] == labels[1])
    assert abs(hits / sweeps - p_same) < 0.01


def test_neal3_absorbs_into_one_cluster_at_tiny_alpha():
    model = _default_model(alpha=1e-8)
    rng = np.random.default_rng(2)
    z = rng.normal(0.0, 1.5, size=10)
    labels = np.arange(10)
    trace = []
    for _ in range(300):
        labels = neal3_sweep(labels, z, model, rng)
        trace.append(int(labels.max()) + 1)
    assert trace[-1] == 1
    assert all(k == 1 for k in trace[-100:])


def test_neal2_mean_draws_center_on_prior_mean_for_flat_data():
    model = _default_model()
    rng = np.random.default_rng(3)
    z = np.zeros(8)
    labels = np.zeros(8, dtype=int)
    thetas = [(0.0, 2.0)]
    mus = []
    for _ in range(4000):
        labels, thetas = neal2_sweep(labels, thetas, z, model, rng)
        mus.extend(t[0] for t in thetas)
    mus = np.array(mus)
    assert abs(mus.mean()) < 3.0 * mus.std() / math.sqrt(mus.size)


def test_neal2_degenerate_theta_posterior_matches_rejection_oracle():
    # alpha ~ 0 pins the single-cluster partition, so successive unique-value
    # draws are iid from the exact truncated posterior
    z = np.array([0.3, -0.8, 1.1, 0.2])
    base = TruncatedNIGBase(mu0=0.0, lam=1.0, shape=3.0, rate=3.0, noise_var=1.5)
    model = MarginalGaussianModel(base=base, alpha=1e-12)
    rng = np.random.default_rng(4)
    labels = np.zeros(4, dtype=int)
    thetas = [(0.0, 2.0)]
    variances = []
    for _ in range(8000):
        labels, thetas = neal2_sweep(labels, thetas, z, model, rng)
        assert labels.max() == 0
        variances.append(thetas[0][1])

    # independent oracle: inline conjugate update, scipy rejection sampling
    n, s, ss = 4, z.sum(), (z**2).sum()
    lam_n = 1.0 + n
    a_n = 3.0 + 0.5 * n
    b_n = 3.0 + 0.5 * (ss - s * s / n) + n * (s / n) ** 2 / (2.0 * lam_n)
    oracle_rng = np.random.default_rng(99)
    ig = stats.invgamma(a_n, scale=b_n)
    oracle = []
    while len(oracle) < 8000:
        cand = ig.rvs(size=2000, random_state=oracle_rng)
        oracle.extend(cand[cand >= 1.5].tolist())
    assert stats.ks_2samp(np.array(variances), np.array(oracle[:8000])).pvalue > 0.01


def test_neal2_enforces_variance_floor_on_entry():
    model = _default_model(noise_var=1.0)
    with pytest.raises(ValueError):
        neal2_sweep(np.zeros(3, dtype=int), [(0.0, 0.5)], np.zeros(3), model, np.random.default_rng(0))


def test_neal2_rejects_mismatched_unique_values():
    model = _default_model()
    with pytest.raises(ValueError):
        neal2_sweep(np.zeros(3, dtype=int), [(0.0, 2.0), (1.0, 2.0)], np.zeros(3), model, np.random.default_rng(0))


def test_sweeps_reject_non_contiguous_labels():
    model = _default_model()
    with pytest.raises(ValueError):
        neal3_sweep(np.array([0, 2]), np.zeros(2), model, np.random.default_rng(0))


def test_posterior_sample_respects_floor():
    model = _default_model(noise_var=1.8)
    rng = np.random.default_rng(15)
    for _ in range(500):
        mu, total_var = model.posterior_sample(3, 0.5, 2.0, rng)
        assert total_var >= 1.8


def test_quadrature_nodes_weights_and_mass():
    base = TruncatedNIGBase(mu0=0.0, lam=1.0, shape=3.0, rate=3.0, noise_var=2.0)
    thetas, weights = base.quadrature_nodes()
    assert len(thetas) == 32
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert all(v > 0 for _, v in thetas)
    grid = np.linspace(-60, 60, 8001)
    dens = np.zeros_like(grid)
    for (mu, var), w in zip(thetas, weights):
        dens += w * np.exp(-0.5 * (grid - mu) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.slow
def test_neal2_and_neal3_cluster_count_posteriors_agree():
    # heavyweight cross-sampler consistency run at pinned settings
    rng = np.random.default_rng(314)
    comp = rng.integers(0, 3, size=50)
    means = np.array([-3.0, 0.0, 3.0])
    z = rng.normal(means[comp], math.sqrt(2.0))
    model = _default_model(noise_var=1.0)

    def count_pmf(sampler, seed):
        r = np.random.default_rng(seed)
        labels = np.zeros(50, dtype=int)
        thetas = [model.posterior_sample(50, float(z.sum()), float((z**2).sum()), r)]
        counts = {}
        for t in range(102_000):
            if sampler == "neal3":
                labels = neal3_sweep(labels, z, model, r)
            else:
                labels, thetas = neal2_sweep(labels, thetas, z, model, r)
            if t >= 2000:
                k = int(labels.max()) + 1
                counts[k] = counts.get(k, 0) + 1
        total = sum(counts.values())
        return {k: v / total for k, v in counts.items()}

    pmf3 = count_pmf("neal3", 11)
    pmf2 = count_pmf("neal2", 22)
    tv = 0.5 * sum(abs(pmf3.get(k, 0.0) - pmf2.get(k, 0.0)) for k in set(pmf3) | set(pmf2))
    assert tv < 0.05
