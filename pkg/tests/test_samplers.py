"""Tests for the privacy-aware samplers and chain orchestration.

Heavier distributional checks (exact small-n posteriors, cross-sampler
density agreement) live in the acceptance suite; this file covers the
mechanics: unbiasedness of the channel-likelihood estimate, cache
coherence, slice admissibility, incremental release-likelihood updates,
prior recovery, the compatibility matrix, and deterministic orchestration.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from privmix.channels import (
    GaussianChannel,
    LaplaceChannel,
    SanitizedDataset,
    SmoothedHistogramChannel,
    WaveletChannel,
    solve_delta,
)
from privmix.diagnostics import ess
from privmix.errors import ConfigurationError
from privmix.marginal_gaussian import MarginalGaussianModel, TruncatedNIGBase, neal3_sweep
from privmix.mixtures import BetaKernel, GammaGammaBase, GaussianKernel, NIGBase, eppf_log_prob
from privmix.samplers import (
    AcceptanceTracker,
    ChainConfig,
    DPMixtureModel,
    check_compatibility,
    global_conditional_sweep,
    global_init,
    global_marginal_sweep,
    neal5_init,
    neal5_sweep,
    pseudo_marginal_estimate,
    run_chain,
    slice_bound,
    slice_init,
    slice_sweep,
)
from privmix.samplers import _log_release_density_full, _move_log_ratio


def _beta_model(alpha=1.0):
    return DPMixtureModel(kernel=BetaKernel(), base=GammaGammaBase(), alpha=alpha)


def _gauss_model(alpha=1.0, base=None):
    return DPMixtureModel(kernel=GaussianKernel(), base=base or NIGBase(0.0, 1.0, 3.0, 3.0), alpha=alpha)


def _laplace_beta_data(n=30, epsilon=2.0, seed=0):
    rng = np.random.default_rng(seed)
    chan = LaplaceChannel(epsilon=epsilon, domain=(0.0, 1.0))
    return chan.sanitize(rng.beta(5.0, 5.0, size=n), rng)


# ---------------------------------------------------------------------------
# pseudo-marginal estimate
# ---------------------------------------------------------------------------


def test_pseudo_marginal_single_replicate_is_exact():
    chan = LaplaceChannel(epsilon=1.0, domain=(0.0, 1.0))
    rng = np.random.default_rng(0)
    g, ytilde = pseudo_marginal_estimate(0.4, (5.0, 5.0), chan, BetaKernel(), 1, rng)
    assert ytilde.shape == (1,)
    assert g == pytest.approx(math.exp(chan.log_density(0.4, float(ytilde[0]))), rel=1e-12)


def test_pseudo_marginal_rejects_zero_replicates():
    chan = LaplaceChannel(epsilon=1.0, domain=(0.0, 1.0))
    with pytest.raises(ValueError):
        pseudo_marginal_estimate(0.4, (5.0, 5.0), chan, BetaKernel(), 0, np.random.default_rng(0))


def test_pseudo_marginal_unbiased_gaussian_closed_form():
    # channel noise 1 on a (0,1) kernel: the true likelihood is N(z | 0, 2)
    chan = GaussianChannel(noise_var=1.0, domain=(-30.0, 30.0))
    kern = GaussianKernel()
    rng = np.random.default_rng(1)
    z = 0.7
    draws = np.array(
        [pseudo_marginal_estimate(z, (0.0, 1.0), chan, kern, 1, rng)[0] for _ in range(100_000)]
    )
    truth = stats.norm.pdf(z, 0.0, math.sqrt(2.0))
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - truth) < 3.0 * se


def test_pseudo_marginal_unbiased_laplace_beta_quadrature():
    chan = LaplaceChannel(epsilon=2.0, domain=(0.0, 1.0))
    kern = BetaKernel()
    z, theta = 0.35, (5.0, 3.0)

    def integrand(y):
        return math.exp(chan.log_density(z, y) + kern.log_density(theta, y))

    truth, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0, epsrel=1e-10, limit=200)
    rng = np.random.default_rng(2)
    draws = np.array(
        [pseudo_marginal_estimate(z, theta, chan, kern, 1, rng)[0] for _ in range(100_000)]
    )
    assert abs(draws.mean() - truth) < 0.01 * truth


# ---------------------------------------------------------------------------
# pseudo-marginal urn sweep
# ---------------------------------------------------------------------------


def test_neal5_cached_estimates_stay_coherent():
    data = _laplace_beta_data()
    model = _beta_model()
    rng = np.random.default_rng(3)
    state = neal5_init(data, model, 2, rng)
    for _ in range(50):
        neal5_sweep(state, data, model, rng)
    state.check_coherence(data.values, data.channel)


def test_neal5_acceptance_ratio_never_below_privacy_bound():
    epsilon = 2.0
    data = _laplace_beta_data(n=25, epsilon=epsilon, seed=4)
    model = _beta_model()
    rng = np.random.default_rng(5)
    state = neal5_init(data, model, 1, rng)
    tracker = AcceptanceTracker()
    for _ in range(800):
        neal5_sweep(state, data, model, rng, tracker)
    assert tracker.blocks["allocation"]["proposals"] == 800 * 25
    assert tracker.min_ratio("allocation") >= math.exp(-epsilon)


def test_neal5_single_observation_targets_exact_posterior():
    # n=1: the theta chain targets the convolved-likelihood posterior;
    # compare its mean of mu against direct 2-D quadrature
    eta2 = 1.0
    z = 1.4
    mu0, lam, a, b = 0.0, 1.0, 3.0, 3.0
    chan = GaussianChannel(noise_var=eta2, domain=(-50.0, 50.0))
    data = SanitizedDataset(kind="scalar-per-record", values=np.array([z]), channel=chan)
    model = _gauss_model(base=NIGBase(mu0, lam, a, b))

    def moment(power):
        def outer(s2):
            def inner(mu):
                like = stats.norm.pdf(z, mu, math.sqrt(s2 + eta2))
                return mu**power * like * stats.norm.pdf(mu, mu0, math.sqrt(s2 / lam))

            val, _ = integrate.quad(inner, -np.inf, np.inf, epsabs=0, epsrel=1e-10, limit=200)
            return val * stats.invgamma(a, scale=b).pdf(s2)

        val, _ = integrate.quad(outer, 0.0, np.inf, epsabs=0, epsrel=1e-9, limit=200)
        return val

    truth = moment(1) / moment(0)
    rng = np.random.default_rng(6)
    state = neal5_init(data, model, 1, rng)
    trace = []
    for _ in range(30_000):
        neal5_sweep(state, data, model, rng)
        trace.append(state.thetas[0][0])
    trace = np.array(trace)
    se = trace.std(ddof=1) / math.sqrt(ess(trace))
    assert abs(trace.mean() - truth) < 3.0 * se


@pytest.mark.slow
def test_neal5_small_noise_limit_matches_nonprivate_collapsed_gibbs():
    # nearly lossless Gaussian channel: the partition posterior should agree
    # with a plain collapsed Gibbs sampler run on the released values
    eta2 = 0.04
    rng = np.random.default_rng(7)
    comp = rng.integers(0, 2, size=30)
    y = rng.normal(np.where(comp == 0, -2.0, 2.0), 1.0)
    chan = GaussianChannel(noise_var=eta2, domain=(-50.0, 50.0))
    data = chan.sanitize(y, rng)
    base = NIGBase(0.0, 0.5, 2.0, 2.0)
    model = _gauss_model(base=base)

    crng = np.random.default_rng(8)
    state = neal5_init(data, model, 1, crng)
    counts_private = {}
    for t in range(100_000):
        neal5_sweep(state, data, model, crng)
        if t >= 2000:
            k = len(state.thetas)
            counts_private[k] = counts_private.get(k, 0) + 1

    # reference: collapsed Gibbs on z with the same base and no noise floor
    ref_model = MarginalGaussianModel(
        base=TruncatedNIGBase(0.0, 0.5, 2.0, 2.0, noise_var=0.0), alpha=1.0
    )
    rrng = np.random.default_rng(9)
    labels = np.zeros(30, dtype=int)
    counts_ref = {}
    for t in range(100_000):
        labels = neal3_sweep(labels, data.values, ref_model, rrng)
        if t >= 2000:
            k = int(labels.max()) + 1
            counts_ref[k] = counts_ref.get(k, 0) + 1

    np_total = sum(counts_private.values())
    nr_total = sum(counts_ref.values())
    tv = 0.5 * sum(
        abs(counts_private.get(k, 0) / np_total - counts_ref.get(k, 0) / nr_total)
        for k in set(counts_private) | set(counts_ref)
    )
    assert tv < 0.05


# ---------------------------------------------------------------------------
# slice sweep
# ---------------------------------------------------------------------------


def test_slice_bound_halves():
    assert slice_bound(0) == 0.5
    assert slice_bound(3) == 0.0625
    assert sum(slice_bound(h) for h in range(60)) == pytest.approx(1.0, abs=1e-15)


def test_slice_state_stays_admissible():
    data = _laplace_beta_data(seed=10)
    model = _beta_model()
    rng = np.random.default_rng(11)
    state = slice_init(data, model, rng)
    for _ in range(50):
        slice_sweep(state, data, model, rng)
        state.check_admissible()
        assert len(state.sticks) == len(state.thetas)
        # every admissible index for every site is instantiated
        u_min = state.u.min()
        assert slice_bound(len(state.sticks)) <= u_min


def test_slice_latent_acceptance_never_below_privacy_bound():
    epsilon = 2.0
    data = _laplace_beta_data(n=25, epsilon=epsilon, seed=12)
    model = _beta_model()
    rng = np.random.default_rng(13)
    state = slice_init(data, model, rng)
    tracker = AcceptanceTracker()
    for _ in range(800):
        slice_sweep(state, data, model, rng, tracker)
    assert tracker.min_ratio("latent") >= math.exp(-epsilon)


def test_slice_latent_acceptance_near_one_for_flat_channel():
    # epsilon 1e-3 makes the Laplace scale enormous; the channel density is
    # effectively flat over the kernel support and proposals always pass
    data = _laplace_beta_data(n=20, epsilon=1e-3, seed=14)
    model = _beta_model()
    rng = np.random.default_rng(15)
    state = slice_init(data, model, rng)
    tracker = AcceptanceTracker()
    for _ in range(200):
        slice_sweep(state, data, model, rng, tracker)
    assert tracker.rate("latent") > 0.999


def test_wavelet_initialization_lands_in_the_right_half_interval():
    # an effectively lossless wavelet channel: the initializer must place
    # each latent value inside the half-interval the finest coefficient signs
    level = 4
    chan = WaveletChannel(epsilon=1e6, max_level=level, domain=(0.0, 1.0))
    rng = np.random.default_rng(16)
    y = rng.uniform(0.05, 0.95, size=40)
    data = chan.sanitize(y, rng)
    model = _beta_model()
    state = slice_init(data, model, np.random.default_rng(17))
    width = 0.5 ** (level + 1)
    assert np.all(np.abs(state.y - y) <= width + 1e-9)


# ---------------------------------------------------------------------------
# histogram-release sweeps
# ---------------------------------------------------------------------------


def _histogram_setup(n=40, n_bins=8, release=30, epsilon=10.0, seed=20):
    rng = np.random.default_rng(seed)
    chan = SmoothedHistogramChannel(
        epsilon=epsilon,
        n_bins=n_bins,
        release_size=release,
        smoothing=solve_delta(n, n_bins, release, epsilon),
        domain=(0.0, 1.0),
    )
    data = chan.sanitize(rng.beta(5.0, 5.0, size=n), rng)
    return data, n


def test_incremental_release_likelihood_matches_full_recompute():
    data, n = _histogram_setup()
    chan = data.channel
    rng = np.random.default_rng(21)
    y = rng.uniform(0.0, 1.0, size=n)
    counts = np.bincount(
        np.minimum((y * chan.n_bins).astype(int), chan.n_bins - 1), minlength=chan.n_bins
    )
    w_counts = np.bincount(
        np.minimum((data.values * chan.n_bins).astype(int), chan.n_bins - 1),
        minlength=chan.n_bins,
    )
    current = _log_release_density_full(w_counts, counts, n, chan)
    for _ in range(10_000):
        i = rng.integers(n)
        y_new = rng.uniform()
        j_old = min(int(y[i] * chan.n_bins), chan.n_bins - 1)
        j_new = min(int(y_new * chan.n_bins), chan.n_bins - 1)
        delta = _move_log_ratio(w_counts, counts, n, chan, j_old, j_new)
        y[i] = y_new
        counts[j_old] -= 1
        counts[j_new] += 1
        current += delta
        full = _log_release_density_full(w_counts, counts, n, chan)
        assert abs(current - full) < 1e-10


def test_same_bin_move_has_unit_acceptance():
    data, n = _histogram_setup()
    chan = data.channel
    counts = np.zeros(chan.n_bins, dtype=int)
    counts[3] = n
    w_counts = np.ones(chan.n_bins, dtype=int)
    assert _move_log_ratio(w_counts, counts, n, chan, 2, 2) == 0.0


def test_empty_release_has_unit_acceptance():
    data, n = _histogram_setup()
    chan = data.channel
    counts = np.zeros(chan.n_bins, dtype=int)
    counts[0] = n
    w_counts = np.zeros(chan.n_bins, dtype=int)
    assert _move_log_ratio(w_counts, counts, n, chan, 0, 5) == 0.0


def test_global_states_keep_bin_counts_coherent():
    data, n = _histogram_setup(seed=22)
    model = _beta_model()
    for conditional, sweep in ((True, global_conditional_sweep), (False, global_marginal_sweep)):
        rng = np.random.default_rng(23)
        state = global_init(data, model, n, rng, conditional=conditional)
        for _ in range(100):
            sweep(state, data, model, rng)
        state.check_counts(data.channel)


def test_global_marginal_prior_recovery_at_full_smoothing():
    # smoothing -> 1 flattens the release likelihood; the chain must then
    # sample the urn prior, whose cluster-count law follows from the
    # partition probabilities summed over all 52 partitions of 5 items
    n = 5
    chan = SmoothedHistogramChannel(
        epsilon=1000.0, n_bins=4, release_size=20, smoothing=1.0 - 1e-9, domain=(0.0, 1.0)
    )
    rng = np.random.default_rng(24)
    data = chan.sanitize(rng.beta(2.0, 2.0, size=40), rng)
    model = _beta_model()

    def partitions(items):
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for part in partitions(rest):
            for i in range(len(part)):
                yield part[:i] + [[first] + part[i]] + part[i + 1 :]
            yield [[first]] + part

    prior_k = np.zeros(n + 1)
    for part in partitions(list(range(n))):
        prior_k[len(part)] += math.exp(eppf_log_prob([len(s) for s in part], 1.0))
    assert prior_k.sum() == pytest.approx(1.0, abs=1e-12)

    state = global_init(data, model, n, rng, conditional=False)
    freq = np.zeros(n + 1)
    for t in range(20_000):
        global_marginal_sweep(state, data, model, rng)
        if t >= 1000:
            freq[len(state.thetas)] += 1
    freq /= freq.sum()
    assert 0.5 * np.abs(freq - prior_k).sum() < 0.05


# ---------------------------------------------------------------------------
# compatibility matrix and orchestration
# ---------------------------------------------------------------------------


def test_compatibility_matrix_rejections():
    laplace = LaplaceChannel(epsilon=1.0, domain=(0.0, 1.0))
    gauss = GaussianChannel(noise_var=1.0, domain=(-10.0, 10.0))
    wavelet = WaveletChannel(epsilon=1.0, max_level=3, domain=(0.0, 1.0))
    hist = SmoothedHistogramChannel(
        epsilon=5.0, n_bins=4, release_size=10, smoothing=0.05, domain=(0.0, 1.0)
    )
    beta_model = _beta_model()
    gauss_model = _gauss_model()
    marg_model = MarginalGaussianModel(base=TruncatedNIGBase(noise_var=1.0, shape=3.0, rate=3.0))

    ok = [
        ("neal5", laplace, beta_model),
        ("slice", wavelet, beta_model),
        ("neal5", gauss, gauss_model),
        ("neal2", gauss, marg_model),
        ("neal3", gauss, marg_model),
        ("global-conditional", hist, beta_model),
        ("global-marginal", hist, beta_model),
    ]
    for sampler, channel, model in ok:
        check_compatibility(sampler, channel, model)

    bad = [
        ("neal2", laplace, marg_model),
        ("neal3", wavelet, marg_model),
        ("neal2", gauss, gauss_model),
        ("neal5", hist, beta_model),
        ("slice", hist, beta_model),
        ("global-marginal", laplace, beta_model),
        ("global-conditional", hist, gauss_model),
        ("slice", gauss, marg_model),
        ("nealX", gauss, gauss_model),
    ]
    for sampler, channel, model in bad:
        with pytest.raises(ConfigurationError):
            check_compatibility(sampler, channel, model)


def test_compatibility_requires_matching_noise_floor():
    gauss = GaussianChannel(noise_var=1.0, domain=(-10.0, 10.0))
    mismatched = MarginalGaussianModel(base=TruncatedNIGBase(noise_var=0.5, shape=3.0, rate=3.0))
    with pytest.raises(ConfigurationError):
        check_compatibility("neal3", gauss, mismatched)


def test_chain_config_validation():
    model = _beta_model()
    with pytest.raises(ConfigurationError):
        ChainConfig(sampler="bogus", model=model, iterations=10, burn_in=0)
    with pytest.raises(ConfigurationError):
        ChainConfig(sampler="neal5", model=model, iterations=5, burn_in=9)
    with pytest.raises(ConfigurationError):
        ChainConfig(sampler="neal5", model=model, iterations=5, burn_in=1, record_stride=0)


def test_run_chain_is_deterministic_given_seed():
    data = _laplace_beta_data(n=15, seed=30)
    model = _beta_model()
    cfg = ChainConfig(sampler="slice", model=model, iterations=200, burn_in=50, record_stride=5)
    a = run_chain(cfg, data, np.random.default_rng(42))
    b = run_chain(cfg, data, np.random.default_rng(42))
    assert np.array_equal(a.cluster_counts, b.cluster_counts)
    assert np.array_equal(a.density.mean, b.density.mean)
    assert np.array_equal(a.density.lower95, b.density.lower95)
    assert np.array_equal(a.partition, b.partition)
    assert a.acceptance == b.acceptance


def test_run_chain_flags_empty_sampling_phase():
    data = _laplace_beta_data(n=10, seed=31)
    model = _beta_model()
    cfg = ChainConfig(sampler="neal5", model=model, iterations=50, burn_in=50)
    summary = run_chain(cfg, data, np.random.default_rng(0))
    assert summary.empty
    assert summary.cluster_counts.size == 0
    assert summary.density is None and summary.partition is None


def test_run_chain_recording_shapes():
    data = _laplace_beta_data(n=12, seed=32)
    model = _beta_model()
    cfg = ChainConfig(sampler="neal5", model=model, iterations=230, burn_in=30, record_stride=7)
    summary = run_chain(cfg, data, np.random.default_rng(1))
    assert summary.cluster_counts.size == 200
    assert summary.allocation_samples.shape == (math.ceil(200 / 7), 12)
    assert summary.density.mean.size == cfg.grid_points
    assert summary.density.lower95 is None  # urn samplers carry no measure
    assert summary.partition.shape == (12,)


def test_acceptance_tracker_statistics():
    tracker = AcceptanceTracker(keep_ratios=True)
    for log_ratio, accepted in [(0.0, True), (-1.0, True), (-2.0, False), (0.5, True)]:
        tracker.record("blk", log_ratio, accepted)
    assert tracker.rate("blk") == 0.75
    assert tracker.min_ratio("blk") == pytest.approx(math.exp(-2.0))
    assert tracker.median_ratio("blk") == pytest.approx(
        float(np.median([1.0, math.exp(-1.0), math.exp(-2.0), 1.0]))
    )
