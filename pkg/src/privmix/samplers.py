"""Privacy-aware MCMC sweeps and single-chain orchestration.

Four samplers share this module.  The pseudo-marginal urn sampler keeps
auxiliary kernel replicates per observation and accepts allocation moves
with the ratio of unbiased channel-likelihood estimates; when the channel
satisfies epsilon-DP over its declared domain that ratio never drops
below exp(-epsilon).  The dependent-slice sampler instantiates a
truncated stick-breaking measure with deterministic slice bounds
xi_h = (1/2)^(h+1) and moves the latent confidential values by one
Metropolis step with the kernel as proposal, so its acceptance ratio is
a single channel-density ratio with the same lower bound.  The two
histogram-release samplers target the joint law of a dataset-level
release: the conditional one couples the slice machinery to the release
through the latent values only, the marginal one proposes (allocation,
latent value) pairs from the urn-times-kernel prior.

Sweeps mutate their state in place and also return it.  All randomness
flows through one generator argument, so a fixed seed fixes the chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import (
    GLOBAL_KIND,
    SCALAR_KIND,
    WAVELET_KIND,
    GaussianChannel,
    SanitizedDataset,
    SmoothedHistogramChannel,
    WaveletChannel,
)
from .errors import ConfigurationError
from .marginal_gaussian import MarginalGaussianModel, neal2_sweep, neal3_sweep
from .mixtures import (
    BetaKernel,
    GammaGammaBase,
    GaussianKernel,
    NIGBase,
    categorical_from_log_weights,
    mala_beta_params_step,
    nig_posterior,
    polya_urn_propose,
)

__all__ = [
    "DPMixtureModel",
    "AcceptanceTracker",
    "pseudo_marginal_estimate",
    "Neal5State",
    "neal5_init",
    "neal5_sweep",
    "SliceState",
    "slice_init",
    "slice_sweep",
    "GlobalState",
    "global_init",
    "global_conditional_sweep",
    "global_marginal_sweep",
    "ChainConfig",
    "check_compatibility",
    "run_chain",
    "slice_bound",
]

MALA_STEP = 0.05


@dataclass(frozen=True)
class DPMixtureModel:
    """Kernel-space mixture model: observation kernel, base measure over
    kernel parameters, and the (fixed) concentration."""

    kernel: object
    base: object
    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"concentration must be positive, got {self.alpha}")


class AcceptanceTracker:
    """Per-block Metropolis bookkeeping: proposal and acceptance counts,
    the smallest log ratio seen, and optionally every clipped ratio."""

    def __init__(self, keep_ratios=False):
        self.keep_ratios = keep_ratios
        self.blocks = {}

    def record(self, block, log_ratio, accepted):
        entry = self.blocks.get(block)
        if entry is None:
            entry = {"proposals": 0, "accepted": 0, "min_log_ratio": math.inf}
            if self.keep_ratios:
                entry["ratios"] = []
            self.blocks[block] = entry
        entry["proposals"] += 1
        entry["accepted"] += int(accepted)
        if log_ratio < entry["min_log_ratio"]:
            entry["min_log_ratio"] = log_ratio
        if self.keep_ratios:
            entry["ratios"].append(math.exp(min(log_ratio, 0.0)))

    def rate(self, block):
        entry = self.blocks[block]
        return entry["accepted"] / entry["proposals"]

    def min_ratio(self, block):
        return math.exp(self.blocks[block]["min_log_ratio"])

    def median_ratio(self, block):
        if not self.keep_ratios:
            raise ValueError("tracker was not asked to keep ratios")
        return float(np.median(self.blocks[block]["ratios"]))

    def counts(self):
        return {
            block: (entry["accepted"], entry["proposals"])
            for block, entry in self.blocks.items()
        }


# ---------------------------------------------------------------------------
# Pseudo-marginal urn sampler
# ---------------------------------------------------------------------------


def _log_mean_channel_density(z_i, ytilde, channel):
    logs = [channel.log_density(z_i, y) for y in ytilde]
    m = max(logs)
    if m == -math.inf:
        return -math.inf
    return m + math.log(math.fsum(math.exp(l - m) for l in logs) / len(logs))


def pseudo_marginal_estimate(z_i, theta, channel, kernel, m, rng):
    """Unbiased channel-likelihood estimate at one observation.

    Draws m kernel replicates from f(. | theta) and averages the channel
    density of z_i against them.  Returns (estimate, replicates).
    """
    if m < 1:
        raise ValueError(f"need at least one auxiliary replicate, got {m}")
    ytilde = np.atleast_1d(kernel.sample(theta, rng, size=m))
    return math.exp(_log_mean_channel_density(z_i, ytilde, channel)), ytilde


class Neal5State:
    """Chain state for the pseudo-marginal urn sampler: allocations,
    unique kernel parameters, per-observation auxiliary replicates, and
    the cached log channel-likelihood estimates."""

    def __init__(self, labels, thetas, aux, log_g, m):
        self.labels = np.asarray(labels, dtype=np.int64)
        self.thetas = list(thetas)
        self.aux = aux  # (n, m) kernel-space replicates
        self.log_g = np.asarray(log_g, dtype=float)
        self.m = m

    def cluster_sizes(self):
        return np.bincount(self.labels, minlength=len(self.thetas)).tolist()

    def check_coherence(self, z_values, channel, tol=1e-12):
        """Recompute every cached estimate from the stored replicates."""
        for i in range(len(self.labels)):
            fresh = _log_mean_channel_density(_row(z_values, i), self.aux[i], channel)
            if abs(fresh - self.log_g[i]) > tol:
                raise AssertionError(f"cached estimate {i} drifted: {self.log_g[i]} vs {fresh}")


def _row(values, i):
    # per-record sanitized value: scalar for scalar channels, a
    # coefficient vector for the wavelet channel
    return values[i]


def neal5_init(data, model, m, rng):
    z = data.values
    n = len(z)
    theta0 = model.base.sample(rng)
    labels = np.zeros(n, dtype=np.int64)
    aux = np.empty((n, m), dtype=float)
    log_g = np.empty(n, dtype=float)
    for i in range(n):
        aux[i] = np.atleast_1d(model.kernel.sample(theta0, rng, size=m))
        log_g[i] = _log_mean_channel_density(_row(z, i), aux[i], data.channel)
    return Neal5State(labels, [theta0], aux, log_g, m)


def neal5_sweep(state, data, model, rng, tracker=None):
    """One pass of urn proposals with pseudo-marginal acceptance, then the
    unique-value updates against all auxiliary replicates.

    A rejected proposal reverts allocation, replicates, and cached
    estimate together; a fresh cluster draws its parameter from the base
    and keeps it only on acceptance.
    """
    z = data.values
    channel = data.channel
    kernel = model.kernel
    labels = state.labels
    thetas = state.thetas
    sizes = state.cluster_sizes()
    m = state.m
    for i in range(len(labels)):
        h0 = labels[i]
        sizes[h0] -= 1
        cand = polya_urn_propose(sizes, model.alpha, rng)
        created = cand == len(thetas)
        if created:
            thetas.append(model.base.sample(rng))
        ytilde = np.atleast_1d(kernel.sample(thetas[cand], rng, size=m))
        log_g_new = _log_mean_channel_density(_row(z, i), ytilde, channel)
        log_ratio = log_g_new - state.log_g[i]
        accepted = math.log(rng.random()) < log_ratio
        if tracker is not None:
            tracker.record("allocation", log_ratio, accepted)
        if accepted:
            labels[i] = cand
            state.aux[i] = ytilde
            state.log_g[i] = log_g_new
            if created:
                sizes.append(1)
            else:
                sizes[cand] += 1
            if sizes[h0] == 0:
                _drop_neal5_cluster(h0, labels, sizes, thetas)
        else:
            if created:
                thetas.pop()
            sizes[h0] += 1
    _update_thetas_from_values(
        thetas, labels, state.aux.reshape(len(labels), -1), model, rng, tracker
    )
    return state


def _drop_neal5_cluster(h, labels, sizes, thetas):
    last = len(thetas) - 1
    if h != last:
        thetas[h] = thetas[last]
        sizes[h] = sizes[last]
        labels[labels == last] = h
    thetas.pop()
    sizes.pop()


def _update_thetas_from_values(thetas, labels, value_rows, model, rng, tracker):
    # each cluster's parameter targets base(theta) * prod f(values | theta)
    # over every member row; conjugate draw for the Gaussian/NIG pair,
    # Langevin step for Beta shapes
    kernel = model.kernel
    base = model.base
    conjugate = isinstance(kernel, GaussianKernel) and isinstance(base, NIGBase)
    for h in range(len(thetas)):
        rows = value_rows[labels == h]
        values = rows.reshape(-1)
        if values.size == 0:
            thetas[h] = base.sample(rng)
            continue
        if conjugate:
            post = nig_posterior(base, values.size, float(values.sum()), float((values**2).sum()))
            thetas[h] = post.sample(rng)
        else:
            thetas[h], accepted = mala_beta_params_step(values, thetas[h], rng, step=MALA_STEP)
            if tracker is not None:
                tracker.record("atoms", 0.0 if accepted else -math.inf, accepted)


# ---------------------------------------------------------------------------
# Dependent-slice sampler
# ---------------------------------------------------------------------------


def slice_bound(h):
    """Deterministic slice bound xi_h = (1/2)^(h+1) for atom index h."""
    return 0.5 ** (h + 1)


def _stick_weights(sticks):
    w = np.empty(len(sticks))
    rest = 1.0
    for h, nu in enumerate(sticks):
        w[h] = nu * rest
        rest *= 1.0 - nu
    return w


class SliceState:
    """Truncated stick-breaking measure (sticks and atoms), slice
    variables, allocations, and the latent confidential values."""

    def __init__(self, sticks, thetas, u, labels, y):
        self.sticks = list(sticks)
        self.thetas = list(thetas)
        self.u = np.asarray(u, dtype=float)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.y = np.asarray(y, dtype=float)

    def weights(self):
        return _stick_weights(self.sticks)

    def check_admissible(self):
        for i, c in enumerate(self.labels):
            if not self.u[i] < slice_bound(c):
                raise AssertionError(f"slice variable {i} exceeds its bound")


def _initial_latent(data, kernel, rng):
    channel = data.channel
    n = len(data.values)
    if data.kind == WAVELET_KIND:
        # finest-level coefficient with the largest magnitude locates the
        # observation up to a half-interval; the sign picks the half
        level = channel.max_level
        fine = data.values[:, 2**level - 1 :]
        y = np.empty(n)
        for i in range(n):
            k = int(np.argmax(np.abs(fine[i])))
            width = 0.5 ** (level + 1)
            left = k * 2.0 * width
            if fine[i][k] < 0:
                left += width
            y[i] = channel.from_unit(rng.uniform(left, left + width))
    elif data.kind == GLOBAL_KIND:
        lo, hi = channel.domain
        y = rng.uniform(lo, hi, size=n)
    else:
        lo, hi = channel.domain
        y = np.clip(data.values, lo, hi)
    if kernel.support is not None:
        lo, hi = kernel.support
        margin = 1e-6 * (hi - lo)
        y = np.clip(y, lo + margin, hi - margin)
    return y


def slice_init(data, model, rng):
    n = len(data.values)
    y = _initial_latent(data, model.kernel, rng)
    labels = np.zeros(n, dtype=np.int64)
    sticks = [rng.beta(1.0 + n, model.alpha)]
    thetas = [model.base.sample(rng)]
    u = rng.uniform(0.0, slice_bound(0), size=n)
    return SliceState(sticks, thetas, u, labels, y)


def _update_slice_measure(state, model, rng, tracker):
    """Slice variables, stick posteriors, atom conditionals, allocations.

    Instantiates atoms until every slice variable admits its full set of
    candidate indices; empty atoms redraw from the base exactly.
    """
    n = len(state.labels)
    labels = state.labels
    # slice variables under the current allocation
    bounds = np.array([slice_bound(c) for c in labels])
    state.u = rng.uniform(0.0, bounds)
    u_min = float(state.u.min())
    needed = 0
    while 0.5 ** (needed + 1) > u_min:
        needed += 1
    needed = max(needed, int(labels.max()) + 1)
    while len(state.sticks) < needed:
        state.sticks.append(rng.beta(1.0, model.alpha))
        state.thetas.append(model.base.sample(rng))
    del state.sticks[needed:]
    del state.thetas[needed:]
    counts = np.bincount(labels, minlength=needed)
    tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0]])
    for h in range(needed):
        state.sticks[h] = rng.beta(1.0 + counts[h], model.alpha + tail[h])
    _update_atoms_from_members(state, model, rng, tracker)
    # allocations among admissible atoms, weighted by w_h / xi_h
    w = state.weights()
    log_w_over_xi = [
        math.log(w[h]) - math.log(slice_bound(h)) if w[h] > 0 else -math.inf
        for h in range(needed)
    ]
    kernel = model.kernel
    for i in range(n):
        u_i = state.u[i]
        logw = []
        cands = []
        for h in range(needed):
            if u_i < slice_bound(h):
                cands.append(h)
                logw.append(log_w_over_xi[h] + kernel.log_density(state.thetas[h], state.y[i]))
        labels[i] = cands[categorical_from_log_weights(logw, rng)]


def _update_atoms_from_members(state, model, rng, tracker):
    kernel = model.kernel
    base = model.base
    conjugate = isinstance(kernel, GaussianKernel) and isinstance(base, NIGBase)
    for h in range(len(state.thetas)):
        members = state.y[state.labels == h]
        if members.size == 0:
            state.thetas[h] = base.sample(rng)
        elif conjugate:
            post = nig_posterior(
                base, members.size, float(members.sum()), float((members**2).sum())
            )
            state.thetas[h] = post.sample(rng)
        else:
            state.thetas[h], accepted = mala_beta_params_step(
                members, state.thetas[h], rng, step=MALA_STEP
            )
            if tracker is not None:
                tracker.record("atoms", 0.0 if accepted else -math.inf, accepted)


def slice_sweep(state, data, model, rng, tracker=None):
    """One slice-sampler pass: measure and allocations, then one
    Metropolis move per latent value with the kernel as proposal, accepted
    on the channel-density ratio alone."""
    _update_slice_measure(state, model, rng, tracker)
    z = data.values
    channel = data.channel
    kernel = model.kernel
    for i in range(len(state.labels)):
        theta = state.thetas[state.labels[i]]
        y_new = float(kernel.sample(theta, rng))
        log_ratio = channel.log_density(_row(z, i), y_new) - channel.log_density(
            _row(z, i), state.y[i]
        )
        accepted = math.log(rng.random()) < log_ratio
        if tracker is not None:
            tracker.record("latent", log_ratio, accepted)
        if accepted:
            state.y[i] = y_new
    return state


# ---------------------------------------------------------------------------
# Histogram-release samplers
# ---------------------------------------------------------------------------


class GlobalState:
    """State for the dataset-level release samplers: allocations, atoms,
    latent values, and cached per-bin counts of the latent values.  The
    conditional variant additionally carries sticks and slice variables."""

    def __init__(self, labels, thetas, y, counts, sticks=None, u=None):
        self.labels = np.asarray(labels, dtype=np.int64)
        self.thetas = list(thetas)
        self.y = np.asarray(y, dtype=float)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.sticks = list(sticks) if sticks is not None else None
        self.u = np.asarray(u, dtype=float) if u is not None else None

    def weights(self):
        return _stick_weights(self.sticks)

    def check_counts(self, channel):
        fresh = _bin_counts(self.y, channel)
        if not np.array_equal(fresh, self.counts):
            raise AssertionError("cached bin counts drifted from the latent values")


def _bin_counts(y, channel):
    unit = (np.asarray(y) - channel.domain[0]) / (channel.domain[1] - channel.domain[0])
    idx = np.minimum((unit * channel.n_bins).astype(np.int64), channel.n_bins - 1)
    return np.bincount(idx, minlength=channel.n_bins)


def global_init(data, model, latent_size, rng, conditional):
    if not isinstance(data.channel, SmoothedHistogramChannel):
        raise ConfigurationError("dataset-level samplers need the histogram channel")
    if latent_size is None or latent_size < 1:
        raise ConfigurationError("dataset-level samplers need the confidential sample size")
    channel = data.channel
    lo, hi = channel.domain
    y = rng.uniform(lo, hi, size=latent_size)
    if model.kernel.support is not None:
        klo, khi = model.kernel.support
        margin = 1e-6 * (khi - klo)
        y = np.clip(y, klo + margin, khi - margin)
    labels = np.zeros(latent_size, dtype=np.int64)
    thetas = [model.base.sample(rng)]
    counts = _bin_counts(y, channel)
    if conditional:
        sticks = [rng.beta(1.0 + latent_size, model.alpha)]
        u = rng.uniform(0.0, slice_bound(0), size=latent_size)
        return GlobalState(labels, thetas, y, counts, sticks=sticks, u=u)
    return GlobalState(labels, thetas, y, counts)


def _release_bin_counts(w, channel):
    return _bin_counts(w, channel)


def _log_release_density_full(w_counts, y_counts, n, channel):
    dens = channel.bin_densities(y_counts, n)
    return float(np.dot(w_counts, np.log(dens)))


def _move_log_ratio(w_counts, y_counts, n, channel, j_old, j_new):
    # moving one latent value touches at most two bins of the smoothed
    # density; everything else cancels in the ratio
    if j_old == j_new:
        return 0.0
    scale = (1.0 - channel.smoothing) * channel.n_bins / n
    d_old = scale * y_counts[j_old] + channel.smoothing
    d_new = scale * y_counts[j_new] + channel.smoothing
    out = 0.0
    if w_counts[j_old]:
        out += w_counts[j_old] * (math.log(d_old - scale) - math.log(d_old))
    if w_counts[j_new]:
        out += w_counts[j_new] * (math.log(d_new + scale) - math.log(d_new))
    return out


def _bin_of(value, channel):
    lo, hi = channel.domain
    unit = (value - lo) / (hi - lo)
    return min(int(unit * channel.n_bins), channel.n_bins - 1)


def global_conditional_sweep(state, data, model, rng, tracker=None):
    """Latent-value Metropolis moves against the release likelihood with
    incremental bin updates, then the slice-measure machinery ignoring
    the release."""
    channel = data.channel
    w_counts = _release_bin_counts(data.values, channel)
    n = len(state.y)
    kernel = model.kernel
    for i in range(n):
        theta = state.thetas[state.labels[i]]
        y_new = float(kernel.sample(theta, rng))
        j_old = _bin_of(state.y[i], channel)
        j_new = _bin_of(y_new, channel)
        log_ratio = _move_log_ratio(w_counts, state.counts, n, channel, j_old, j_new)
        accepted = math.log(rng.random()) < log_ratio
        if tracker is not None:
            tracker.record("latent", log_ratio, accepted)
        if accepted:
            state.y[i] = y_new
            state.counts[j_old] -= 1
            state.counts[j_new] += 1
    # the measure update is the slice sampler's, with the release playing
    # no role given the latent values
    proxy = SliceState(state.sticks, state.thetas, state.u, state.labels, state.y)
    _update_slice_measure(proxy, model, rng, tracker)
    state.sticks = proxy.sticks
    state.thetas = proxy.thetas
    state.u = proxy.u
    state.labels = proxy.labels
    return state


def global_marginal_sweep(state, data, model, rng, tracker=None):
    """Joint (allocation, latent value) proposals from the urn-times-
    kernel prior, accepted on the release-likelihood ratio; atoms then
    refresh from their standard conditionals given the latent values."""
    channel = data.channel
    w_counts = _release_bin_counts(data.values, channel)
    n = len(state.y)
    kernel = model.kernel
    labels = state.labels
    thetas = state.thetas
    sizes = np.bincount(labels, minlength=len(thetas)).tolist()
    for i in range(n):
        h0 = labels[i]
        sizes[h0] -= 1
        cand = polya_urn_propose(sizes, model.alpha, rng)
        created = cand == len(thetas)
        if created:
            thetas.append(model.base.sample(rng))
        y_new = float(kernel.sample(thetas[cand], rng))
        j_old = _bin_of(state.y[i], channel)
        j_new = _bin_of(y_new, channel)
        log_ratio = _move_log_ratio(w_counts, state.counts, n, channel, j_old, j_new)
        accepted = math.log(rng.random()) < log_ratio
        if tracker is not None:
            tracker.record("joint", log_ratio, accepted)
        if accepted:
            labels[i] = cand
            state.y[i] = y_new
            state.counts[j_old] -= 1
            state.counts[j_new] += 1
            if created:
                sizes.append(1)
            else:
                sizes[cand] += 1
            if sizes[h0] == 0:
                _drop_neal5_cluster(h0, labels, sizes, thetas)
        else:
            if created:
                thetas.pop()
            sizes[h0] += 1
    _update_thetas_from_values(thetas, labels, state.y.reshape(n, 1), model, rng, tracker)
    return state


# ---------------------------------------------------------------------------
# Chain orchestration
# ---------------------------------------------------------------------------

_SAMPLERS = ("neal5", "slice", "neal2", "neal3", "global-conditional", "global-marginal")
_CONDITIONAL = {"slice", "global-conditional"}


@dataclass(frozen=True)
class ChainConfig:
    """Everything one chain needs beyond the sanitized data: sampler
    name, model, iteration counts, auxiliary-replicate count, recording
    stride, and (dataset-level channels only) the confidential size."""

    sampler: str
    model: object
    iterations: int
    burn_in: int
    record_stride: int = 10
    m_aux: int = 1
    latent_size: int | None = None
    grid_points: int = 200

    def __post_init__(self):
        if self.sampler not in _SAMPLERS:
            raise ConfigurationError(f"unknown sampler {self.sampler!r}; choose from {_SAMPLERS}")
        if self.iterations <= 0 or self.burn_in < 0 or self.iterations < self.burn_in:
            raise ConfigurationError(
                f"need iterations >= burn_in >= 0, got {self.iterations}, {self.burn_in}"
            )
        if self.record_stride < 1 or self.m_aux < 1:
            raise ConfigurationError("record_stride and m_aux must be positive")


def check_compatibility(sampler, channel, model):
    """Reject sampler/channel/model triples outside the supported matrix."""
    if sampler not in _SAMPLERS:
        raise ConfigurationError(f"unknown sampler {sampler!r}; choose from {_SAMPLERS}")
    marginal_model = isinstance(model, MarginalGaussianModel)
    if sampler in ("neal2", "neal3"):
        if not isinstance(channel, GaussianChannel):
            raise ConfigurationError(
                f"{sampler} needs the Gaussian channel's conjugate structure, "
                f"not {type(channel).__name__} (see the compatibility matrix)"
            )
        if not marginal_model:
            raise ConfigurationError(
                f"{sampler} needs the marginalized Gaussian model (compatibility matrix)"
            )
        if abs(model.noise_var - channel.noise_var) > 1e-12 * max(1.0, channel.noise_var):
            raise ConfigurationError(
                "model truncation floor must equal the channel noise variance"
            )
        return
    if marginal_model:
        raise ConfigurationError(
            f"{sampler} works in kernel space and cannot use the marginalized "
            "Gaussian model (compatibility matrix)"
        )
    kernel = model.kernel
    if sampler in ("global-conditional", "global-marginal"):
        if not isinstance(channel, SmoothedHistogramChannel):
            raise ConfigurationError(
                f"{sampler} needs the histogram channel, not {type(channel).__name__} "
                "(compatibility matrix)"
            )
        if kernel.support is None or kernel.support[0] < channel.domain[0] or kernel.support[1] > channel.domain[1]:
            raise ConfigurationError(
                "dataset-level samplers need a kernel supported inside the "
                "channel domain (compatibility matrix)"
            )
        return
    if isinstance(channel, SmoothedHistogramChannel):
        raise ConfigurationError(
            f"{sampler} is a per-record sampler and cannot target the histogram "
            "release (compatibility matrix)"
        )
    if isinstance(channel, WaveletChannel) and kernel.support is None:
        raise ConfigurationError(
            "the wavelet channel needs a kernel supported inside its domain "
            "(compatibility matrix)"
        )


def _default_grid(data, model, config):
    if isinstance(model, MarginalGaussianModel):
        lo = float(np.min(data.values))
        hi = float(np.max(data.values))
        pad = 0.1 * (hi - lo)
        return np.linspace(lo - pad, hi + pad, config.grid_points)
    kernel = model.kernel
    if kernel.support is not None:
        lo, hi = kernel.support
        # bounded-support kernel densities can diverge at the endpoints
        margin = 1e-3 * (hi - lo)
        return np.linspace(lo + margin, hi - margin, config.grid_points)
    lo = float(np.min(data.values))
    hi = float(np.max(data.values))
    pad = 0.1 * (hi - lo)
    return np.linspace(lo - pad, hi + pad, config.grid_points)


def _density_row_conditional(state, model, grid, remainder_density):
    w = state.weights()
    row = (1.0 - w.sum()) * remainder_density
    for h, theta in enumerate(state.thetas):
        if w[h] > 0:
            row = row + w[h] * model.kernel.density_grid(theta, grid)
    return row


def _density_row_urn(labels, thetas, model, grid, remainder_density, alpha):
    n = len(labels)
    sizes = np.bincount(labels, minlength=len(thetas))
    row = (alpha / (n + alpha)) * remainder_density
    for h, theta in enumerate(thetas):
        if sizes[h] > 0:
            row = row + (sizes[h] / (n + alpha)) * model.kernel.density_grid(theta, grid)
    return row


def _density_row_marginal_model(labels, z, model, grid, remainder_density, rng):
    # fresh unique-value draws from the exact cluster posteriors turn the
    # collapsed state into a kernel mixture over the latent scale
    n = len(labels)
    k = int(labels.max()) + 1
    alpha = model.alpha
    row = (alpha / (n + alpha)) * remainder_density
    noise = model.noise_var
    for h in range(k):
        members = z[labels == h]
        mu, total_var = model.posterior_sample(
            members.size, float(members.sum()), float((members**2).sum()), rng
        )
        latent_var = max(total_var - noise, 1e-12)
        dens = np.exp(-0.5 * (grid - mu) ** 2 / latent_var) / math.sqrt(
            2.0 * math.pi * latent_var
        )
        row = row + (members.size / (n + alpha)) * dens
    return row


def _remainder_density(model, grid):
    """Base-measure expectation of the kernel density on the grid."""
    if isinstance(model, MarginalGaussianModel):
        thetas, weights = model.base.quadrature_nodes()
        out = np.zeros_like(grid)
        for (mu, var), w in zip(thetas, weights):
            out += w * np.exp(-0.5 * (grid - mu) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
        return out
    from .mixtures import prior_predictive_density

    return prior_predictive_density(model.kernel, model.base, grid)


def run_chain(config, data, rng):
    """Run one chain end to end and summarize it.

    Validates the sampler/channel/model triple, executes burn-in plus
    retained iterations, and records the cluster-count trace, acceptance
    counts, periodic density-grid rows, and allocation samples on the
    recording stride.  All randomness comes from the one generator, so a
    fixed seed reproduces the summary exactly (wall time aside).
    """
    import time

    from .diagnostics import RunSummary, density_estimate, point_estimate_partition

    model = config.model
    check_compatibility(config.sampler, data.channel, model)
    sampler = config.sampler
    tracker = AcceptanceTracker()
    grid = _default_grid(data, model, config)
    remainder = _remainder_density(model, grid)
    z = np.asarray(data.values, dtype=float)

    if sampler == "neal5":
        state = neal5_init(data, model, config.m_aux, rng)

        def step():
            neal5_sweep(state, data, model, rng, tracker)

        def k_now():
            return len(state.thetas)

        def row():
            return _density_row_urn(state.labels, state.thetas, model, grid, remainder, model.alpha)

        def labels_now():
            return state.labels

    elif sampler == "slice":
        state = slice_init(data, model, rng)

        def step():
            slice_sweep(state, data, model, rng, tracker)

        def k_now():
            return len(np.unique(state.labels))

        def row():
            return _density_row_conditional(state, model, grid, remainder)

        def labels_now():
            return state.labels

    elif sampler == "global-conditional":
        state = global_init(data, model, config.latent_size, rng, conditional=True)

        def step():
            global_conditional_sweep(state, data, model, rng, tracker)

        def k_now():
            return len(np.unique(state.labels))

        def row():
            return _density_row_conditional(state, model, grid, remainder)

        def labels_now():
            return state.labels

    elif sampler == "global-marginal":
        state = global_init(data, model, config.latent_size, rng, conditional=False)

        def step():
            global_marginal_sweep(state, data, model, rng, tracker)

        def k_now():
            return len(state.thetas)

        def row():
            return _density_row_urn(state.labels, state.thetas, model, grid, remainder, model.alpha)

        def labels_now():
            return state.labels

    elif sampler == "neal3":
        chain_labels = np.zeros(len(z), dtype=np.int64)

        def step():
            nonlocal chain_labels
            chain_labels = neal3_sweep(chain_labels, z, model, rng)

        def k_now():
            return int(chain_labels.max()) + 1

        def row():
            return _density_row_marginal_model(chain_labels, z, model, grid, remainder, rng)

        def labels_now():
            return chain_labels

    else:  # neal2
        chain_labels = np.zeros(len(z), dtype=np.int64)
        chain_thetas = [
            model.posterior_sample(len(z), float(z.sum()), float((z**2).sum()), rng)
        ]

        def step():
            nonlocal chain_labels, chain_thetas
            chain_labels, chain_thetas = neal2_sweep(chain_labels, chain_thetas, z, model, rng)

        def k_now():
            return int(chain_labels.max()) + 1

        def row():
            return _density_row_marginal_model(chain_labels, z, model, grid, remainder, rng)

        def labels_now():
            return chain_labels

    cluster_counts = []
    density_rows = []
    allocation_samples = []
    started = time.perf_counter()
    retained = 0
    for t in range(config.iterations):
        step()
        if t >= config.burn_in:
            cluster_counts.append(k_now())
            if retained % config.record_stride == 0:
                density_rows.append(row())
                allocation_samples.append(np.array(labels_now(), dtype=np.int64))
            retained += 1
    seconds = time.perf_counter() - started

    conditional = sampler in _CONDITIONAL
    density = None
    partition = None
    samples = None
    if density_rows:
        density = density_estimate(np.asarray(density_rows), grid, conditional=conditional)
        samples = np.asarray(allocation_samples)
        partition = point_estimate_partition(samples)
    return RunSummary(
        cluster_counts=np.asarray(cluster_counts, dtype=np.int64),
        acceptance=tracker.counts(),
        density=density,
        partition=partition,
        allocation_samples=samples,
        empty=retained == 0,
        seconds=seconds,
    )
