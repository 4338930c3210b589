"""Privacy channels: randomized mechanisms that turn confidential records
into releasable data, plus the evaluable densities samplers need.

Four mechanisms are provided.

* :class:`LaplaceChannel` adds Laplace noise with scale ``diameter / epsilon``
  to each record, which gives epsilon differential privacy over the declared
  domain.
* :class:`GaussianChannel` adds Gaussian noise; the variance can be set
  directly, calibrated to (epsilon, delta) privacy, or calibrated to
  zero-concentrated privacy with budget rho.
* :class:`WaveletChannel` releases, for every record, all Haar wavelet detail
  coefficients up to a maximum level with independent Laplace noise on each
  coefficient.  Records live on the unit interval (an affine map from an
  arbitrary compact domain is stored in the channel).
* :class:`SmoothedHistogramChannel` is a global mechanism: instead of one
  noisy value per record it releases ``release_size`` fresh draws from a
  smoothed histogram of the whole data set.  The histogram term is
  interpreted as a density, ``(1 - smoothing) * n_bins * count_j / n +
  smoothing`` on the unit interval, so the released distribution integrates
  to one for every data set.

Channel domains are explicit configuration.  ``sanitize`` rejects
out-of-domain confidential data rather than clipping it; clipping would
silently change the privacy guarantee.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, InfeasibleError

__all__ = [
    "LaplaceChannel",
    "GaussianChannel",
    "WaveletChannel",
    "SmoothedHistogramChannel",
    "SanitizedDataset",
    "haar_psi",
    "gaussian_sigma",
    "zcdp_gaussian_variance",
    "solve_delta",
    "verify_ldp_ratio",
    "channel_to_json",
    "channel_from_json",
]

SCALAR_KIND = "scalar-per-record"
WAVELET_KIND = "wavelet-coefficients-per-record"
GLOBAL_KIND = "global-sample"


def _check_domain(domain):
    lo, hi = float(domain[0]), float(domain[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ConfigurationError(f"domain must be a finite interval, got {domain!r}")
    return (lo, hi)


def _require_in_domain(y, domain, what="confidential data"):
    y = np.asarray(y, dtype=float)
    lo, hi = domain
    bad = np.count_nonzero((y < lo) | (y > hi) | ~np.isfinite(y))
    if bad:
        raise DomainError(
            f"{bad} {what} value(s) outside the declared domain [{lo}, {hi}]; "
            "sanitize does not clip"
        )
    return y


def haar_psi(j, k, x):
    """Haar wavelet detail function at level ``j``, shift ``k``.

    psi_{j,k}(x) = 2^{j/2} (1_{[0,1/2)}(2^j x - k) - 1_{[1/2,1)}(2^j x - k)).

    The supporting intervals are half-open, so the value at a right
    breakpoint (for example x = 1) is exactly 0.

    Parameters
    ----------
    j : int
        Resolution level, j >= 0.
    k : int
        Shift, 0 <= k < 2**j.
    x : float or ndarray
        Evaluation points.

    Returns
    -------
    float or ndarray
        Exactly ``2**(j/2)``, ``-2**(j/2)``, or 0 at every point.
    """
    j = int(j)
    k = int(k)
    if j < 0:
        raise ValueError(f"level j must be nonnegative, got {j}")
    if not 0 <= k < 2**j:
        raise ValueError(f"shift k must satisfy 0 <= k < 2**j, got k={k} at j={j}")
    t = np.ldexp(np.asarray(x, dtype=float), j) - k
    amp = 2.0 ** (j / 2.0)
    out = amp * (((t >= 0.0) & (t < 0.5)).astype(float) - ((t >= 0.5) & (t < 1.0)))
    if np.isscalar(x):
        return float(out)
    return out


def gaussian_sigma(epsilon, delta, diameter):
    """Gaussian noise standard deviation for (epsilon, delta) privacy.

    sigma = sqrt(2 log(1.25 / delta)) * diameter / epsilon.

    This calibration is valid (and very loose) for any epsilon; for small
    delta and large epsilon the implied variance grows quickly, which is why
    the zero-concentrated calibration exists as an alternative.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if diameter <= 0:
        raise ValueError(f"diameter must be positive, got {diameter}")
    return math.sqrt(2.0 * math.log(1.25 / delta)) * diameter / epsilon


def zcdp_gaussian_variance(rho, diameter):
    """Gaussian noise variance for zero-concentrated privacy with budget rho.

    variance = diameter**2 / (2 rho).  Note this returns the variance, not
    the standard deviation.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if diameter <= 0:
        raise ValueError(f"diameter must be positive, got {diameter}")
    return diameter**2 / (2.0 * rho)


@dataclass(frozen=True)
class LaplaceChannel:
    """Per-record Laplace mechanism on a declared interval domain.

    The noise scale is ``diameter / epsilon`` where diameter is the length
    of the domain, so the released density satisfies the epsilon ratio bound
    ``|log q(z|y) - log q(z|y')| <= epsilon`` for all y, y' in the domain.
    """

    epsilon: float
    domain: tuple = (0.0, 1.0)
    kind: str = field(default=SCALAR_KIND, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "domain", _check_domain(self.domain))
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def diameter(self):
        return self.domain[1] - self.domain[0]

    @property
    def scale(self):
        return self.diameter / self.epsilon

    def sanitize(self, y, rng):
        """Release one Laplace-noised value per record."""
        y = _require_in_domain(y, self.domain)
        z = y + rng.laplace(0.0, self.scale, size=y.shape)
        return SanitizedDataset(kind=self.kind, values=z, channel=self)

    def log_density(self, z, y):
        """log q(z | y) for a single released value z and record y."""
        b = self.scale
        return -math.log(2.0 * b) - abs(z - y) / b

    def _log_density_grid(self, z_grid, y_grid):
        b = self.scale
        return -math.log(2.0 * b) - np.abs(z_grid[:, None] - y_grid[None, :]) / b


@dataclass(frozen=True)
class GaussianChannel:
    """Per-record Gaussian mechanism.

    Construct directly from a noise variance, or through the calibration
    constructors :meth:`from_eps_delta` and :meth:`from_zcdp`.  The Gaussian
    mechanism does not satisfy the pure-epsilon ratio bound; its pointwise
    density ratios are finite but unbounded over an unbounded released value.
    """

    noise_var: float
    domain: tuple = (0.0, 1.0)
    calibration: tuple = ()
    kind: str = field(default=SCALAR_KIND, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "domain", _check_domain(self.domain))
        if self.noise_var <= 0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        object.__setattr__(self, "calibration", tuple(self.calibration))

    @classmethod
    def from_eps_delta(cls, epsilon, delta, domain):
        """Calibrate the variance to (epsilon, delta) privacy over ``domain``."""
        lo, hi = _check_domain(domain)
        sigma = gaussian_sigma(epsilon, delta, hi - lo)
        return cls(
            noise_var=sigma**2,
            domain=(lo, hi),
            calibration=("eps-delta", float(epsilon), float(delta)),
        )

    @classmethod
    def from_zcdp(cls, rho, domain):
        """Calibrate the variance to zero-concentrated privacy with budget rho."""
        lo, hi = _check_domain(domain)
        var = zcdp_gaussian_variance(rho, hi - lo)
        return cls(noise_var=var, domain=(lo, hi), calibration=("zcdp", float(rho)))

    @property
    def diameter(self):
        return self.domain[1] - self.domain[0]

    def sanitize(self, y, rng):
        y = _require_in_domain(y, self.domain)
        z = y + rng.normal(0.0, math.sqrt(self.noise_var), size=y.shape)
        return SanitizedDataset(kind=self.kind, values=z, channel=self)

    def log_density(self, z, y):
        v = self.noise_var
        return -0.5 * math.log(2.0 * math.pi * v) - (z - y) ** 2 / (2.0 * v)

    def _log_density_grid(self, z_grid, y_grid):
        v = self.noise_var
        d = z_grid[:, None] - y_grid[None, :]
        return -0.5 * math.log(2.0 * math.pi * v) - d * d / (2.0 * v)


@dataclass(frozen=True)
class WaveletChannel:
    """Per-record Haar wavelet mechanism on the unit interval.

    For each record y the channel computes every detail coefficient
    psi_{j,k}(y) for levels j = 0..max_level and shifts k = 0..2^j - 1
    (the constant father level is excluded) and adds independent Laplace
    noise with a common scale to each.  The released record is the
    coefficient vector in row-major (level, shift) order, of length
    2^(max_level + 1) - 1.

    The noise scale ``(12 / epsilon) * (sqrt(2) / (sqrt(2) - 1)) *
    2^(max_level / 2)`` gives epsilon differential privacy for the whole
    coefficient vector.  Domains other than [0, 1] are mapped affinely onto
    the unit interval before the coefficients are taken; the map is stored
    here and inverted for reporting.
    """

    epsilon: float
    max_level: int
    domain: tuple = (0.0, 1.0)
    kind: str = field(default=WAVELET_KIND, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "domain", _check_domain(self.domain))
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.max_level) != self.max_level or self.max_level < 0:
            raise ValueError(f"max_level must be a nonnegative integer, got {self.max_level}")
        object.__setattr__(self, "max_level", int(self.max_level))

    @property
    def dim(self):
        """Length of a released coefficient vector."""
        return 2 ** (self.max_level + 1) - 1

    @property
    def noise_scale(self):
        root2 = math.sqrt(2.0)
        return (12.0 / self.epsilon) * (root2 / (root2 - 1.0)) * 2.0 ** (self.max_level / 2.0)

    def to_unit(self, y):
        lo, hi = self.domain
        return (np.asarray(y, dtype=float) - lo) / (hi - lo)

    def from_unit(self, u):
        lo, hi = self.domain
        return lo + (hi - lo) * np.asarray(u, dtype=float)

    def coefficient_vector(self, y):
        """Noise-free detail coefficients psi_{j,k}(y) for one record."""
        u = float(self.to_unit(y))
        out = np.zeros(self.dim)
        for j in range(self.max_level + 1):
            t_full = math.ldexp(u, j)
            k = min(int(t_full), 2**j - 1)
            t = t_full - k
            if 0.0 <= t < 0.5:
                out[2**j - 1 + k] = 2.0 ** (j / 2.0)
            elif 0.5 <= t < 1.0:
                out[2**j - 1 + k] = -(2.0 ** (j / 2.0))
        return out

    def sanitize(self, y, rng):
        y = _require_in_domain(y, self.domain)
        psi = np.stack([self.coefficient_vector(v) for v in y])
        z = psi + rng.laplace(0.0, self.noise_scale, size=psi.shape)
        return SanitizedDataset(kind=self.kind, values=z, channel=self)

    def log_density(self, z, y):
        """log q(z | y) for one released coefficient vector z and record y."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ValueError(f"expected a coefficient vector of length {self.dim}, got shape {z.shape}")
        s = self.noise_scale
        psi = self.coefficient_vector(y)
        return -self.dim * math.log(2.0 * s) - float(np.abs(z - psi).sum()) / s

    def _log_density_grid(self, z_grid, y_grid):
        z_grid = np.asarray(z_grid, dtype=float)
        if z_grid.ndim != 2 or z_grid.shape[1] != self.dim:
            raise ValueError(
                f"wavelet ratio grids need released rows of length {self.dim}, got shape {z_grid.shape}"
            )
        return np.array([[self.log_density(z, y) for y in y_grid] for z in z_grid])


@dataclass(frozen=True)
class SmoothedHistogramChannel:
    """Global mechanism releasing draws from a smoothed histogram.

    The confidential data set (size n, on the channel domain mapped to
    [0, 1]) is binned into ``n_bins`` equal-width bins with counts c_j.  The
    released values are ``release_size`` independent draws from the mixture
    density

        f(x) = (1 - smoothing) * n_bins * c_{j(x)} / n + smoothing,

    on [0, 1], which integrates to one for every data set.  Privacy requires

        release_size * log(((1 - smoothing)/smoothing) * (n_bins/n) - 1) <= epsilon,

    which is checked when the channel is applied to data of size n (use
    :func:`solve_delta` to find the smallest valid smoothing).
    """

    epsilon: float
    n_bins: int
    release_size: int
    smoothing: float
    domain: tuple = (0.0, 1.0)
    kind: str = field(default=GLOBAL_KIND, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "domain", _check_domain(self.domain))
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.n_bins) != self.n_bins or self.n_bins < 1:
            raise ValueError(f"n_bins must be a positive integer, got {self.n_bins}")
        if int(self.release_size) != self.release_size or self.release_size < 0:
            raise ValueError(f"release_size must be a nonnegative integer, got {self.release_size}")
        if not 0.0 < self.smoothing < 1.0:
            raise ValueError(f"smoothing must lie in (0, 1), got {self.smoothing}")
        object.__setattr__(self, "n_bins", int(self.n_bins))
        object.__setattr__(self, "release_size", int(self.release_size))

    def to_unit(self, y):
        lo, hi = self.domain
        return (np.asarray(y, dtype=float) - lo) / (hi - lo)

    def bin_index(self, u):
        """Bin of a unit-interval point; the right endpoint joins the last bin."""
        idx = np.minimum((np.asarray(u) * self.n_bins).astype(int), self.n_bins - 1)
        return idx

    def privacy_slack(self, n):
        """epsilon minus the constraint left side at data size n (>= 0 is valid)."""
        arg = ((1.0 - self.smoothing) / self.smoothing) * (self.n_bins / n) - 1.0
        if arg <= 0.0:
            return math.inf
        return self.epsilon - self.release_size * math.log(arg)

    def bin_densities(self, counts, n):
        """Released density value on each bin given confidential bin counts."""
        counts = np.asarray(counts, dtype=float)
        return (1.0 - self.smoothing) * self.n_bins * counts / n + self.smoothing

    def sanitize(self, y, rng):
        y = _require_in_domain(y, self.domain)
        n = y.size
        if n == 0:
            raise ValueError("cannot sanitize an empty data set with a global channel")
        if self.privacy_slack(n) < 0.0:
            raise ConfigurationError(
                f"(n_bins={self.n_bins}, release_size={self.release_size}, "
                f"smoothing={self.smoothing}) violates the epsilon={self.epsilon} "
                f"constraint at n={n}; use solve_delta to calibrate the smoothing"
            )
        u = self.to_unit(y)
        counts = np.bincount(self.bin_index(u), minlength=self.n_bins)
        k = self.release_size
        from_hist = rng.random(k) < (1.0 - self.smoothing)
        bins = rng.choice(self.n_bins, size=k, p=counts / n)
        inner = rng.random(k)
        uniform = rng.random(k)
        w = np.where(from_hist, (bins + inner) / self.n_bins, uniform)
        return SanitizedDataset(kind=self.kind, values=w, channel=self)

    def log_density(self, w, y):
        """Joint log density of released values ``w`` given the full data ``y``.

        ``w`` lives on the unit interval; ``y`` is the complete confidential
        vector on the channel domain.
        """
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if np.any((w < 0.0) | (w > 1.0)):
            raise DomainError("released values of a global channel live on [0, 1]")
        y = _require_in_domain(y, self.domain, what="latent data")
        u = self.to_unit(y)
        counts = np.bincount(self.bin_index(u), minlength=self.n_bins)
        dens = self.bin_densities(counts, u.size)
        return float(np.log(dens[self.bin_index(w)]).sum())


def solve_delta(n, n_bins, release_size, epsilon, tol=1e-10):
    """Smallest smoothing value satisfying the global channel's constraint.

    Finds, by bisection to absolute tolerance ``tol``, the smallest
    delta in (0, 1) with

        release_size * log(((1 - delta)/delta) * (n_bins/n) - 1) <= epsilon.

    The left side decreases continuously from +inf (delta -> 0) to -inf
    (as the log argument reaches 0), so the boundary solution exists and is
    unique; at the returned delta the left side equals epsilon up to the
    bisection tolerance.
    """
    if n < 1 or n_bins < 1 or release_size < 1:
        raise InfeasibleError(
            f"need n >= 1, n_bins >= 1, release_size >= 1, got ({n}, {n_bins}, {release_size})"
        )
    if epsilon <= 0:
        raise InfeasibleError(f"epsilon must be positive, got {epsilon}")

    def lhs(delta):
        arg = ((1.0 - delta) / delta) * (n_bins / n) - 1.0
        if arg <= 0.0:
            return -math.inf
        return release_size * math.log(arg)

    lo = 1e-300
    hi = n_bins / (n_bins + n)
    if lhs(lo) <= epsilon:
        # The constraint would hold arbitrarily close to zero smoothing,
        # which finite precision cannot represent meaningfully.
        raise InfeasibleError("constraint satisfied at vanishing smoothing; parameters degenerate")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if lhs(mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def verify_ldp_ratio(channel, epsilon, y_grid, z_grid):
    """Maximum released-density ratio over finite grids.

    Evaluates max over (z, y, y') of q(z | y) / q(z | y') and returns it;
    a channel satisfying the epsilon ratio bound keeps this at or below
    exp(epsilon).  ``epsilon`` names the budget the caller compares against.
    Only per-record channels have an evaluable per-record density, so global
    channels are rejected.

    For scalar channels ``z_grid`` is a vector of released values; for the
    wavelet channel it is an array of released coefficient rows.
    """
    if getattr(channel, "kind", None) == GLOBAL_KIND:
        raise ConfigurationError("global channels release one joint sample; per-record ratios undefined")
    y_grid = _require_in_domain(y_grid, channel.domain, what="grid")
    z_grid = np.asarray(z_grid, dtype=float)
    if z_grid.ndim == 1 and getattr(channel, "kind", None) == WAVELET_KIND:
        raise ValueError("wavelet channels need a 2-D z_grid of coefficient rows")
    log_q = channel._log_density_grid(z_grid, y_grid)
    spread = log_q.max(axis=1) - log_q.min(axis=1)
    return float(np.exp(spread.max()))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_CHANNEL_TAGS = {
    "laplace": LaplaceChannel,
    "gaussian": GaussianChannel,
    "wavelet": WaveletChannel,
    "smoothed-histogram": SmoothedHistogramChannel,
}


def channel_to_json(channel):
    """Serialize a channel to a JSON string embedding all privacy parameters."""
    if isinstance(channel, LaplaceChannel):
        payload = {"mechanism": "laplace", "epsilon": channel.epsilon, "domain": list(channel.domain)}
    elif isinstance(channel, GaussianChannel):
        payload = {
            "mechanism": "gaussian",
            "noise_var": channel.noise_var,
            "domain": list(channel.domain),
            "calibration": list(channel.calibration),
        }
    elif isinstance(channel, WaveletChannel):
        payload = {
            "mechanism": "wavelet",
            "epsilon": channel.epsilon,
            "max_level": channel.max_level,
            "domain": list(channel.domain),
        }
    elif isinstance(channel, SmoothedHistogramChannel):
        payload = {
            "mechanism": "smoothed-histogram",
            "epsilon": channel.epsilon,
            "n_bins": channel.n_bins,
            "release_size": channel.release_size,
            "smoothing": channel.smoothing,
            "domain": list(channel.domain),
        }
    else:
        raise TypeError(f"not a channel: {channel!r}")
    return json.dumps(payload, sort_keys=True)


def channel_from_json(text):
    """Inverse of :func:`channel_to_json`."""
    payload = json.loads(text)
    tag = payload.pop("mechanism", None)
    if tag not in _CHANNEL_TAGS:
        raise ValueError(f"unknown mechanism tag {tag!r}")
    payload["domain"] = tuple(payload["domain"])
    if "calibration" in payload:
        payload["calibration"] = tuple(payload["calibration"])
    return _CHANNEL_TAGS[tag](**payload)


@dataclass(frozen=True)
class SanitizedDataset:
    """A released data set together with the channel that produced it.

    ``kind`` says how ``values`` is shaped: one scalar per record, one
    wavelet coefficient row per record, or a single global sample whose
    length is the channel's release size (not the confidential n).
    """

    kind: str
    values: np.ndarray
    channel: object

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.kind not in (SCALAR_KIND, WAVELET_KIND, GLOBAL_KIND):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == WAVELET_KIND:
            if values.ndim != 2 or values.shape[1] != self.channel.dim:
                raise ValueError(
                    f"wavelet values must be (n, {self.channel.dim}), got {values.shape}"
                )
        else:
            if values.ndim != 1:
                raise ValueError(f"{self.kind} values must be 1-D, got shape {values.shape}")
        if self.kind == GLOBAL_KIND:
            if np.any((values < 0.0) | (values > 1.0)):
                raise ValueError("global-sample values live on [0, 1]")
            if values.size != self.channel.release_size:
                raise ValueError(
                    f"global sample length {values.size} != release_size {self.channel.release_size}"
                )

    def __len__(self):
        return self.values.shape[0]

    def to_csv(self, path):
        """Write a self-describing CSV: header row ``kind,channel_json``, then
        one released record per row (full float precision)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([self.kind, channel_to_json(self.channel)])
            rows = self.values if self.values.ndim == 2 else self.values[:, None]
            for row in rows:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if len(header) != 2:
                raise ValueError(f"expected header 'kind,channel_json', got {header!r}")
            kind, channel_json = header
            channel = channel_from_json(channel_json)
            rows = [[float(v) for v in row] for row in reader if row]
        values = np.asarray(rows, dtype=float)
        if kind != WAVELET_KIND:
            values = values.reshape(-1)
        return cls(kind=kind, values=values, channel=channel)
