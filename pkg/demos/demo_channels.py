"""Tour of the release mechanisms.

Each channel takes confidential values on a declared domain and returns
a SanitizedDataset: the only object the samplers are allowed to see.
This script pushes one synthetic dataset through all four mechanisms
and prints what each release looks like, plus the two calibration
helpers that convert (epsilon, delta) or zCDP budgets into noise scales.
"""

import numpy as np

from privmix import (
    GaussianChannel,
    LaplaceChannel,
    SmoothedHistogramChannel,
    WaveletChannel,
    gaussian_sigma,
    solve_delta,
    zcdp_gaussian_variance,
)

rng = np.random.default_rng(0)
n = 12
y = np.sort(rng.uniform(0.2, 0.8, size=n))
print("confidential values (never released):")
print(" ", np.round(y, 3))

# per-record additive noise, scale = diameter / epsilon
lap = LaplaceChannel(epsilon=2.0, domain=(0.0, 1.0))
z = lap.sanitize(y, rng)
print(f"\nLaplace release, eps=2 (scale {lap.scale:.3f}):")
print(" ", np.round(z.values, 3))

gauss = GaussianChannel.from_eps_delta(2.0, 1e-4, (0.0, 1.0))
z = gauss.sanitize(y, rng)
print(f"\nGaussian release, (2, 1e-4)-DP (sd {np.sqrt(gauss.noise_var):.3f}):")
print(" ", np.round(z.values, 3))

# noisy Haar coefficients per record; the record itself is never output
wav = WaveletChannel(epsilon=2.0, max_level=3, domain=(0.0, 1.0))
z = wav.sanitize(y, rng)
print(f"\nWavelet release, eps=2, levels 0..3 ({z.values.shape[1]} coefficients per record):")
print("  first record:", np.round(z.values[0], 2))

# one smoothed-histogram draw set for the whole dataset
delta = solve_delta(n, n_bins=4, release_size=6, epsilon=2.0)
hist = SmoothedHistogramChannel(
    epsilon=2.0, n_bins=4, release_size=6, smoothing=delta, domain=(0.0, 1.0)
)
z = hist.sanitize(y, rng)
print(f"\nSmoothed histogram release, eps=2 (smoothing delta {delta:.4f}):")
print("  released sample:", np.round(z.values, 3))

print("\ncalibration helpers:")
print(f"  gaussian_sigma(0.5, 0.01, diameter=20) = {gaussian_sigma(0.5, 0.01, 20.0):.2f}")
print(f"  zcdp_gaussian_variance(rho=17.8, diameter=3.11) = {zcdp_gaussian_variance(17.8, 3.11):.6f}")
