"""Diagnostics toolbox on known ground truth.

Every diagnostic in the package against cases with analytic answers:
Hellinger distance between Gaussians, effective sample size of an
AR(1) trace, adjusted Rand index on engineered partitions, the Binder
point-estimate partition, and the density CSV round trip.
"""

import math
import tempfile
from pathlib import Path

import numpy as np
from scipy import signal, stats

from privmix import (
    DensityEstimate,
    ari,
    density_from_csv,
    density_to_csv,
    ess,
    hellinger,
    point_estimate_partition,
)

grid = np.linspace(-8.0, 8.0, 2001)

# closed form: H(N(0,1), N(m,1)) = sqrt(1 - exp(-m^2/8))
for m in (0.5, 1.0, 2.0):
    h = hellinger(stats.norm.pdf(grid), stats.norm.pdf(grid, m, 1.0), grid)
    exact = math.sqrt(1.0 - math.exp(-m * m / 8.0))
    print(f"Hellinger N(0,1) vs N({m},1): {h:.5f}  (closed form {exact:.5f})")

# AR(1) with phi=0.9 has ESS factor (1-phi)/(1+phi) = 1/19
rng = np.random.default_rng(1)
n = 50_000
trace = signal.lfilter([1.0], [1.0, -0.9], rng.standard_normal(n))
print(f"\nESS of AR(1) phi=0.9, n={n}: {ess(trace):.0f}  (theory {n / 19:.0f})")
print(f"ESS of white noise, n={n}: {ess(rng.standard_normal(n)):.0f}")

a = np.repeat([0, 1, 2], 40)
b = a.copy()
b[:10] = 1
print(f"\nARI identical partitions: {ari(a, a):.3f}")
print(f"ARI after relabeling 10 sites: {ari(a, b):.3f}")
print(f"ARI independent random labels: {ari(rng.integers(0, 3, 120), rng.integers(0, 3, 120)):.3f}")

# Binder point estimate across sampled partitions that disagree on one site
samples = np.array([[0, 0, 1, 1]] * 6 + [[0, 0, 0, 1]] * 4)
print(f"\nBinder point estimate from 10 partition samples: {point_estimate_partition(samples)}")

est = DensityEstimate(
    grid=grid,
    mean=stats.norm.pdf(grid),
    lower95=stats.norm.pdf(grid) * 0.9,
    upper95=stats.norm.pdf(grid) * 1.1,
)
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "density.csv"
    density_to_csv(est, path, {"note": "demo"})
    back, info = density_from_csv(path)
print(f"\nCSV round trip exact: {est == back}, header {info}")
