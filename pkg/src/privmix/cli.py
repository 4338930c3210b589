"""Experiment harness and command-line interface.

Synthetic data generators, a sectioned key/value configuration format
with flag overrides, replicate orchestration with full provenance
(config hash + spawned seeds in a manifest, byte-identical reruns), and
the ``sanitize`` / ``run`` / ``sweep`` / ``summarize`` / ``plot``
subcommands.  Heavy work runs through :func:`run_experiment`; the
subcommand functions stay thin wrappers around it.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .channels import (
    GLOBAL_KIND,
    WAVELET_KIND,
    GaussianChannel,
    LaplaceChannel,
    SmoothedHistogramChannel,
    WaveletChannel,
    solve_delta,
)
from .diagnostics import ari, density_to_csv, ess, hellinger
from .errors import ConfigurationError
from .marginal_gaussian import MarginalGaussianModel, TruncatedNIGBase
from .mixtures import BetaKernel, GammaGammaBase, GaussianKernel, NIGBase
from .samplers import ChainConfig, DPMixtureModel, check_compatibility, run_chain

__all__ = [
    "ExperimentConfig",
    "appendix_histogram_sizes",
    "empirical_bayes_hyperparameters",
    "generate_beta_mixture",
    "generate_truncated_gaussian_mixture",
    "main",
    "run_experiment",
    "run_sweep",
]

WORKERS_ENV = "PRIVMIX_WORKERS"

_GAUSS_MIX_MEANS = (-5.0, 0.0, 5.0)
_GAUSS_MIX_DOMAIN = (-10.0, 10.0)
_BETA_MIX_SHAPES = ((5.0, 50.0), (50.0, 50.0), (50.0, 5.0))


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def generate_truncated_gaussian_mixture(n, rng):
    """Equally weighted three-component truncated Gaussian mixture on
    [-10, 10] with component means -5, 0, 5 and unit variance.

    Returns (values, component labels); the labels feed ARI computations
    downstream.
    """
    if n < 1:
        raise ValueError(f"need at least one observation, got {n}")
    labels = rng.integers(0, 3, size=n)
    values = np.empty(n)
    lo, hi = _GAUSS_MIX_DOMAIN
    for comp, mean in enumerate(_GAUSS_MIX_MEANS):
        idx = labels == comp
        count = int(idx.sum())
        if count:
            values[idx] = stats.truncnorm.rvs(
                lo - mean, hi - mean, loc=mean, scale=1.0, size=count, random_state=rng
            )
    return values, labels


def generate_beta_mixture(n, rng):
    """Equally weighted mixture of Beta(5,50), Beta(50,50), Beta(50,5)."""
    if n < 1:
        raise ValueError(f"need at least one observation, got {n}")
    labels = rng.integers(0, 3, size=n)
    values = np.empty(n)
    for comp, (a, b) in enumerate(_BETA_MIX_SHAPES):
        idx = labels == comp
        if idx.any():
            values[idx] = rng.beta(a, b, size=int(idx.sum()))
    return values, labels


_GENERATORS = {
    "truncated-gaussian-mixture": (generate_truncated_gaussian_mixture, _GAUSS_MIX_DOMAIN),
    "beta-mixture": (generate_beta_mixture, (0.0, 1.0)),
}


def true_mixture_density(generator, grid):
    """Population density of a named generator on a grid, or None."""
    grid = np.asarray(grid, dtype=float)
    if generator == "truncated-gaussian-mixture":
        lo, hi = _GAUSS_MIX_DOMAIN
        out = np.zeros_like(grid)
        for mean in _GAUSS_MIX_MEANS:
            out += stats.truncnorm.pdf(grid, lo - mean, hi - mean, loc=mean, scale=1.0)
        return out / 3.0
    if generator == "beta-mixture":
        out = np.zeros_like(grid)
        for a, b in _BETA_MIX_SHAPES:
            out += stats.beta.pdf(grid, a, b)
        return out / 3.0
    return None


# ---------------------------------------------------------------------------
# derived hyperparameters
# ---------------------------------------------------------------------------


def appendix_histogram_sizes(n, levels):
    """Histogram-release sizes from the sample size: the bin count
    levels * floor(n^(1/5) + 1) and the release count floor(n^(3/5) + 1)."""
    if n < 1 or levels < 1:
        raise ValueError("need a positive sample size and level multiplier")
    return levels * math.floor(n**0.2 + 1.0), math.floor(n**0.6 + 1.0)


def empirical_bayes_hyperparameters(z, lam=0.1):
    """Data-driven base-measure hyperparameters (mu0, lam, shape, rate).

    Centers the prior mean at the sanitized average and matches the
    inverse-gamma moments E[var] = half the empirical variance of z and
    Var[var] = 1/2.  The moment inversion needs shape > 2 to be valid,
    which fails only for (near-)constant data.
    """
    z = np.asarray(z, dtype=float)
    mu0 = float(z.mean())
    m = float(z.var()) / 2.0
    a = 2.0 + 2.0 * m * m
    if not a > 2.0:
        raise ConfigurationError(
            "empirical hyperparameters need non-constant data (moment inversion hit shape <= 2)"
        )
    return mu0, lam, a, m * (a - 1.0)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _coerce(raw):
    text = raw.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


_SECTIONS = ("data", "channel", "model", "sampler", "sweep")


@dataclass
class ExperimentConfig:
    """One experiment cell: data, channel, model, and sampler specs plus
    replicate count, seed, and output directory.

    Replicates and chain length default to desk scale (10 x 20k) and to
    the full protocol (50 x 100k) when paper_scale is set; explicit
    values in the file or on the command line win over either.
    """

    data: dict = field(default_factory=dict)
    channel: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    replicates: int | None = None
    seed: int = 0
    output_dir: str = "artifacts"
    paper_scale: bool = False
    fresh_data: bool = True

    @classmethod
    def from_file(cls, path, overrides=()):
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigurationError(f"cannot read config file {path}")
        sections = {
            name: {k: _coerce(v) for k, v in parser[name].items()} for name in parser.sections()
        }
        for item in overrides:
            target, sep, raw = item.partition("=")
            section, dot, key = target.strip().partition(".")
            if not sep or not dot or not key:
                raise ConfigurationError(f"override must look like section.key=value, got {item!r}")
            sections.setdefault(section, {})[key.strip()] = _coerce(raw)
        run = sections.pop("run", {})
        unknown = [s for s in sections if s not in _SECTIONS]
        if unknown:
            raise ConfigurationError(f"unknown config sections: {', '.join(sorted(unknown))}")
        cfg = cls(
            **{s: sections.get(s, {}) for s in _SECTIONS},
            replicates=run.pop("replicates", None),
            seed=run.pop("seed", 0),
            output_dir=run.pop("output_dir", "artifacts"),
            paper_scale=run.pop("paper_scale", False),
            fresh_data=run.pop("fresh_data", True),
        )
        if run:
            raise ConfigurationError(f"unknown [run] keys: {', '.join(sorted(run))}")
        return cfg

    def resolved_replicates(self):
        if self.replicates is not None:
            return self.replicates
        return 50 if self.paper_scale else 10

    def resolved_iterations(self):
        if "iterations" in self.sampler:
            return self.sampler["iterations"]
        return 100_000 if self.paper_scale else 20_000

    def resolved_burn_in(self):
        if "burn_in" in self.sampler:
            return self.sampler["burn_in"]
        return self.resolved_iterations() // 2

    def as_dict(self):
        # the output path is deliberately absent: it names where the
        # artifact lives, not what the experiment is, so the config hash
        # and manifest stay identical across target directories
        return {
            "data": dict(self.data),
            "channel": dict(self.channel),
            "model": dict(self.model),
            "sampler": {
                **self.sampler,
                "iterations": self.resolved_iterations(),
                "burn_in": self.resolved_burn_in(),
            },
            "sweep": dict(self.sweep),
            "replicates": self.resolved_replicates(),
            "seed": self.seed,
            "paper_scale": self.paper_scale,
            "fresh_data": self.fresh_data,
        }

    def config_hash(self):
        canon = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# building blocks from config sections
# ---------------------------------------------------------------------------


def _make_confidential(cfg, rng):
    spec = cfg.data
    if "path" in spec:
        values = np.loadtxt(spec["path"], dtype=float, ndmin=1)
        return values, None, None
    name = spec.get("generator")
    if name not in _GENERATORS:
        raise ConfigurationError(
            f"data needs a generator from {sorted(_GENERATORS)} or a path, got {name!r}"
        )
    n = spec.get("n")
    if not isinstance(n, int) or n < 1:
        raise ConfigurationError(f"data.n must be a positive integer, got {n!r}")
    generator, domain = _GENERATORS[name]
    values, labels = generator(n, rng)
    return values, labels, domain


def _make_channel(cfg, n, default_domain):
    spec = dict(cfg.channel)
    mechanism = spec.pop("mechanism", None)
    derived = {}
    if "low" in spec or "high" in spec:
        domain = (float(spec.pop("low")), float(spec.pop("high")))
    elif default_domain is not None:
        domain = default_domain
    else:
        raise ConfigurationError("channel needs explicit low/high bounds for file-based data")

    if mechanism == "laplace":
        channel = LaplaceChannel(epsilon=float(spec.pop("epsilon")), domain=domain)
    elif mechanism == "gaussian":
        if "noise_var" in spec:
            channel = GaussianChannel(noise_var=float(spec.pop("noise_var")), domain=domain)
        elif "rho" in spec:
            channel = GaussianChannel.from_zcdp(float(spec.pop("rho")), domain)
        else:
            channel = GaussianChannel.from_eps_delta(
                float(spec.pop("epsilon")), float(spec.pop("delta")), domain
            )
        derived["noise_var"] = channel.noise_var
    elif mechanism == "wavelet":
        channel = WaveletChannel(
            epsilon=float(spec.pop("epsilon")), max_level=spec.pop("max_level"), domain=domain
        )
        derived["noise_scale"] = channel.noise_scale
        derived["coefficients"] = channel.dim
    elif mechanism == "histogram":
        epsilon = float(spec.pop("epsilon"))
        if "levels" in spec:
            n_bins, release = appendix_histogram_sizes(n, spec.pop("levels"))
        else:
            n_bins, release = spec.pop("n_bins"), spec.pop("release_size")
        smoothing = spec.pop("smoothing", None)
        if smoothing is None:
            smoothing = solve_delta(n, n_bins, release, epsilon)
        channel = SmoothedHistogramChannel(
            epsilon=epsilon,
            n_bins=n_bins,
            release_size=release,
            smoothing=smoothing,
            domain=domain,
        )
        derived.update({"n_bins": n_bins, "release_size": release, "smoothing": smoothing})
    else:
        raise ConfigurationError(
            f"channel.mechanism must be laplace, gaussian, wavelet, or histogram, got {mechanism!r}"
        )
    if spec:
        raise ConfigurationError(f"unknown channel keys: {', '.join(sorted(spec))}")
    return channel, derived


def _make_model(cfg, channel, z_flat):
    spec = dict(cfg.model)
    alpha = float(spec.pop("alpha", 1.0))
    variant = spec.pop("variant", "kernel")
    if variant == "auto":
        # follow the algorithm so one sweep can cross collapsed and
        # kernel-space samplers with shared hyperparameters
        algorithm = cfg.sampler.get("algorithm")
        variant = "marginal" if algorithm in ("neal2", "neal3") else "kernel"
    base_name = spec.pop("base", None)
    derived = {}

    if variant == "marginal":
        if base_name == "empirical":
            mu0, lam, a, b = empirical_bayes_hyperparameters(
                z_flat, lam=spec.pop("lam", 0.1)
            )
            derived["empirical_base"] = {"mu0": mu0, "lam": lam, "shape": a, "rate": b}
        else:
            mu0 = spec.pop("mu0", 0.0)
            lam = spec.pop("lam", 1.0)
            a = spec.pop("shape", 2.0)
            b = spec.pop("rate", 2.0)
        noise_var = getattr(channel, "noise_var", None)
        if noise_var is None:
            raise ConfigurationError("the collapsed conjugate model needs the Gaussian channel")
        base = TruncatedNIGBase(mu0=mu0, lam=lam, shape=a, rate=b, noise_var=noise_var)
        model = MarginalGaussianModel(base=base, alpha=alpha)
    elif variant == "kernel":
        kernel_name = spec.pop("kernel", "gaussian")
        if kernel_name == "gaussian":
            kernel = GaussianKernel()
            if base_name == "empirical":
                mu0, lam, a, b = empirical_bayes_hyperparameters(
                    z_flat, lam=spec.pop("lam", 0.1)
                )
                derived["empirical_base"] = {"mu0": mu0, "lam": lam, "shape": a, "rate": b}
            else:
                mu0 = spec.pop("mu0", 0.0)
                lam = spec.pop("lam", 1.0)
                a = spec.pop("shape", 2.0)
                b = spec.pop("rate", 2.0)
            base = NIGBase(mu0, lam, a, b)
        elif kernel_name == "beta":
            kernel = BetaKernel()
            base = GammaGammaBase()
        else:
            raise ConfigurationError(f"model.kernel must be gaussian or beta, got {kernel_name!r}")
        model = DPMixtureModel(kernel=kernel, base=base, alpha=alpha)
    else:
        raise ConfigurationError(f"model.variant must be kernel or marginal, got {variant!r}")
    if spec:
        raise ConfigurationError(f"unknown model keys: {', '.join(sorted(spec))}")
    return model, derived


def _make_chain_config(cfg, model, n):
    spec = cfg.sampler
    algorithm = spec.get("algorithm")
    extra = {}
    if algorithm in ("global-conditional", "global-marginal"):
        extra["latent_size"] = spec.get("latent_size", n)
    return ChainConfig(
        sampler=algorithm,
        model=model,
        iterations=cfg.resolved_iterations(),
        burn_in=cfg.resolved_burn_in(),
        record_stride=spec.get("record_stride", 10),
        m_aux=spec.get("m", 1),
        grid_points=spec.get("grid_points", 200),
        **extra,
    )


def _build_replicate(cfg, data_rng):
    """Generate and sanitize one replicate's data, then assemble the
    model and chain configuration against it."""
    y, labels, domain = _make_confidential(cfg, data_rng)
    channel, channel_derived = _make_channel(cfg, y.size, domain)
    data = channel.sanitize(y, data_rng)
    z_flat = np.asarray(data.values, dtype=float).ravel()
    model, model_derived = _make_model(cfg, channel, z_flat)
    chain_cfg = _make_chain_config(cfg, model, y.size)
    check_compatibility(chain_cfg.sampler, channel, model)
    return data, labels, chain_cfg, {**channel_derived, **model_derived}


# ---------------------------------------------------------------------------
# replicate execution and artifact emission
# ---------------------------------------------------------------------------


def _write_csv(path, header_info, columns, rows):
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header_info, sort_keys=True) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _replicate_seed_sequences(cfg):
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(cfg.resolved_replicates() + 1)
    shared_data = children[0]
    out = []
    for child in children[1:]:
        data_ss, chain_ss = child.spawn(2)
        out.append((shared_data if not cfg.fresh_data else data_ss, chain_ss))
    return out


def _run_replicate(payload):
    cfg, rep, data_ss, chain_ss, out_dir = payload
    data_rng = np.random.default_rng(data_ss)
    data, labels, chain_cfg, derived = _build_replicate(cfg, data_rng)
    summary = run_chain(chain_cfg, data, np.random.default_rng(chain_ss))

    rep_dir = Path(out_dir) / f"rep{rep:03d}"
    rep_dir.mkdir(parents=True, exist_ok=True)
    info = {"replicate": rep, "sampler": chain_cfg.sampler, "config_hash": cfg.config_hash()}

    _write_csv(
        rep_dir / "trace.csv",
        info,
        ["iteration", "clusters"],
        enumerate(summary.cluster_counts.tolist()),
    )
    _write_csv(
        rep_dir / "acceptance.csv",
        info,
        ["block", "accepted", "proposals"],
        [(blk, acc, prop) for blk, (acc, prop) in sorted(summary.acceptance.items())],
    )

    row = {"replicate": rep, "ess": None, "mean_clusters": None, "ari": None, "hellinger": None}
    for block, (acc, prop) in summary.acceptance.items():
        row[f"accept_{block}"] = acc / prop if prop else None
    if summary.cluster_counts.size:
        row["mean_clusters"] = float(summary.cluster_counts.mean())
        if summary.cluster_counts.size >= 10:
            row["ess"] = float(ess(summary.cluster_counts))
    if summary.density is not None:
        density_to_csv(summary.density, rep_dir / "density.csv", config_info=info)
        truth = true_mixture_density(cfg.data.get("generator"), summary.density.grid)
        if truth is not None:
            row["hellinger"] = hellinger(
                np.clip(summary.density.mean, 0.0, None), truth, summary.density.grid
            )
    if summary.partition is not None:
        truth_col = labels.tolist() if labels is not None else [None] * summary.partition.size
        _write_csv(
            rep_dir / "partition.csv",
            info,
            ["index", "cluster", "truth"],
            zip(range(summary.partition.size), summary.partition.tolist(), truth_col),
        )
        if labels is not None:
            row["ari"] = ari(labels, summary.partition)
    return row, derived


def _aggregate_columns(rows):
    extra = sorted({k for row in rows for k in row if k.startswith("accept_")})
    return ["replicate", "ess", "mean_clusters", "ari", "hellinger"] + extra


def _median_row(rows, columns):
    med = {"replicate": "median"}
    for col in columns[1:]:
        values = [row.get(col) for row in rows if row.get(col) is not None]
        med[col] = float(np.median(values)) if values else None
    return med


def run_experiment(config):
    """Run every replicate of one experiment cell and emit its artifact
    directory: per-replicate trace/acceptance/density/partition CSVs, an
    aggregate table with a median row, a density plot, and a manifest
    carrying the full config, its hash, and all spawned seeds.  A rerun
    with the same config reproduces every byte.
    """
    probe_rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    _build_replicate(config, probe_rng)  # validate before any work

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = _replicate_seed_sequences(config)
    payloads = [
        (config, rep, data_ss, chain_ss, str(out_dir))
        for rep, (data_ss, chain_ss) in enumerate(seeds)
    ]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1 and len(payloads) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, payloads))
    else:
        results = [_run_replicate(p) for p in payloads]

    rows = [row for row, _ in results]
    derived = results[0][1]
    columns = _aggregate_columns(rows)
    table = [[row.get(c) for c in columns] for row in rows]
    table.append([_median_row(rows, columns).get(c) for c in columns])
    info = {"config_hash": config.config_hash(), "cells": 1}
    _write_csv(out_dir / "aggregate.csv", info, columns, table)

    _plot_experiment_density(config, out_dir)

    manifest = {
        "config": config.as_dict(),
        "config_hash": config.config_hash(),
        "derived": derived,
        "seeds": {
            "root": config.seed,
            "replicates": [
                {"data": list(d.spawn_key), "chain": list(c.spawn_key)} for d, c in seeds
            ],
        },
        "outputs": sorted(
            str(p.relative_to(out_dir)) for p in out_dir.rglob("*.csv")
        )
        + ["density.svg"],
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def _plot_experiment_density(config, out_dir):
    from .diagnostics import density_from_csv

    rep_files = sorted(Path(out_dir).glob("rep*/density.csv"))
    if not rep_files:
        return
    estimates = [density_from_csv(p)[0] for p in rep_files]
    grid = estimates[0].grid
    mean = np.mean([e.mean for e in estimates], axis=0)
    truth = true_mixture_density(config.data.get("generator"), grid)
    _plot_density_svg(
        Path(out_dir) / "density.svg",
        grid,
        [(e.mean, None) for e in estimates],
        mean,
        truth,
        salt=config.config_hash(),
        title=f"{config.sampler.get('algorithm')} posterior mean density",
    )


def _plot_density_svg(path, grid, faint_rows, mean, truth, salt, title, bands=None):
    # Figure constructed directly so no global pyplot state leaks between
    # runs; fixed hash salt and stripped date make the SVG reproducible
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = salt
    from matplotlib.figure import Figure

    fig = Figure(figsize=(7.0, 4.5))
    ax = fig.subplots()
    for row, _ in faint_rows:
        ax.plot(grid, row, color="0.8", linewidth=0.6)
    if bands is not None:
        ax.fill_between(grid, bands[0], bands[1], color="C0", alpha=0.25, linewidth=0)
    ax.plot(grid, mean, color="C0", linewidth=1.8, label="posterior mean")
    if truth is not None:
        ax.plot(grid, truth, color="C3", linestyle="--", linewidth=1.2, label="truth")
    ax.set_xlabel("y")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend(loc="best")
    fig.savefig(path, format="svg", metadata={"Date": None})


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _sweep_cells(config):
    if not config.sweep:
        raise ConfigurationError("sweep needs a [sweep] section of section.key = comma,list entries")
    axes = []
    for target, raw in config.sweep.items():
        section, dot, key = target.partition(".")
        if not dot or section not in ("data", "channel", "model", "sampler"):
            raise ConfigurationError(
                f"sweep keys look like section.key with a swept section, got {target!r}"
            )
        values = [_coerce(v) for v in str(raw).split(",")]
        axes.append([(section, key, v) for v in values])
    cells = []
    for combo in itertools.product(*axes):
        label = "_".join(f"{key}-{value}" for _, key, value in combo)
        cells.append((label, combo))
    return cells


def run_sweep(config):
    """Run every cell of the sweep grid into its own subdirectory and
    write a sweep manifest listing them."""
    cells = _sweep_cells(config)
    root = Path(config.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    listed = []
    for label, combo in cells:
        cell_cfg = ExperimentConfig(
            data=dict(config.data),
            channel=dict(config.channel),
            model=dict(config.model),
            sampler=dict(config.sampler),
            replicates=config.replicates,
            seed=config.seed,
            output_dir=str(root / label),
            paper_scale=config.paper_scale,
            fresh_data=config.fresh_data,
        )
        for section, key, value in combo:
            getattr(cell_cfg, section)[key] = value
        run_experiment(cell_cfg)
        listed.append(
            {
                "dir": label,
                "overrides": {f"{s}.{k}": v for s, k, v in combo},
                "config_hash": cell_cfg.config_hash(),
            }
        )
    manifest = {"config_hash": config.config_hash(), "cells": listed}
    with open(root / "sweep_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return root


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_sanitize(config):
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    y, labels, domain = _make_confidential(config, rng)
    channel, derived = _make_channel(config, y.size, domain)
    data = channel.sanitize(y, rng)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    info = {"kind": data.kind, "config_hash": config.config_hash()}

    values = np.asarray(data.values, dtype=float)
    if data.kind == WAVELET_KIND:
        columns = [f"c{j}" for j in range(values.shape[1])]
        rows = [[float(v) for v in row] for row in values]
    elif data.kind == GLOBAL_KIND:
        columns, rows = ["w"], [[float(v)] for v in values]
    else:
        columns, rows = ["z"], [[float(v)] for v in values]
    _write_csv(out_dir / "sanitized.csv", info, columns, rows)

    truth_rows = (
        [[float(v), int(l)] for v, l in zip(y, labels)]
        if labels is not None
        else [[float(v), None] for v in y]
    )
    _write_csv(out_dir / "confidential.csv", info, ["y", "label"], truth_rows)

    manifest = {
        "config": config.as_dict(),
        "config_hash": config.config_hash(),
        "derived": derived,
        "outputs": ["confidential.csv", "sanitized.csv"],
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def _cmd_summarize(input_dir, output=None):
    tables = sorted(Path(input_dir).rglob("aggregate.csv"))
    if not tables:
        raise ConfigurationError(f"no aggregate.csv under {input_dir}")
    lines = []
    for table in tables:
        with open(table) as fh:
            fh.readline()  # JSON header
            columns = fh.readline().strip().split(",")
            median = None
            for line in fh:
                if line.startswith("median"):
                    median = line.strip().split(",")
        cell = str(table.parent.relative_to(input_dir)) or "."
        if median:
            lines.append((cell, columns, median))
    out = ["cell," + ",".join(lines[0][1][1:])]
    for cell, columns, median in lines:
        out.append(cell + "," + ",".join(median[1:]))
    text = "\n".join(out) + "\n"
    if output:
        Path(output).write_text(text)
    return text


def _cmd_plot(input_csv, output_svg):
    from .diagnostics import density_from_csv

    estimate, info = density_from_csv(input_csv)
    bands = None
    if estimate.lower95 is not None:
        bands = (estimate.lower95, estimate.upper95)
    _plot_density_svg(
        Path(output_svg),
        estimate.grid,
        [],
        estimate.mean,
        None,
        salt=str(info.get("config_hash", "density")),
        title=info.get("sampler", "posterior mean density"),
        bands=bands,
    )
    return Path(output_svg)


def _add_config_arguments(sub):
    sub.add_argument("--config", required=True, help="experiment config file")
    sub.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config entry (repeatable; flags win over the file)",
    )
    sub.add_argument("--output", help="output directory (overrides [run] output_dir)")
    sub.add_argument("--seed", type=int, help="root seed (overrides [run] seed)")
    sub.add_argument("--replicates", type=int, help="replicate count (overrides [run] replicates)")
    sub.add_argument(
        "--paper-scale",
        action="store_true",
        help="full replication protocol (50 replicates x 100k iterations) instead of desk scale",
    )


def _config_from_args(args):
    cfg = ExperimentConfig.from_file(args.config, overrides=args.set)
    if args.output is not None:
        cfg.output_dir = args.output
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "replicates", None) is not None:
        cfg.replicates = args.replicates
    if getattr(args, "paper_scale", False):
        cfg.paper_scale = True
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="privmix",
        description="Mixture-model inference from privacy-protected data",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sanitize_p = commands.add_parser("sanitize", help="generate and sanitize a data set")
    _add_config_arguments(sanitize_p)

    run_p = commands.add_parser("run", help="run one experiment cell")
    _add_config_arguments(run_p)

    sweep_p = commands.add_parser("sweep", help="run a grid of experiment cells")
    _add_config_arguments(sweep_p)

    summarize_p = commands.add_parser("summarize", help="tabulate medians from artifact dirs")
    summarize_p.add_argument("--input", required=True, help="artifact directory")
    summarize_p.add_argument("--output", help="write the table to this CSV instead of stdout only")

    plot_p = commands.add_parser("plot", help="render a density CSV to SVG")
    plot_p.add_argument("--input", required=True, help="density.csv file")
    plot_p.add_argument("--output", required=True, help="output SVG path")

    args = parser.parse_args(argv)
    if args.command == "sanitize":
        out = _cmd_sanitize(_config_from_args(args))
        print(out)
    elif args.command == "run":
        out = run_experiment(_config_from_args(args))
        print(out)
    elif args.command == "sweep":
        out = run_sweep(_config_from_args(args))
        print(out)
    elif args.command == "summarize":
        print(_cmd_summarize(args.input, args.output), end="")
    elif args.command == "plot":
        out = _cmd_plot(args.input, args.output)
        print(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
