"""Monte Carlo TCSPC histograms for NV ensembles quenched by nitrogen donors.

Each emitter keeps one nearest-donor distance for the whole run.  Every
emitter is excited equally often, so a photon comes from emitter ``i`` with
probability proportional to its yield ``1 / k_i``.  Its delay after the pulse
is exponential with rate ``k_i``, wrapped into the repetition period.  Only
photons inside the ``[0, t_max)`` window are recorded, and the histogram holds
exactly ``total_photons`` of them.

Random numbers come from counter-based Philox streams derived from one seed:
one stream for the emitter geometry and one per fixed-size photon chunk.  The
output is therefore bit-identical for any number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigError, InsufficientDataError
from .lifetime import DecayHistogram
from .quench import QuenchParams
from .spatial import sample_nn_distances

CHUNK_PHOTONS = 1 << 20


@dataclass(frozen=True)
class EnsembleSimConfig:
    """Settings for one simulated ensemble.

    ``density`` is the donor density in nm^-3; times are in ns.
    """

    density: float
    n_emitters: int = 10_000
    total_photons: int = 1_000_000
    rep_period: float = 100.0
    bin_width: float = 0.1
    t_max: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.density) and self.density >= 0):
            raise ConfigError("density must be finite and >= 0")
        if int(self.n_emitters) < 1:
            raise ConfigError("n_emitters must be >= 1")
        if int(self.total_photons) < 1:
            raise ConfigError("total_photons must be >= 1")
        if not (0 < self.bin_width < self.t_max <= self.rep_period):
            raise ConfigError("require 0 < bin_width < t_max <= rep_period")
        n = self.t_max / self.bin_width
        if abs(n - round(n)) > 1e-6 * n:
            raise ConfigError("t_max must be a whole number of bin widths")
        if round(n) < 10:
            raise ConfigError("the window must contain at least 10 bins")

    @property
    def n_bins(self):
        return int(round(self.t_max / self.bin_width))

    def to_dict(self):
        return asdict(self)


def _streams(seed):
    root = np.random.SeedSequence(seed)
    geometry, photons = root.spawn(2)
    return geometry, photons


def _generator(seq):
    return np.random.Generator(np.random.Philox(seq))


def draw_rate_distribution(cfg: EnsembleSimConfig, p: QuenchParams):
    """Total decay rate (MHz) of every emitter, ``k0 + A exp(-alpha r_i)``."""
    n = int(cfg.n_emitters)
    if cfg.density == 0:
        return np.full(n, float(p.k0))
    geometry, _ = _streams(cfg.seed)
    r = sample_nn_distances(cfg.density, n, rng=_generator(geometry))
    return p.k0 + p.A * np.exp(-p.alpha * r)


def _emitter_weights(rates_mhz, cfg):
    k = rates_mhz * 1e-3
    in_window = -np.expm1(-k * cfg.t_max)
    per_pulse = -np.expm1(-k * cfg.rep_period)
    w = in_window / (per_pulse * k)
    return w / w.sum(), k, in_window


def _chunk_histogram(seq, n, cdf, k, in_window, cfg):
    rng = _generator(seq)
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    np.minimum(idx, cdf.size - 1, out=idx)
    u = rng.random(n)
    t = -np.log1p(-u * in_window[idx]) / k[idx]
    bins = np.minimum((t / cfg.bin_width).astype(np.int64), cfg.n_bins - 1)
    return np.bincount(bins, minlength=cfg.n_bins)


def simulate_from_rates(rates, cfg: EnsembleSimConfig, n_jobs=1) -> DecayHistogram:
    """Histogram ``cfg.total_photons`` photons from emitters with the given rates."""
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise InsufficientDataError("no emitters")
    if np.any(rates <= 0):
        raise ConfigError("emitter rates must be positive")
    w, k, in_window = _emitter_weights(rates, cfg)
    cdf = np.cumsum(w)
    total = int(cfg.total_photons)
    sizes = [CHUNK_PHOTONS] * (total // CHUNK_PHOTONS)
    if total % CHUNK_PHOTONS:
        sizes.append(total % CHUNK_PHOTONS)
    _, photon_root = _streams(cfg.seed)
    seqs = photon_root.spawn(len(sizes))

    def work(i):
        return _chunk_histogram(seqs[i], sizes[i], cdf, k, in_window, cfg)

    if n_jobs == 1 or len(sizes) == 1:
        parts = [work(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    counts = np.sum(parts, axis=0, dtype=np.int64)
    edges = np.arange(cfg.n_bins + 1) * cfg.bin_width
    meta = {
        "rep_period_ns": cfg.rep_period,
        "total_photons": total,
        "seed": cfg.seed,
        "density_nm3": cfg.density,
    }
    return DecayHistogram(edges, counts, meta)


def simulate_ensemble_decay(cfg: EnsembleSimConfig, p: QuenchParams, n_jobs=1) -> DecayHistogram:
    """Simulated ensemble decay histogram for donor density ``cfg.density``."""
    return simulate_from_rates(draw_rate_distribution(cfg, p), cfg, n_jobs=n_jobs)


def intensity_weighted_mean_lifetime(rates):
    """``sum(k^-2) / sum(k^-1)`` in ns for rates in MHz.

    This is the mean delay of the summed decay ``sum_i exp(-k_i t)``, the
    quantity a stretched-exponential average lifetime estimates.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise InsufficientDataError("no rates given")
    if np.any(rates <= 0):
        raise ValueError("rates must be positive")
    inv = 1000.0 / rates
    return float(np.sum(inv**2) / np.sum(inv))


def amplitude_weighted_mean_lifetime(rates):
    """Plain mean of the emitter lifetimes ``1000 / k_i`` (ns)."""
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise InsufficientDataError("no rates given")
    return float(np.mean(1000.0 / rates))
