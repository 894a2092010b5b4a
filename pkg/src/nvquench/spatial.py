"""Concentration/density conversion and nearest-neighbour distance statistics.

Nitrogen donors are modelled as an ideal Poisson point process of number
density ``rho`` (nm^-3).  The distance from an NV centre to its closest donor
then follows ``P(R <= r) = 1 - exp(-4/3 pi rho r^3)``.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import DomainError, InsufficientDataError
from .numopt import gamma_fn

#: Carbon lattice sites per nm^3 in diamond (1.76e23 cm^-3).
CARBON_SITE_DENSITY = 176.0

#: ``<r> * rho**(1/3)`` for a Poisson point process: (3 / 4 pi)^(1/3) Gamma(4/3).
NN_DISTANCE_COEFF = (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0) * float(gamma_fn(4.0 / 3.0))


def _nonneg(value, what):
    value = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(value)) or np.any(value < 0):
        raise DomainError(f"{what} must be finite and non-negative")
    return value


def _positive(value, what):
    value = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(value)) or np.any(value <= 0):
        raise DomainError(f"{what} must be finite and strictly positive")
    return value


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def ppm_to_density(ppm, carbon_density=CARBON_SITE_DENSITY):
    """Convert a concentration in ppm of carbon sites to defects per nm^3."""
    ppm = _nonneg(ppm, "concentration")
    return _out(ppm * (carbon_density * 1e-6))


def density_to_ppm(density, carbon_density=CARBON_SITE_DENSITY):
    """Inverse of :func:`ppm_to_density`."""
    density = _nonneg(density, "density")
    return _out(density / (carbon_density * 1e-6))


def mean_nn_distance(density):
    """Mean distance (nm) to the nearest donor for number density ``density`` (nm^-3).

    Raises
    ------
    DomainError
        For ``density <= 0``, where the distance diverges.
    """
    density = _positive(density, "density")
    return _out(NN_DISTANCE_COEFF * density ** (-1.0 / 3.0))


def nn_distance_cdf(density, r):
    """Probability that the nearest donor lies within ``r`` nm."""
    density = _positive(density, "density")
    r = _nonneg(r, "distance")
    return _out(-np.expm1(-(4.0 / 3.0) * math.pi * density * r**3))


def nn_distance_pdf(density, r):
    density = _positive(density, "density")
    r = _nonneg(r, "distance")
    lam = (4.0 / 3.0) * math.pi * density
    return _out(3.0 * lam * r**2 * np.exp(-lam * r**3))


def nn_distance_quantile(density, q):
    """Inverse of :func:`nn_distance_cdf` for ``0 <= q < 1``."""
    density = _positive(density, "density")
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q >= 1)):
        raise DomainError("quantile level must lie in [0, 1)")
    return _out((-3.0 * np.log1p(-q) / (4.0 * math.pi * density)) ** (1.0 / 3.0))


def sample_nn_distances(density, n, seed=None, *, rng=None):
    """Draw ``n`` nearest-neighbour distances by inverse-CDF sampling.

    Parameters
    ----------
    density : float
        Donor number density in nm^-3.
    n : int
        Number of draws.
    seed : int, optional
        Seed for a counter-based Philox generator; ignored when ``rng`` is given.
    rng : numpy.random.Generator, optional
        Generator to draw from (used by the simulator's sub-streams).

    Returns
    -------
    ndarray of shape (n,)
    """
    density = float(_positive(density, "density"))
    if int(n) < 1:
        raise InsufficientDataError("at least one sample must be requested")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(seed))
    u = rng.random(int(n))
    return (-3.0 * np.log1p(-u) / (4.0 * math.pi * density)) ** (1.0 / 3.0)
