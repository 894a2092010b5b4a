"""Tunnelling-quench rate model.

Rates are in MHz, times in ns and densities in nm^-3.  The nitrogen-independent
decay rate ``k0`` lumps the radiative and intrinsic non-radiative channels; a
donor at distance ``r`` adds a tunnelling rate ``A exp(-alpha r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, InconsistentInputError
from .spatial import NN_DISTANCE_COEFF, density_to_ppm

#: Default tolerance (MHz) for clamping slightly negative tunnelling rates.
CLAMP_TOLERANCE = 0.5

DISCREPANCY_NOTE = (
    "With the quoted best-fit parameters (k0=72.0 MHz, A=185 MHz, alpha=0.53 nm^-1) "
    "the yield model is self-consistent only with a 90% threshold near 4.7 ppm; the "
    "often-quoted 35.5 ppm (6.2e-3 nm^-3) threshold evaluates to a relative yield of "
    "about 0.66 under the same parameters and is not reproduced."
)


@dataclass(frozen=True)
class QuenchParams:
    """Constants of the quench model with their one-sigma uncertainties.

    Attributes
    ----------
    k0 : float
        Nitrogen-independent decay rate (MHz).
    A : float
        Tunnelling rate extrapolated to zero donor distance (MHz).
    alpha : float
        Exponential decay constant of the tunnelling rate (nm^-1).
    """

    k0: float = 72.0
    A: float = 185.0
    alpha: float = 0.53
    k0_err: float = 0.0
    A_err: float = 0.0
    alpha_err: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.k0) and self.k0 > 0):
            raise DomainError("k0 must be > 0")
        if not (math.isfinite(self.A) and self.A >= 0):
            raise DomainError("A must be >= 0")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError("alpha must be > 0")
        if min(self.k0_err, self.A_err, self.alpha_err) < 0:
            raise DomainError("uncertainties must be >= 0")

    @property
    def alpha_rho(self):
        """Coefficient of ``rho**(-1/3)`` in the yield model (nm^-1)."""
        return self.alpha * NN_DISTANCE_COEFF

    @property
    def alpha_rho_err(self):
        return self.alpha_err * NN_DISTANCE_COEFF

    @classmethod
    def from_alpha_rho(cls, k0, A, alpha_rho, **errs):
        return cls(k0=k0, A=A, alpha=alpha_rho / NN_DISTANCE_COEFF, **errs)

    @classmethod
    def published(cls):
        """Best-fit values reported for HPHT/CVD NV ensembles, with uncertainties."""
        return cls(k0=72.0, A=185.0, alpha=0.53, k0_err=0.4, A_err=87.0, alpha_err=0.12)

    def is_published_set(self, rtol=1e-3):
        ref = QuenchParams.published()
        return all(
            math.isclose(a, b, rel_tol=rtol)
            for a, b in ((self.k0, ref.k0), (self.A, ref.A), (self.alpha, ref.alpha))
        )

    def to_dict(self):
        return {
            "k0": self.k0, "A": self.A, "alpha": self.alpha,
            "k0_err": self.k0_err, "A_err": self.A_err, "alpha_err": self.alpha_err,
        }


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def lifetime_from_rates(p: QuenchParams, k_tunnel):
    """Average lifetime (ns) from the total decay rate ``k0 + k_tunnel`` (MHz)."""
    total = p.k0 + np.asarray(k_tunnel, dtype=float)
    if np.any(total <= 0):
        raise DomainError("total decay rate must be positive")
    return _out(1000.0 / total)


def tunnel_rate_from_lifetime(tau_bar, k0, tolerance=CLAMP_TOLERANCE):
    """Tunnelling rate (MHz) implied by an average lifetime ``tau_bar`` (ns).

    Values in ``[-tolerance, 0)`` are clamped to zero.

    Raises
    ------
    InconsistentInputError
        If the lifetime exceeds ``1000 / k0`` by more than the tolerance allows.
    """
    tau_bar = np.asarray(tau_bar, dtype=float)
    if np.any(tau_bar <= 0) or k0 <= 0:
        raise DomainError("tau_bar and k0 must be positive")
    k = 1000.0 / tau_bar - k0
    if np.any(k < -tolerance):
        raise InconsistentInputError(
            f"lifetime longer than the low-nitrogen benchmark 1000/k0 = {1000.0 / k0:.4g} ns "
            f"beyond the {tolerance} MHz tolerance"
        )
    return _out(np.where(k < 0, 0.0, k))


def tunnel_rate_from_qy(epsilon_rel, k0):
    """Tunnelling rate (MHz) that produces relative yield ``epsilon_rel``."""
    eps = np.asarray(epsilon_rel, dtype=float)
    if np.any((eps <= 0) | (eps > 1)):
        raise DomainError("relative yield must lie in (0, 1]")
    return _out(k0 * (1.0 / eps - 1.0))


def tunnel_rate_at_distance(p: QuenchParams, r):
    """Tunnelling rate ``A exp(-alpha r)`` (MHz) for a donor at ``r`` nm."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("distance must be >= 0")
    return _out(p.A * np.exp(-p.alpha * r))


def relative_qy(k0, k_tunnel):
    """Relative quantum yield ``k0 / (k0 + k_tunnel)``."""
    k_tunnel = np.asarray(k_tunnel, dtype=float)
    if k0 <= 0 or np.any(k_tunnel < 0):
        raise DomainError("k0 must be > 0 and k_tunnel >= 0")
    return _out(k0 / (k0 + k_tunnel))


def _tunnel_term(p, density):
    with np.errstate(divide="ignore"):
        x = np.where(density > 0, density, 1.0) ** (-1.0 / 3.0)
    return np.where(density > 0, p.A * np.exp(-p.alpha_rho * x), 0.0), x


def relative_qy_model(p: QuenchParams, density):
    """Predicted relative yield at donor density ``density`` (nm^-3).

    The tunnelling term uses the mean nearest-donor distance, so the exponent
    is ``alpha_rho * density**(-1/3)``.  ``density = 0`` returns exactly 1.
    """
    density = np.asarray(density, dtype=float)
    if np.any(~np.isfinite(density)) or np.any(density < 0):
        raise DomainError("density must be finite and >= 0")
    term, _ = _tunnel_term(p, density)
    return _out(p.k0 / (p.k0 + term))


def relative_qy_model_err(p: QuenchParams, density):
    """Relative yield and its first-order uncertainty from ``p``'s errors.

    Returns
    -------
    (value, error)
    """
    density = np.asarray(density, dtype=float)
    eps = np.asarray(relative_qy_model(p, density))
    term, x = _tunnel_term(p, density)
    denom = (p.k0 + term) ** 2
    d_k0 = term / denom
    d_A = np.where(density > 0, -p.k0 * term / p.A / denom, 0.0) if p.A > 0 else np.zeros_like(eps)
    d_alpha = p.k0 * term * x * NN_DISTANCE_COEFF / denom
    err = np.sqrt((d_k0 * p.k0_err) ** 2 + (d_A * p.A_err) ** 2 + (d_alpha * p.alpha_err) ** 2)
    return _out(eps), _out(err)


def _bisect_density(p, target, tol=1e-15):
    # relative_qy_model is decreasing in density; search in log space
    lo, hi = -60.0, 20.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if relative_qy_model(p, math.exp(mid)) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return math.exp(0.5 * (lo + hi))


def max_density_for_qy(p: QuenchParams, target):
    """Largest donor density (nm^-3) that keeps the relative yield at ``target``.

    Solved in closed form and cross-checked against a bisection of
    :func:`relative_qy_model`.

    Raises
    ------
    DomainError
        If ``target`` is outside (0, 1) or below the infinite-density floor
        ``k0 / (k0 + A)``.
    """
    if not (0.0 < target < 1.0):
        raise DomainError("target relative yield must lie strictly between 0 and 1")
    floor = p.k0 / (p.k0 + p.A)
    if target <= floor:
        raise DomainError(
            f"target {target} is unreachable: the yield never falls below k0/(k0+A) = {floor:.4g}"
        )
    log_arg = math.log(p.A * target / (p.k0 * (1.0 - target)))
    density = (p.alpha_rho / log_arg) ** 3
    check = _bisect_density(p, target)
    if not math.isclose(density, check, rel_tol=1e-6):
        raise ArithmeticError(f"closed-form inversion {density} disagrees with bisection {check}")
    return density


def max_ppm_for_qy(p: QuenchParams, target, **kw):
    return density_to_ppm(max_density_for_qy(p, target), **kw)
