"""Per-sample tunnelling rates and the weighted exponential fit against donor distance."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from .exceptions import DegenerateFitError, InconsistentInputError, InsufficientDataError
from .numopt import EXP_DECAY, FitResult, fit_nonlinear_weighted
from .quench import CLAMP_TOLERANCE, QuenchParams, relative_qy, tunnel_rate_from_lifetime
from .spatial import mean_nn_distance, ppm_to_density

MIN_SAMPLES = 3


@dataclass
class SampleRecord:
    """One diamond sample or growth sector.

    Primary fields are measured; ``k_tunnel``, ``epsilon_rel`` and
    ``mean_distance`` (with errors) are derived from them by :meth:`derive`.
    """

    id: str
    rho_n: float
    rho_n_err: float
    tau_bar: float
    tau_bar_err: float
    rho_nv: Optional[float] = None
    rho_nv_err: Optional[float] = None
    brightness: Optional[float] = None
    brightness_err: Optional[float] = None
    k_tunnel: float = float("nan")
    k_tunnel_err: float = float("nan")
    epsilon_rel: float = float("nan")
    epsilon_rel_err: float = float("nan")
    mean_distance: float = float("nan")
    mean_distance_err: float = float("nan")

    def __post_init__(self):
        for name in ("rho_n_err", "tau_bar_err", "rho_nv_err", "brightness_err"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def derive(cls, id, rho_n, rho_n_err, tau_bar, tau_bar_err, k0=72.0,
               tolerance=CLAMP_TOLERANCE, carbon_density=None, **extra):
        rec = cls(id, rho_n, rho_n_err, tau_bar, tau_bar_err, **extra)
        rec._fill(k0, tolerance, carbon_density)
        return rec

    def _fill(self, k0, tolerance, carbon_density=None):
        kw = {} if carbon_density is None else {"carbon_density": carbon_density}
        self.k_tunnel = float(tunnel_rate_from_lifetime(self.tau_bar, k0, tolerance))
        self.k_tunnel_err = 1000.0 * self.tau_bar_err / self.tau_bar**2
        self.epsilon_rel = float(relative_qy(k0, self.k_tunnel))
        self.epsilon_rel_err = k0 * self.tau_bar_err / 1000.0
        density = ppm_to_density(self.rho_n, **kw)
        self.mean_distance = float(mean_nn_distance(density))
        self.mean_distance_err = self.mean_distance * self.rho_n_err / (3.0 * self.rho_n)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data, k0=72.0, tolerance=CLAMP_TOLERANCE, check=True):
        """Load a record; derived fields present in ``data`` must match recomputation.

        Raises
        ------
        InconsistentInputError
            If a stored derived value differs from the recomputed one by more
            than its stored uncertainty.
        """
        rec = cls(**data)
        fresh = cls(**{k: data[k] for k in ("id", "rho_n", "rho_n_err", "tau_bar", "tau_bar_err")})
        fresh._fill(k0, tolerance)
        if check:
            for name in ("k_tunnel", "epsilon_rel", "mean_distance"):
                stored = data.get(name)
                if stored is None or (isinstance(stored, float) and math.isnan(stored)):
                    continue
                allowed = max(float(data.get(name + "_err") or 0.0), 1e-9 * max(abs(stored), 1.0))
                if abs(stored - getattr(fresh, name)) > allowed:
                    raise InconsistentInputError(
                        f"sample {rec.id}: stored {name}={stored} disagrees with recomputed "
                        f"{getattr(fresh, name):.6g}"
                    )
        for name in ("k_tunnel", "k_tunnel_err", "epsilon_rel", "epsilon_rel_err",
                     "mean_distance", "mean_distance_err"):
            setattr(rec, name, getattr(fresh, name))
        return rec


def _initial_exp_guess(r, k, sigma):
    pos = k > 0
    if pos.sum() < 2:
        raise DegenerateFitError("fewer than two non-zero tunnelling rates; A and alpha are unidentifiable")
    slope, icpt = np.polyfit(r[pos], np.log(k[pos]), 1, w=k[pos] / sigma[pos])
    return np.array([math.exp(icpt), max(-slope, 1e-3)])


def fit_tunnelling_rates(r, k, sigma) -> FitResult:
    """Fit ``k = A exp(-alpha r)`` with weights ``1 / sigma**2``.

    Raises
    ------
    InsufficientDataError
        With fewer than three points.
    DegenerateFitError
        If the rates carry no decay information (e.g. all zero).
    """
    r = np.asarray(r, dtype=float)
    k = np.asarray(k, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if r.size < MIN_SAMPLES:
        raise InsufficientDataError(f"at least {MIN_SAMPLES} samples are needed, got {r.size}")
    if np.all(k == 0):
        raise DegenerateFitError("all tunnelling rates are zero; A is unidentifiable")
    init = _initial_exp_guess(r, k, sigma)
    return fit_nonlinear_weighted(EXP_DECAY, r, k, sigma, init, lower=[0.0, 0.0])


def fit_samples(records, k0=72.0):
    """Fit the tunnelling model to sample records; returns (QuenchParams, FitResult, used records)."""
    used = [rec for rec in records if rec.tau_bar_err > 0 and rec.rho_n > 0]
    if len(used) < MIN_SAMPLES:
        raise InsufficientDataError(
            f"at least {MIN_SAMPLES} usable samples (rho_n > 0, tau_err > 0) are needed, got {len(used)}"
        )
    r = np.array([rec.mean_distance for rec in used])
    k = np.array([rec.k_tunnel for rec in used])
    s = np.array([rec.k_tunnel_err for rec in used])
    res = fit_tunnelling_rates(r, k, s)
    (A, alpha), (A_err, alpha_err) = res.parameters, res.errors
    params = QuenchParams(k0=k0, A=float(A), alpha=float(alpha), A_err=float(A_err), alpha_err=float(alpha_err))
    return params, res, used


class TunnellingRateRegressor(RegressorMixin, BaseEstimator):
    """Exponential decay of tunnelling rate with donor distance.

    ``fit(X, y, sample_weight)`` takes distances (nm), rates (MHz) and weights
    ``1 / sigma**2``; without weights all points count equally.
    """

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
        r = X[:, 0] if X.ndim == 2 else X
        if sample_weight is None:
            sigma = np.ones_like(y)
        else:
            sample_weight = np.asarray(sample_weight, dtype=float)
            if np.any(sample_weight <= 0):
                raise ValueError("sample weights must be positive")
            sigma = 1.0 / np.sqrt(sample_weight)
        self.fit_ = fit_tunnelling_rates(r, y, sigma)
        self.A_, self.alpha_ = map(float, self.fit_.parameters)
        self.A_err_, self.alpha_err_ = map(float, self.fit_.errors)
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = np.asarray(X, dtype=float)
        r = X[:, 0] if X.ndim == 2 else X
        return EXP_DECAY(r, self.fit_.parameters)
