"""Stretched-exponential analysis of TCSPC decay histograms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InconsistentInputError, InsufficientDataError
from .numopt import STRETCHED_EXP, digamma_fn, fit_nonlinear_weighted, lgamma_fn
from .quench import CLAMP_TOLERANCE, relative_qy, tunnel_rate_from_lifetime

MIN_PEAK_COUNTS = 100
MIN_BINS = 10


@dataclass
class DecayHistogram:
    """Photon arrival-time histogram.

    ``bin_edges`` has one more entry than ``counts`` and must be uniformly
    spaced.  Counts are normally integers; non-negative expected values are
    accepted too so that noiseless model curves can be analysed.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.counts.dtype.kind not in "iuf":
            self.counts = self.counts.astype(float)
        if self.bin_edges.ndim != 1 or self.counts.ndim != 1:
            raise ValueError("bin_edges and counts must be 1-D")
        if self.bin_edges.size != self.counts.size + 1:
            raise ValueError("bin_edges must have exactly one more entry than counts")
        if self.counts.size < MIN_BINS:
            raise InsufficientDataError(f"a decay histogram needs at least {MIN_BINS} bins")
        widths = np.diff(self.bin_edges)
        if np.any(widths <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if not np.allclose(widths, widths[0], rtol=1e-6, atol=0):
            raise ValueError("bins must have uniform width")
        if np.any(~np.isfinite(self.counts)) or np.any(self.counts < 0):
            raise ValueError("counts must be finite and non-negative")

    @classmethod
    def from_left_edges(cls, starts, counts, bin_width=None, metadata=None):
        starts = np.asarray(starts, dtype=float)
        if bin_width is None:
            if starts.size < 2:
                raise InsufficientDataError("cannot infer the bin width from a single bin")
            bin_width = float(np.median(np.diff(starts)))
        edges = np.append(starts, starts[-1] + bin_width)
        return cls(edges, counts, dict(metadata or {}))

    @property
    def bin_width(self):
        return float(self.bin_edges[1] - self.bin_edges[0])

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def total(self):
        return self.counts.sum()


@dataclass
class StretchedExpFit:
    """Fitted ``I0 exp(-((t - t_origin) / tau0) ** beta) + background``."""

    I0: float
    tau0: float
    beta: float
    background: float
    covariance: np.ndarray
    reduced_chi2: float
    converged: bool
    t_origin: float = 0.0
    n_bins: int = 0
    iterations: int = 0

    @property
    def parameters(self):
        return np.array([self.I0, self.tau0, self.beta, self.background])

    @property
    def errors(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def curve(self, t):
        t = np.clip(np.asarray(t, dtype=float) - self.t_origin, 0.0, None)
        return STRETCHED_EXP(t, self.parameters)

    def to_dict(self):
        tau_bar, tau_bar_err = average_lifetime_with_error(self)
        err = self.errors
        return {
            "I0": self.I0, "I0_err": float(err[0]),
            "tau0": self.tau0, "tau0_err": float(err[1]),
            "beta": self.beta, "beta_err": float(err[2]),
            "background": self.background, "background_err": float(err[3]),
            "covariance": self.covariance.tolist(),
            "reduced_chi2": self.reduced_chi2,
            "converged": self.converged,
            "t_origin": self.t_origin,
            "tau_bar": tau_bar,
            "tau_bar_err": tau_bar_err,
        }


def _initial_guess(t, y):
    tail = max(5, y.size // 20)
    bg = max(float(np.mean(y[-tail:])), 0.0)
    i0 = max(float(y[0]) - bg, 1.0)
    below = np.flatnonzero(y - bg < i0 / np.e)
    tau0 = float(t[below[0]]) if below.size else float(t[-1]) / 2.0
    return np.array([i0, max(tau0, t[1] if t.size > 1 else 1e-3), 0.9, bg])


def fit_stretched_exp(hist: DecayHistogram, *, fit_background=True, min_peak=MIN_PEAK_COUNTS,
                      max_iter=200) -> StretchedExpFit:
    """Fit a stretched exponential to the decay following the histogram peak.

    The window runs from the peak bin to the last bin, with time measured from
    the peak bin's left edge and the model evaluated at bin centres.  Points
    are weighted with Poisson errors ``sqrt(max(count, 1))``.  ``beta`` is
    bounded to ``(0, 1]`` and the background to ``>= 0``.

    Raises
    ------
    InsufficientDataError
        If the peak holds fewer than ``min_peak`` counts or the window is too short.
    """
    counts = np.asarray(hist.counts, dtype=float)
    peak = int(np.argmax(counts))
    if counts[peak] < min_peak:
        raise InsufficientDataError(f"histogram peak has {counts[peak]:g} counts (< {min_peak})")
    y = counts[peak:]
    if y.size < 5:
        raise InsufficientDataError("fewer than 5 bins after the peak")
    origin = float(hist.bin_edges[peak])
    t = hist.centers[peak:] - origin
    sigma = np.sqrt(np.maximum(y, 1.0))
    init = _initial_guess(t, y)
    fixed = None
    if not fit_background:
        init[3] = 0.0
        fixed = [False, False, False, True]
    res = fit_nonlinear_weighted(
        STRETCHED_EXP, t, y, sigma, init,
        lower=[0.0, 1e-9, 1e-3, 0.0], upper=[np.inf, np.inf, 1.0, np.inf],
        fixed=fixed, max_iter=max_iter,
    )
    i0, tau0, beta, bg = map(float, res.parameters)
    return StretchedExpFit(
        I0=i0, tau0=tau0, beta=beta, background=bg, covariance=res.covariance,
        reduced_chi2=float(res.reduced_chi2), converged=bool(res.converged),
        t_origin=origin, n_bins=int(y.size), iterations=res.iterations,
    )


def stretched_mean_lifetime(tau0, beta):
    """Intensity-weighted mean time ``tau0 Gamma(2/beta) / Gamma(1/beta)``."""
    return float(tau0 * np.exp(lgamma_fn(2.0 / beta) - lgamma_fn(1.0 / beta)))


def average_lifetime(fit: StretchedExpFit) -> float:
    """Average lifetime (ns) of the rate distribution behind a stretched-exponential fit."""
    return stretched_mean_lifetime(fit.tau0, fit.beta)


def average_lifetime_with_error(fit: StretchedExpFit):
    """Average lifetime and its linearised uncertainty from the fit covariance."""
    tau_bar = average_lifetime(fit)
    b = fit.beta
    d_tau0 = tau_bar / fit.tau0
    d_beta = tau_bar * (digamma_fn(1.0 / b) - 2.0 * digamma_fn(2.0 / b)) / b**2
    g = np.array([d_tau0, d_beta])
    cov = np.asarray(fit.covariance)[1:3, 1:3]
    return tau_bar, float(np.sqrt(max(g @ cov @ g, 0.0)))


def qy_from_lifetime(tau_bar, k0, tolerance=CLAMP_TOLERANCE):
    """Relative yield ``k0 * tau_bar / 1000`` clamped to 1 within ``tolerance`` (MHz).

    Raises
    ------
    InconsistentInputError
        If the implied yield exceeds 1 by more than the tolerance allows.
    """
    return relative_qy(k0, tunnel_rate_from_lifetime(tau_bar, k0, tolerance))


def amplitude_weighted_qy(rates, k0, tolerance=CLAMP_TOLERANCE):
    """Mean of ``k0 / k_i`` over emitters (photon-count relative yield)."""
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise InsufficientDataError("no emitter rates given")
    if np.any(rates < k0 - tolerance):
        raise InconsistentInputError("emitter decay rates below k0 beyond tolerance")
    return float(np.mean(np.minimum(k0 / rates, 1.0)))


def semi_dispersion(values):
    """Half the spread (max - min) of repeated measurements."""
    values = np.asarray(values, dtype=float)
    return float((values.max() - values.min()) / 2.0) if values.size else 0.0


class StretchedExpRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_stretched_exp`.

    ``X`` holds the left edges of uniformly spaced time bins (ns), ``y`` the
    counts.  After fitting, :meth:`predict` evaluates the fitted curve at the
    centres of the bins starting at ``X``.

    Parameters
    ----------
    fit_background : bool, default=True
    min_peak : int, default=100
    max_iter : int, default=200
    k0 : float, default=72.0
        Reference rate (MHz) used for ``epsilon_rel_``.
    """

    def __init__(self, fit_background=True, min_peak=MIN_PEAK_COUNTS, max_iter=200, k0=72.0):
        self.fit_background = fit_background
        self.min_peak = min_peak
        self.max_iter = max_iter
        self.k0 = k0

    @staticmethod
    def _starts(X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("X must have a single column of bin start times")
            X = X[:, 0]
        return X

    def fit(self, X, y):
        starts = self._starts(X)
        y = np.asarray(y, dtype=float)
        if starts.shape != y.shape:
            raise ValueError("X and y must have matching lengths")
        hist = DecayHistogram.from_left_edges(starts, y)
        self.bin_width_ = hist.bin_width
        self.fit_ = fit_stretched_exp(hist, fit_background=self.fit_background,
                                      min_peak=self.min_peak, max_iter=self.max_iter)
        self.I0_, self.tau0_, self.beta_, self.background_ = self.fit_.parameters
        self.tau_bar_, self.tau_bar_err_ = average_lifetime_with_error(self.fit_)
        self.epsilon_rel_ = float(self.k0 * self.tau_bar_ / 1000.0)
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        starts = self._starts(X)
        return self.fit_.curve(starts + 0.5 * self.bin_width_)
