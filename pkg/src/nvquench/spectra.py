"""Absorption-based concentration calibration, NV0/NV- emission unmixing and brightness."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DomainError, InsufficientDataError, RangeError
from .numopt import fit_linear

AXIS_KINDS = ("wavelength_nm", "wavenumber_cm-1")

NV0_ZPL_NM = 575.0
NVM_ZPL_NM = 638.0

FTIR_PEAK_CM = 1130.0
FTIR_COEFF = 25.0
FTIR_COEFF_ERR = 2.0
FTIR_BASELINE_WINDOWS = ((1000.0, 1020.0), (1380.0, 1400.0))

NV_ABSORPTION_NM = 532.0


class DegenerateSeparationWarning(UserWarning):
    """Both unmixed components peak nearest the same zero-phonon line."""


@dataclass
class SpectrumSeries:
    axis_kind: str
    axis: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.axis_kind not in AXIS_KINDS:
            raise ValueError(f"axis_kind must be one of {AXIS_KINDS}")
        self.axis = np.asarray(self.axis, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.axis.ndim != 1 or self.axis.shape != self.values.shape:
            raise ValueError("axis and values must be 1-D arrays of equal length")
        if self.axis.size < 2:
            raise InsufficientDataError("a spectrum needs at least two points")
        d = np.diff(self.axis)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("axis must be strictly monotone")
        if not (np.all(np.isfinite(self.axis)) and np.all(np.isfinite(self.values))):
            raise ValueError("axis and values must be finite")

    def sorted(self):
        """Copy with an increasing axis."""
        if self.axis[0] < self.axis[-1]:
            return self
        return SpectrumSeries(self.axis_kind, self.axis[::-1], self.values[::-1], self.label)

    def covers(self, x):
        return self.axis.min() <= x <= self.axis.max()

    def value_at(self, x):
        if not self.covers(x):
            raise RangeError(f"axis [{self.axis.min():g}, {self.axis.max():g}] does not cover {x:g}")
        s = self.sorted()
        return float(np.interp(x, s.axis, s.values))

    def resample(self, grid):
        """Linear interpolation onto ``grid`` (which must lie inside the axis)."""
        grid = np.asarray(grid, dtype=float)
        if grid.min() < self.axis.min() or grid.max() > self.axis.max():
            raise RangeError("resampling grid extends beyond the spectrum axis")
        s = self.sorted()
        return SpectrumSeries(self.axis_kind, grid, np.interp(grid, s.axis, s.values), self.label)


def _require_kind(s, kind):
    if s.axis_kind != kind:
        raise ValueError(f"expected a {kind} spectrum, got {s.axis_kind}")


def n_concentration_from_ftir(s: SpectrumSeries, windows=FTIR_BASELINE_WINDOWS):
    """Single substitutional nitrogen concentration (ppm) from an FTIR spectrum.

    A straight baseline is fitted to the points inside the flank ``windows``
    and subtracted; the remaining absorption coefficient at 1130 cm^-1 is
    multiplied by 25 +/- 2 ppm cm.

    Returns
    -------
    (ppm, ppm_err)
    """
    _require_kind(s, "wavenumber_cm-1")
    if not s.covers(FTIR_PEAK_CM):
        raise RangeError(f"spectrum does not cover {FTIR_PEAK_CM:g} cm^-1")
    mask = np.zeros(s.axis.size, dtype=bool)
    for lo, hi in windows:
        mask |= (s.axis >= lo) & (s.axis <= hi)
    if np.unique(s.axis[mask]).size < 2:
        raise RangeError("baseline windows contain fewer than two spectrum points")
    base = fit_linear(s.axis[mask], s.values[mask])
    slope, icpt = base.parameters
    mu = s.value_at(FTIR_PEAK_CM) - (slope * FTIR_PEAK_CM + icpt)
    g = np.array([FTIR_PEAK_CM, 1.0])
    baseline_var = float(base.reduced_chi2) + float(g @ base.covariance @ g)
    ppm = FTIR_COEFF * mu
    err = np.hypot(FTIR_COEFF_ERR * mu, FTIR_COEFF * np.sqrt(max(baseline_var, 0.0)))
    return float(ppm), float(err)


def nv_concentration_from_vis(s: SpectrumSeries, sigma_nv, rho_c):
    """NV- concentration (ppm) from the absorption coefficient at 532 nm.

    ``rho_c`` (ppm cm^3) and ``sigma_nv`` (cm^2) are calibration inputs.
    """
    _require_kind(s, "wavelength_nm")
    if not (np.isfinite(sigma_nv) and sigma_nv > 0):
        raise DomainError("sigma_nv must be > 0")
    if not np.isfinite(rho_c):
        raise DomainError("rho_c must be finite")
    return rho_c * s.value_at(NV_ABSORPTION_NM) / sigma_nv


def _gaussian_templates(grid, width=20.0):
    H = np.vstack([np.exp(-0.5 * ((grid - c) / width) ** 2) for c in (NV0_ZPL_NM, NVM_ZPL_NM)])
    return H / np.trapezoid(H, grid, axis=1)[:, None]


def _widen(W, H, thr=1e-3):
    # Among exact-equivalent factorisations pick the most separated pair:
    # subtract the largest multiple of each component from the other that
    # keeps it non-negative.  W @ H is unchanged and W stays non-negative.
    h0, h1 = H
    m1 = h1 > thr * h1.max()
    m0 = h0 > thr * h0.max()
    a = max(float(np.min(h0[m1] / h1[m1])), 0.0) if m1.any() else 0.0
    b = max(float(np.min(h1[m0] / h0[m0])), 0.0) if m0.any() else 0.0
    if a * b >= 1.0:
        return W, H
    M = np.array([[1.0, -a], [-b, 1.0]])
    Minv = np.array([[1.0, a], [b, 1.0]]) / (1.0 - a * b)
    return W @ Minv, np.clip(M @ H, 0.0, None)


def _cone_edges(Xs):
    # Edges of the non-negative cone inside the top-2 right singular subspace:
    # the most separated pair whose span holds the best rank-2 approximation.
    _, _, Vt = np.linalg.svd(Xs, full_matrices=False)
    v1, v2 = Vt[0], Vt[1]
    if v1.sum() < 0:
        v1 = -v1
    R = np.hypot(v1, v2)
    keep = R > 1e-9 * R.max()
    phi = np.arctan2(v2[keep], v1[keep])
    if np.any(np.abs(phi) > 0.5 * np.pi):
        return None
    lo = float(np.max(phi)) - 0.5 * np.pi
    hi = float(np.min(phi)) + 0.5 * np.pi
    H = np.vstack([np.cos(t) * v1 + np.sin(t) * v2 for t in (lo, hi)])
    H = np.clip(H, 0.0, None)
    H /= np.maximum(H.max(axis=1, keepdims=True), np.finfo(float).tiny)
    return H


def _polish(Xs, W, H, history):
    # accept the cone factorisation only if it fits at least as well
    Hc = _cone_edges(Xs)
    if Hc is None:
        return W, H
    Wc = np.array([nnls(Hc.T, x)[0] for x in Xs])
    old = float(np.sum((Xs - W @ H) ** 2))
    new = float(np.sum((Xs - Wc @ Hc) ** 2))
    if new > old:
        return W, H
    if history is not None:
        history.append(new)
    return Wc, Hc


def _nmf_rank2(X, H, max_iter, tol, inner, history):
    W = np.array([nnls(H.T, x)[0] for x in X])
    # zeros never move under multiplicative updates
    W = np.maximum(W, 1e-2 * W.max(axis=1, keepdims=True) + np.finfo(float).tiny)
    tiny = np.finfo(float).tiny
    obj = float(np.sum((X - W @ H) ** 2))
    if history is not None:
        history.append(obj)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        XHt = X @ H.T
        HHt = H @ H.T
        for _ in range(inner):
            W *= XHt / (W @ HHt + tiny)
        WtX = W.T @ X
        WtW = W.T @ W
        for _ in range(inner):
            H *= WtX / (WtW @ H + tiny)
        new = float(np.sum((X - W @ H) ** 2))
        if history is not None:
            history.append(new)
        done = abs(obj - new) <= tol * obj
        obj = new
        if done or obj == 0.0:
            break
    return W, H, n_iter


@dataclass
class UnmixResult:
    """Rank-2 decomposition of emission spectra.

    ``components`` rows are (NV0-like, NV--like) with unit area; ``weights``
    has one (NV0, NV-) row per input spectrum.
    """

    axis: np.ndarray
    components: np.ndarray
    weights: np.ndarray
    nv0_fraction: np.ndarray
    residual_norm: float
    n_iter: int = 0
    objective: list | None = None

    def to_dict(self):
        return {
            "nv0_fraction": self.nv0_fraction.tolist(),
            "weights": self.weights.tolist(),
            "residual_norm": self.residual_norm,
            "n_iter": self.n_iter,
        }


def _stack(spectra):
    spectra = list(spectra)
    if len(spectra) < 2:
        raise InsufficientDataError("unmixing needs at least two spectra")
    ref = spectra[0].sorted()
    for s in spectra:
        _require_kind(s, "wavelength_nm")
    X = []
    for s in spectra:
        s = s.sorted()
        if s.axis.shape != ref.axis.shape or not np.allclose(s.axis, ref.axis, rtol=0, atol=1e-9):
            raise ValueError("spectra must share a common wavelength grid (see SpectrumSeries.resample)")
        X.append(s.values)
    return ref.axis, np.vstack(X)


def unmix_matrix(axis, X, *, max_iter=5000, tol=1e-8, inner=10, init_width=20.0, track=False):
    """Rank-2 NNMF of the rows of ``X`` sampled on wavelength ``axis`` (nm)."""
    axis = np.asarray(axis, dtype=float)
    X = np.asarray(X, dtype=float)
    if np.any(X < 0):
        raise DomainError("emission spectra must be non-negative")
    if not np.any(X > 0):
        raise InsufficientDataError("all spectra are zero")
    # per-row normalisation makes the fractions independent of spectrum scale
    scale = X.max(axis=1, keepdims=True)
    scale = np.where(scale > 0, scale, 1.0)
    Xs = X / scale
    H0 = _gaussian_templates(axis, init_width)
    history = [] if track else None
    sv = np.linalg.svd(Xs, compute_uv=False)
    if sv.size < 2 or sv[1] <= 1e-10 * sv[0]:
        # rank one: any split is arbitrary, so the whole signal goes to the
        # component whose zero-phonon line dominates and the other keeps its seed
        h = Xs.sum(axis=0)
        w = Xs @ h / (h @ h)
        nv0 = np.interp(NV0_ZPL_NM, axis, h) >= np.interp(NVM_ZPL_NM, axis, h)
        H = H0.copy()
        H[0 if nv0 else 1] = h
        W = np.zeros((Xs.shape[0], 2))
        W[:, 0 if nv0 else 1] = w
        n_iter = 0
        if history is not None:
            history.append(float(np.sum((Xs - W @ H) ** 2)))
    else:
        W, H, n_iter = _nmf_rank2(Xs, H0, max_iter, tol, inner, history)
        W, H = _widen(W, H)
        W, H = _polish(Xs, W, H, history)
    area = np.trapezoid(H, axis, axis=1)
    area = np.where(area > 0, area, 1.0)
    H = H / area[:, None]
    W = W * area * scale

    # label by zero-phonon line: NV0 has the larger 575/638 intensity ratio
    at = np.vstack([np.interp([NV0_ZPL_NM, NVM_ZPL_NM], axis, h) for h in H])
    ratio = at[:, 0] / np.maximum(at[:, 1], np.finfo(float).tiny)
    if ratio[1] > ratio[0]:
        H = H[::-1]
        W = W[:, ::-1]
    peaks = axis[np.argmax(H, axis=1)]
    nearest = [NV0_ZPL_NM if abs(p - NV0_ZPL_NM) < abs(p - NVM_ZPL_NM) else NVM_ZPL_NM for p in peaks]
    if nearest[0] == nearest[1]:
        warnings.warn(
            f"both components peak nearest {nearest[0]:g} nm; NV0/NV- separation is unreliable",
            DegenerateSeparationWarning,
            stacklevel=2,
        )
    total = W.sum(axis=1)
    frac = np.divide(W[:, 0], total, out=np.zeros_like(total), where=total > 0)
    resid = float(np.linalg.norm(X - W @ H))
    return UnmixResult(axis, H, W, np.clip(frac, 0.0, 1.0), resid, n_iter, history)


def nnmf_unmix(spectra, **kw) -> UnmixResult:
    """Separate NV0 and NV- emission in a set of spectra on a common wavelength grid.

    Multiplicative-update NNMF (Frobenius loss) seeded with Gaussians at the
    575 and 638 nm zero-phonon lines.  The pair is then widened to the most
    separated non-negative factorisation with the same product, and replaced
    by the edges of the non-negative cone in the leading rank-2 subspace when
    that fits at least as well.  Rows are scaled to unit maximum first, so
    the fractions do not depend on the scale of each spectrum.  Components
    have unit area, so ``nv0_fraction`` is the NV0 share of emitted intensity.
    """
    axis, X = _stack(spectra)
    return unmix_matrix(axis, X, **kw)


def nv0_fraction_filtered(u: UnmixResult, longpass_nm):
    """NV0 share of the intensity transmitted by a long-pass filter at ``longpass_nm``."""
    axis = u.axis
    if not (axis.min() <= longpass_nm <= axis.max()):
        raise RangeError("long-pass edge outside the spectrum axis")
    mask = axis >= longpass_nm
    if mask.sum() < 2:
        raise RangeError("long-pass edge leaves fewer than two spectrum points")
    passed = np.trapezoid(u.components[:, mask], axis[mask], axis=1)
    w = u.weights * passed
    total = w.sum(axis=1)
    return np.divide(w[:, 0], total, out=np.zeros_like(total), where=total > 0)


def brightness_fit(powers, intensities):
    """Slope (counts/s/uW) of emission intensity against excitation power.

    Returns
    -------
    (slope, slope_err)
    """
    powers = np.asarray(powers, dtype=float)
    intensities = np.asarray(intensities, dtype=float)
    if powers.size < 3:
        raise InsufficientDataError("brightness needs at least three power points")
    res = fit_linear(powers, intensities)
    return float(res.parameters[0]), float(res.errors[0])


class NNMFUnmixer(TransformerMixin, BaseEstimator):
    """Rank-2 NV0/NV- unmixing as a transformer.

    ``fit(X, wavelengths=...)`` learns the two component spectra from the rows
    of ``X``; ``transform`` returns the non-negative (NV0, NV-) weights of new
    spectra on the same grid.

    Parameters
    ----------
    max_iter : int, default=5000
    tol : float, default=1e-8
        Relative change in the residual at which iteration stops.
    init_width : float, default=20.0
        Width (nm) of the Gaussian seeds at the zero-phonon lines.
    """

    def __init__(self, max_iter=5000, tol=1e-8, init_width=20.0):
        self.max_iter = max_iter
        self.tol = tol
        self.init_width = init_width

    def fit(self, X, y=None, wavelengths=None):
        X = check_array(X, ensure_min_samples=2)
        if wavelengths is None:
            raise ValueError("wavelengths must be given")
        wavelengths = np.asarray(wavelengths, dtype=float)
        if wavelengths.shape != (X.shape[1],):
            raise ValueError("wavelengths must match the number of columns of X")
        self.result_ = unmix_matrix(wavelengths, X, max_iter=self.max_iter, tol=self.tol,
                                    init_width=self.init_width)
        self.wavelengths_ = wavelengths
        self.components_ = self.result_.components
        self.n_iter_ = self.result_.n_iter
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X)
        if np.any(X < 0):
            raise DomainError("emission spectra must be non-negative")
        return np.array([nnls(self.components_.T, x)[0] for x in X])

    def nv0_fraction(self, X, longpass_nm=None):
        W = self.transform(X)
        if longpass_nm is not None:
            mask = self.wavelengths_ >= longpass_nm
            W = W * np.trapezoid(self.components_[:, mask], self.wavelengths_[mask], axis=1)
        total = W.sum(axis=1)
        return np.divide(W[:, 0], total, out=np.zeros_like(total), where=total > 0)
