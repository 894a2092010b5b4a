"""Shared numerical machinery.

Gamma-family special functions (Lanczos approximation), a damped
Gauss-Newton (Levenberg-Marquardt) weighted least-squares solver with
simple box bounds, and ordinary linear regression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DomainError, InsufficientDataError, RankDeficiencyError

__all__ = [
    "gamma_fn",
    "lgamma_fn",
    "digamma_fn",
    "FitResult",
    "Model",
    "STRETCHED_EXP",
    "EXP_DECAY",
    "LINE",
    "fit_nonlinear_weighted",
    "fit_linear",
]

# Lanczos approximation, g = 7, 9 terms (relative error ~1e-15 for x > 0.5).
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise DomainError("gamma functions are only defined here for finite x > 0")
    return x


def _lanczos_terms(z):
    # z = x - 1 with x >= 1; returns (log of the series sum, t)
    k = np.arange(1, len(_LANCZOS_COEF))
    series = _LANCZOS_COEF[0] + np.sum(_LANCZOS_COEF[1:] / (z[..., None] + k), axis=-1)
    t = z + _LANCZOS_G + 0.5
    return series, t, k


def lgamma_fn(x):
    """Natural logarithm of the gamma function for ``x > 0``.

    Arguments below 1 are shifted up with ``Gamma(x) = Gamma(x + 1) / x`` so the
    Lanczos series is only ever evaluated where it is accurate.
    """
    x = _check_positive(x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    shift = np.where(x < 1.0, 1.0, 0.0)
    z = x + shift - 1.0
    series, t, _ = _lanczos_terms(z)
    out = _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(series)
    out = out - np.where(shift > 0, np.log(x), 0.0)
    return float(out[0]) if scalar else out


def gamma_fn(x):
    """Gamma function for ``x > 0``.

    Raises
    ------
    DomainError
        If any ``x <= 0``.
    """
    return np.exp(lgamma_fn(x))


def digamma_fn(x):
    """Logarithmic derivative of the gamma function, from the same Lanczos series."""
    x = _check_positive(x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    shift = np.where(x < 1.0, 1.0, 0.0)
    z = x + shift - 1.0
    series, t, k = _lanczos_terms(z)
    dseries = -np.sum(_LANCZOS_COEF[1:] / (z[..., None] + k) ** 2, axis=-1)
    out = np.log(t) + (z + 0.5) / t - 1.0 + dseries / series
    out = out - np.where(shift > 0, 1.0 / x, 0.0)
    return float(out[0]) if scalar else out


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``covariance`` is the inverse of the weighted normal matrix at the optimum
    (not rescaled by the reduced chi-square).  Parameters held fixed, either
    explicitly or because they ended on a bound, have zero rows and columns.
    """

    parameters: np.ndarray
    covariance: np.ndarray
    reduced_chi2: float
    iterations: int
    converged: bool
    chi2: float = float("nan")
    dof: int = 0
    names: tuple = ()
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def errors(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def as_dict(self):
        names = self.names or tuple(f"p{i}" for i in range(len(self.parameters)))
        return {
            "parameters": dict(zip(names, map(float, self.parameters))),
            "errors": dict(zip(names, map(float, self.errors))),
            "covariance": self.covariance.tolist(),
            "reduced_chi2": float(self.reduced_chi2),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


class Model:
    """A parametric curve ``f(x, p)`` with an optional analytic Jacobian.

    Parameters
    ----------
    func : callable
        ``func(x, p) -> ndarray`` evaluated elementwise over ``x``.
    jac : callable, optional
        ``jac(x, p) -> ndarray`` of shape ``(len(x), len(p))``.  When omitted a
        central finite-difference Jacobian is used.
    names : sequence of str, optional
    """

    def __init__(self, func: Callable, jac: Optional[Callable] = None, names: Sequence[str] = ()):
        self.func = func
        self._jac = jac
        self.names = tuple(names)

    def __call__(self, x, p):
        return self.func(np.asarray(x, dtype=float), np.asarray(p, dtype=float))

    def jacobian(self, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        if self._jac is not None:
            return np.asarray(self._jac(x, p), dtype=float)
        return finite_difference_jacobian(self.func, x, p)


def finite_difference_jacobian(func, x, p, rel_step=1e-6):
    p = np.asarray(p, dtype=float)
    J = np.empty((np.size(x), p.size))
    for j in range(p.size):
        h = rel_step * max(abs(p[j]), 1.0)
        up = p.copy()
        dn = p.copy()
        up[j] += h
        dn[j] -= h
        J[:, j] = (func(x, up) - func(x, dn)) / (2.0 * h)
    return J


def _stretched_exp(t, p):
    i0, tau0, beta, bg = p
    return i0 * np.exp(-(t / tau0) ** beta) + bg


def _stretched_exp_jac(t, p):
    i0, tau0, beta, bg = p
    s = t / tau0
    u = s ** beta
    e = np.exp(-u)
    with np.errstate(divide="ignore", invalid="ignore"):
        ulog = np.where(s > 0, u * np.log(np.where(s > 0, s, 1.0)), 0.0)
    J = np.empty((t.size, 4))
    J[:, 0] = e
    J[:, 1] = i0 * e * u * beta / tau0
    J[:, 2] = -i0 * e * ulog
    J[:, 3] = 1.0
    return J


def _exp_decay(r, p):
    amp, rate = p
    return amp * np.exp(-rate * r)


def _exp_decay_jac(r, p):
    amp, rate = p
    e = np.exp(-rate * r)
    return np.column_stack([e, -r * amp * e])


def _line(x, p):
    return p[0] * x + p[1]


def _line_jac(x, p):
    return np.column_stack([x, np.ones_like(x)])


STRETCHED_EXP = Model(_stretched_exp, _stretched_exp_jac, ("I0", "tau0", "beta", "background"))
EXP_DECAY = Model(_exp_decay, _exp_decay_jac, ("A", "alpha"))
LINE = Model(_line, _line_jac, ("slope", "intercept"))


def _normal_inverse(J):
    A = J.T @ J
    if A.size == 0:
        return A
    scale = np.sqrt(np.diag(A))
    if np.any(scale == 0) or not np.all(np.isfinite(A)):
        raise RankDeficiencyError("normal matrix is singular (a parameter has no influence on the model)")
    # equilibrate before checking conditioning
    As = A / np.outer(scale, scale)
    w = np.linalg.eigvalsh(As)
    if w[0] <= w[-1] * A.shape[0] * np.finfo(float).eps * 10:
        raise RankDeficiencyError("normal matrix is singular or numerically rank deficient")
    return np.linalg.inv(As) / np.outer(scale, scale)


def _lm(model, x, y, sigma, theta, free, lower, upper, max_iter, gtol, xtol):
    def residual(p):
        return (y - model(x, p)) / sigma

    r = residual(theta)
    chi2 = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = model.jacobian(x, theta)[:, free] / sigma[:, None]
        g = J.T @ r
        A = J.T @ J
        d = np.diag(A).copy()
        if np.any(d == 0):
            raise RankDeficiencyError("normal matrix is singular (a parameter has no influence on the model)")
        # cosine between the residual and each Jacobian column; invariant to sigma scaling
        if chi2 == 0.0 or np.max(np.abs(g) / np.sqrt(d * chi2)) < gtol:
            converged = True
            break
        accepted = False
        while lam <= 1e30:
            try:
                delta = np.linalg.solve(A + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta.copy()
            trial[free] += delta
            np.clip(trial, lower, upper, out=trial)
            r_t = residual(trial)
            chi2_t = float(r_t @ r_t)
            if np.isfinite(chi2_t) and chi2_t < chi2:
                step = np.abs(trial - theta)
                theta, r, chi2 = trial, r_t, chi2_t
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if np.all(step <= xtol * (np.abs(theta) + xtol)):
                    converged = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill step exists at working precision
            converged = True
        if converged:
            break
    if converged:
        theta, chi2 = _polish(model, x, sigma, residual, theta, chi2, free, lower, upper)
    return theta, chi2, it, converged


def _gradient_cosine(J, r, chi2):
    d = np.sum(J * J, axis=0)
    return float(np.max(np.abs(J.T @ r) / np.sqrt(d * chi2))) if chi2 > 0 else 0.0


def _polish(model, x, sigma, residual, theta, chi2, free, lower, upper, steps=3):
    """Undamped Gauss-Newton steps near the optimum.

    Close to the minimum chi-square changes fall below rounding, so damped
    steps can no longer be judged by it.  Steps are kept while they shrink
    the gradient and leave chi-square unchanged to working precision.
    """
    r = residual(theta)
    J = model.jacobian(x, theta)[:, free] / sigma[:, None]
    cos = _gradient_cosine(J, r, chi2)
    for _ in range(steps):
        if cos == 0.0:
            break
        try:
            delta = np.linalg.lstsq(J, r, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        trial = theta.copy()
        trial[free] += delta
        if np.any(trial < lower) or np.any(trial > upper):
            break
        r_t = residual(trial)
        chi2_t = float(r_t @ r_t)
        J_t = model.jacobian(x, trial)[:, free] / sigma[:, None]
        cos_t = _gradient_cosine(J_t, r_t, chi2_t)
        if not (np.isfinite(chi2_t) and chi2_t <= chi2 * (1.0 + 1e-12) and cos_t < cos):
            break
        theta, r, chi2, J, cos = trial, r_t, chi2_t, J_t, cos_t
    return theta, chi2


def fit_nonlinear_weighted(
    model: Model,
    x,
    y,
    sigma,
    init,
    *,
    lower=None,
    upper=None,
    fixed=None,
    max_iter: int = 200,
    gtol: float = 1e-10,
    xtol: float = 1e-12,
) -> FitResult:
    """Weighted nonlinear least squares by Levenberg-Marquardt.

    Minimises ``sum(((y - f(x; p)) / sigma) ** 2)``.  The damping factor is
    multiplied by 10 after a rejected step and divided by 10 after an accepted
    one.  Trial points are projected onto ``[lower, upper]``; parameters that
    finish on a bound are held there and the remaining ones refitted, so the
    returned covariance refers to the free parameters only.

    Parameters
    ----------
    model : Model
    x, y, sigma : array_like
        Abscissae, observations and their standard deviations (``sigma > 0``).
    init : array_like
        Starting parameter vector.
    lower, upper : array_like, optional
        Box bounds (``-inf``/``inf`` by default).
    fixed : array_like of bool, optional
        Parameters held at their initial value.
    max_iter : int
        Iteration cap; on exhaustion the partial result is returned with
        ``converged=False``.

    Returns
    -------
    FitResult

    Raises
    ------
    RankDeficiencyError
        If the weighted normal matrix is singular at the optimum.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    theta = np.array(init, dtype=float)
    if not (x.shape[0] == y.shape[0] == sigma.shape[0]):
        raise ValueError("x, y and sigma must have the same length")
    if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
        raise ValueError("sigma must be finite and strictly positive")
    if not np.all(np.isfinite(theta)):
        raise ValueError("initial parameters must be finite")
    m = theta.size
    lower = np.full(m, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(m, np.inf) if upper is None else np.asarray(upper, dtype=float)
    user_fixed = np.zeros(m, dtype=bool) if fixed is None else np.asarray(fixed, dtype=bool).copy()
    theta = np.clip(theta, lower, upper)

    pinned = user_fixed.copy()
    total_it = 0
    converged = False
    for _ in range(m + 1):
        free = ~pinned
        if not free.any():
            converged = True
            break
        theta, chi2, it, converged = _lm(model, x, y, sigma, theta, free, lower, upper, max_iter, gtol, xtol)
        total_it += it
        at_bound = ((theta <= lower) | (theta >= upper)) & free
        if at_bound.any():
            pinned |= at_bound
            continue
        # release bound-pinned parameters whose gradient points back into the box
        released = False
        if (pinned & ~user_fixed).any():
            r = (y - model(x, theta)) / sigma
            g = model.jacobian(x, theta).T @ (r / sigma)
            for j in np.flatnonzero(pinned & ~user_fixed):
                if (theta[j] <= lower[j] and g[j] > 0) or (theta[j] >= upper[j] and g[j] < 0):
                    pinned[j] = False
                    released = True
        if not released:
            break

    r = (y - model(x, theta)) / sigma
    chi2 = float(r @ r)
    free = ~pinned
    J = model.jacobian(x, theta)[:, free] / sigma[:, None]
    cov = np.zeros((m, m))
    cov[np.ix_(free, free)] = _normal_inverse(J)
    dof = x.size - int(free.sum())
    return FitResult(
        parameters=theta,
        covariance=cov,
        reduced_chi2=chi2 / dof if dof > 0 else float("nan"),
        iterations=total_it,
        converged=converged,
        chi2=chi2,
        dof=dof,
        names=model.names,
        fixed=pinned,
    )


def fit_linear(x, y) -> FitResult:
    """Ordinary least-squares line ``y = slope * x + intercept``.

    Standard errors use the residual variance ``s^2 = RSS / (n - 2)``; with
    exactly two points (or an exact line) they are zero.

    Raises
    ------
    RankDeficiencyError
        If fewer than two distinct ``x`` values are given.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D sequences of equal length")
    if x.size < 2:
        raise InsufficientDataError("at least two points are required")
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= np.finfo(float).eps * max(1.0, float(np.sum(x**2))):
        raise RankDeficiencyError("x values are degenerate (fewer than two distinct values)")
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xm)
    resid = y - (slope * x + intercept)
    dof = x.size - 2
    rss = float(resid @ resid)
    s2 = rss / dof if dof > 0 else 0.0
    var_slope = s2 / sxx
    var_icpt = s2 * (1.0 / x.size + xm**2 / sxx)
    cov_si = -xm * s2 / sxx
    cov = np.array([[var_slope, cov_si], [cov_si, var_icpt]])
    return FitResult(
        parameters=np.array([slope, intercept]),
        covariance=cov,
        reduced_chi2=s2,
        iterations=0,
        converged=True,
        chi2=rss,
        dof=dof,
        names=LINE.names,
        fixed=np.zeros(2, dtype=bool),
    )
