"""Relative ensemble-magnetometry sensitivity, ``eta ~ 1 / sqrt(eps * N * T2)``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .exceptions import DomainError
from .quench import QuenchParams, relative_qy_model


@dataclass(frozen=True)
class SensitivityInput:
    epsilon_rel: float
    n_emitters: float
    t2: float  # us

    def __post_init__(self):
        for name in ("epsilon_rel", "n_emitters", "t2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0")

    @property
    def product(self):
        return self.epsilon_rel * self.n_emitters * self.t2


def relative_sensitivity(a: SensitivityInput, b: SensitivityInput) -> float:
    """``eta_a / eta_b``; values below 1 mean ``a`` is the more sensitive."""
    return math.sqrt(b.product / a.product)


Profile = Union[Callable[[float], float], Mapping[float, float], float]


def _lookup(profile: Profile, density: float, what: str) -> float:
    if callable(profile):
        value = profile(density)
    elif isinstance(profile, Mapping):
        if density not in profile:
            raise KeyError(f"{what} is undefined at density {density!r}")
        value = profile[density]
    else:
        value = profile
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{what} must be > 0 at density {density!r}, got {value}")
    return value


@dataclass(frozen=True)
class SensitivityRow:
    density: float
    epsilon_rel: float
    n_emitters: float
    t2: float
    eta_rel: float


def sensitivity_vs_density(p: QuenchParams, n_of_density: Profile, t2_of_density: Profile,
                           densities: Sequence[float]) -> list[SensitivityRow]:
    """Tabulate yield, emitter number, T2 and sensitivity relative to the first row.

    ``n_of_density`` and ``t2_of_density`` may be callables, mappings keyed by
    density, or constants.
    """
    rows = []
    ref = None
    for d in densities:
        d = float(d)
        inp = SensitivityInput(
            float(relative_qy_model(p, d)),
            _lookup(n_of_density, d, "emitter number"),
            _lookup(t2_of_density, d, "T2"),
        )
        if ref is None:
            ref = inp
        rows.append(SensitivityRow(d, inp.epsilon_rel, inp.n_emitters, inp.t2,
                                   relative_sensitivity(inp, ref)))
    return rows


def optimal_density(rows: Sequence[SensitivityRow]) -> float:
    """Density of the row with the best (lowest) relative sensitivity."""
    if not rows:
        raise ValueError("empty table")
    return rows[int(np.argmin([r.eta_rel for r in rows]))].density


def power_law(prefactor, exponent):
    """Profile ``prefactor * density**exponent``."""
    return lambda d: prefactor * d**exponent


def dipolar_t2(t2_0, b):
    """Profile ``1 / (1/t2_0 + b * density)``: coherence limited by donor spin bath."""
    return lambda d: 1.0 / (1.0 / t2_0 + b * d)
