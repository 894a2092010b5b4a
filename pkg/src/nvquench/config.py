"""Run configuration shared by the command-line tools."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .exceptions import ConfigError, DomainError
from .quench import CLAMP_TOLERANCE, QuenchParams
from .simulate import EnsembleSimConfig
from .spatial import CARBON_SITE_DENSITY, ppm_to_density
from .spectra import FTIR_BASELINE_WINDOWS

ENV_VAR = "NVQUENCH_CONFIG"


@dataclass(frozen=True)
class SimulationSettings:
    """Monte Carlo settings; ``density_ppm`` is the donor concentration."""

    density_ppm: float = 0.0
    n_emitters: int = 10_000
    total_photons: int = 1_000_000
    rep_period: float = 100.0
    bin_width: float = 0.1
    t_max: float = 100.0
    n_jobs: int = 1


@dataclass(frozen=True)
class RunConfig:
    """Physical constants, calibration inputs and seeds for one analysis run.

    ``sigma_nv`` (cm^2) and ``rho_c`` (ppm cm^3) have no default; they must be
    supplied, with a provenance string, before NV concentrations can be
    computed from visible absorption.
    """

    k0: float = 72.0
    A: float = 185.0
    alpha: float = 0.53
    k0_err: float = 0.4
    A_err: float = 87.0
    alpha_err: float = 0.12
    clamp_tolerance: float = CLAMP_TOLERANCE
    target_power: float = 50.0
    longpass_nm: float = 725.0
    sigma_nv: Optional[float] = None
    sigma_nv_source: str = ""
    rho_c: Optional[float] = None
    rho_c_source: str = ""
    baseline_windows: tuple = FTIR_BASELINE_WINDOWS
    carbon_density: float = CARBON_SITE_DENSITY
    seed: int = 0
    simulation: SimulationSettings = field(default_factory=SimulationSettings)

    def __post_init__(self):
        positive = ("k0", "A", "alpha", "target_power", "longpass_nm", "carbon_density")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        for name in ("k0_err", "A_err", "alpha_err", "clamp_tolerance"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be >= 0, got {v!r}")
        for name in ("sigma_nv", "rho_c"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive when given, got {v!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        windows = tuple(tuple(float(x) for x in w) for w in self.baseline_windows)
        if len(windows) < 1 or any(len(w) != 2 or not w[0] < w[1] for w in windows):
            raise ConfigError("baseline_windows must be (low, high) pairs with low < high")
        object.__setattr__(self, "baseline_windows", windows)
        sim = self.simulation
        if isinstance(sim, dict):
            try:
                sim = SimulationSettings(**sim)
            except TypeError as exc:
                raise ConfigError(f"simulation: {exc}") from None
            object.__setattr__(self, "simulation", sim)
        if sim.n_jobs < 1:
            raise ConfigError("simulation.n_jobs must be >= 1")
        if sim.density_ppm < 0:
            raise ConfigError("simulation.density_ppm must be >= 0")
        self.sim_config()

    @property
    def quench_params(self) -> QuenchParams:
        try:
            return QuenchParams(self.k0, self.A, self.alpha, self.k0_err, self.A_err, self.alpha_err)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def sim_config(self, density_ppm=None, seed=None) -> EnsembleSimConfig:
        s = self.simulation
        ppm = s.density_ppm if density_ppm is None else density_ppm
        return EnsembleSimConfig(
            density=float(ppm_to_density(ppm, carbon_density=self.carbon_density)),
            n_emitters=int(s.n_emitters),
            total_photons=int(s.total_photons),
            rep_period=float(s.rep_period),
            bin_width=float(s.bin_width),
            t_max=float(s.t_max),
            seed=self.seed if seed is None else int(seed),
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["baseline_windows"] = [list(w) for w in self.baseline_windows]
        return d

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        data = dict(data)
        if "simulation" in data:
            sim = data["simulation"]
            if not isinstance(sim, dict):
                raise ConfigError("simulation must be an object")
            sim_known = {f.name for f in dataclasses.fields(SimulationSettings)}
            bad = sorted(set(sim) - sim_known)
            if bad:
                raise ConfigError(f"unknown simulation keys: {', '.join(bad)}")
            data["simulation"] = SimulationSettings(**sim)
        if "baseline_windows" in data:
            data["baseline_windows"] = tuple(tuple(w) for w in data["baseline_windows"])
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def load_config(path=None) -> RunConfig:
    """Read a JSON config from ``path``, else from ``$NVQUENCH_CONFIG``, else defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return RunConfig.from_dict(data)
