import math

import numpy as np
import pytest

from nvquench.exceptions import DomainError
from nvquench.quench import QuenchParams, relative_qy_model
from nvquench.sensitivity import (
    SensitivityInput,
    dipolar_t2,
    optimal_density,
    power_law,
    relative_sensitivity,
    sensitivity_vs_density,
)
from nvquench.spatial import ppm_to_density

P = QuenchParams.published()
DENSITIES = ppm_to_density(np.geomspace(1.0, 400.0, 40))


class TestInput:
    def test_identity(self):
        a = SensitivityInput(0.5, 1e6, 10.0)
        assert relative_sensitivity(a, a) == 1.0

    def test_inverse_square_root(self):
        a = SensitivityInput(0.5, 4e6, 10.0)
        b = SensitivityInput(0.5, 1e6, 10.0)
        assert relative_sensitivity(a, b) == pytest.approx(0.5)
        assert relative_sensitivity(b, a) == pytest.approx(2.0)

    def test_yield_trade(self):
        # halving the yield costs a factor sqrt(2)
        a = SensitivityInput(0.25, 1e6, 10.0)
        b = SensitivityInput(0.5, 1e6, 10.0)
        assert relative_sensitivity(a, b) == pytest.approx(math.sqrt(2))

    @pytest.mark.parametrize("kw", [{"epsilon_rel": 0.0}, {"n_emitters": -1.0}, {"t2": float("nan")}])
    def test_invalid(self, kw):
        base = {"epsilon_rel": 0.5, "n_emitters": 1.0, "t2": 1.0}
        with pytest.raises(DomainError):
            SensitivityInput(**{**base, **kw})


class TestTable:
    def test_reference_row(self):
        rows = sensitivity_vs_density(P, power_law(1.0, 1.0), 5.0, DENSITIES)
        assert rows[0].eta_rel == 1.0
        assert rows[5].epsilon_rel == pytest.approx(relative_qy_model(P, DENSITIES[5]))

    def test_constant_t2_has_no_interior_optimum(self):
        # eps * rho keeps rising with density for these parameters
        product = relative_qy_model(P, DENSITIES) * DENSITIES
        assert np.all(np.diff(product) > 0)
        rows = sensitivity_vs_density(P, power_law(1.0, 1.0), 5.0, DENSITIES)
        assert optimal_density(rows) == DENSITIES[-1]

    def test_spin_bath_creates_optimum(self):
        rows = sensitivity_vs_density(P, power_law(1.0, 1.0), dipolar_t2(100.0, 3.0), DENSITIES)
        best = optimal_density(rows)
        assert DENSITIES[0] < best < DENSITIES[-1]
        eta = np.array([r.eta_rel for r in rows])
        i = int(np.argmin(eta))
        assert np.all(np.diff(eta[: i + 1]) < 0) and np.all(np.diff(eta[i:]) > 0)

    def test_mapping_profiles(self):
        d = list(DENSITIES[:3])
        rows = sensitivity_vs_density(P, {x: 1e6 for x in d}, {x: 2.0 for x in d}, d)
        assert [r.n_emitters for r in rows] == [1e6] * 3

    def test_mapping_missing_density(self):
        with pytest.raises(KeyError):
            sensitivity_vs_density(P, {DENSITIES[0]: 1.0}, 1.0, DENSITIES[:2])

    def test_non_positive_profile(self):
        with pytest.raises(DomainError):
            sensitivity_vs_density(P, lambda d: 0.0, 1.0, DENSITIES[:2])

    def test_empty(self):
        with pytest.raises(ValueError):
            optimal_density([])
