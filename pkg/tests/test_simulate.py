import numpy as np
import pytest
from scipy import integrate

from nvquench.exceptions import ConfigError, InsufficientDataError
from nvquench.lifetime import amplitude_weighted_qy, average_lifetime, fit_stretched_exp
from nvquench.quench import QuenchParams, lifetime_from_rates
from nvquench.simulate import (
    EnsembleSimConfig,
    amplitude_weighted_mean_lifetime,
    draw_rate_distribution,
    intensity_weighted_mean_lifetime,
    simulate_ensemble_decay,
    simulate_from_rates,
)
from nvquench.spatial import nn_distance_pdf, ppm_to_density

P = QuenchParams.published()


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"density": -1.0},
        {"density": 0.01, "n_emitters": 0},
        {"density": 0.01, "total_photons": 0},
        {"density": 0.01, "bin_width": 0.0},
        {"density": 0.01, "t_max": 120.0},
        {"density": 0.01, "bin_width": 0.3},
        {"density": 0.01, "bin_width": 20.0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            EnsembleSimConfig(**kw)

    def test_bins(self):
        assert EnsembleSimConfig(0.01).n_bins == 1000


class TestRates:
    def test_zero_density(self):
        rates = draw_rate_distribution(EnsembleSimConfig(0.0, n_emitters=50), P)
        np.testing.assert_array_equal(rates, 72.0)

    def test_bounds(self):
        rates = draw_rate_distribution(EnsembleSimConfig(0.5, n_emitters=20_000, seed=4), P)
        assert rates.min() >= P.k0
        assert rates.max() <= P.k0 + P.A

    def test_deterministic(self):
        cfg = EnsembleSimConfig(0.01, n_emitters=100, seed=9)
        np.testing.assert_array_equal(draw_rate_distribution(cfg, P), draw_rate_distribution(cfg, P))

    def test_yield_against_quadrature(self):
        rho = 6.2e-3
        rates = draw_rate_distribution(EnsembleSimConfig(rho, n_emitters=200_000, seed=1), P)
        oracle, _ = integrate.quad(
            lambda r: P.k0 / (P.k0 + P.A * np.exp(-P.alpha * r)) * nn_distance_pdf(rho, r), 0, np.inf)
        assert np.mean(P.k0 / rates) == pytest.approx(oracle, rel=1e-2)


class TestOracles:
    def test_equal_rates(self):
        assert intensity_weighted_mean_lifetime(np.full(5, 80.0)) == pytest.approx(12.5)

    def test_two_rates(self):
        assert intensity_weighted_mean_lifetime([72.0, 144.0]) == pytest.approx(11.57, abs=5e-3)

    def test_ordering(self):
        rates = np.random.default_rng(0).uniform(72, 250, 1000)
        assert intensity_weighted_mean_lifetime(rates) >= amplitude_weighted_mean_lifetime(rates)

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            intensity_weighted_mean_lifetime([])


class TestHistogram:
    def test_conservation_and_metadata(self):
        cfg = EnsembleSimConfig(0.02, n_emitters=500, total_photons=123_457, seed=3)
        h = simulate_ensemble_decay(cfg, P)
        assert int(h.counts.sum()) == 123_457
        assert h.counts.dtype == np.int64
        assert h.metadata["total_photons"] == 123_457
        assert h.bin_edges[-1] == pytest.approx(cfg.t_max)

    def test_identical_seeds(self):
        cfg = EnsembleSimConfig(0.02, n_emitters=500, total_photons=100_000, seed=5)
        np.testing.assert_array_equal(simulate_ensemble_decay(cfg, P).counts,
                                      simulate_ensemble_decay(cfg, P).counts)

    def test_seed_changes_output(self):
        a = simulate_ensemble_decay(EnsembleSimConfig(0.02, n_emitters=500, total_photons=10_000, seed=5), P)
        b = simulate_ensemble_decay(EnsembleSimConfig(0.02, n_emitters=500, total_photons=10_000, seed=6), P)
        assert not np.array_equal(a.counts, b.counts)

    def test_thread_count_independent(self):
        cfg = EnsembleSimConfig(0.02, n_emitters=500, total_photons=3_500_000, seed=8)
        one = simulate_ensemble_decay(cfg, P, n_jobs=1)
        many = simulate_ensemble_decay(cfg, P, n_jobs=4)
        np.testing.assert_array_equal(one.counts, many.counts)

    def test_window_shorter_than_period(self):
        cfg = EnsembleSimConfig(0.0, n_emitters=10, total_photons=200_000, t_max=20.0, seed=1)
        h = simulate_ensemble_decay(cfg, P)
        assert h.counts.sum() == 200_000
        assert h.counts.size == 200

    def test_invalid_rates(self):
        cfg = EnsembleSimConfig(0.0, n_emitters=1)
        with pytest.raises(ConfigError):
            simulate_from_rates([0.0], cfg)
        with pytest.raises(InsufficientDataError):
            simulate_from_rates([], cfg)

    def test_zero_density_fit(self):
        cfg = EnsembleSimConfig(0.0, total_photons=1_000_000, seed=2)
        fit = fit_stretched_exp(simulate_ensemble_decay(cfg, P))
        assert fit.beta >= 0.99
        assert average_lifetime(fit) == pytest.approx(lifetime_from_rates(P, 0.0), abs=0.15)


@pytest.fixture(scope="module")
def runs():
    out = {}
    for ppm in (2.0, 88.0, 200.0, 380.0):
        cfg = EnsembleSimConfig(ppm_to_density(ppm), total_photons=1_000_000, seed=21)
        rates = draw_rate_distribution(cfg, P)
        out[ppm] = (rates, fit_stretched_exp(simulate_from_rates(rates, cfg)))
    return out


@pytest.mark.slow
class TestPipeline:
    def test_380_ppm_against_oracle(self, runs):
        rates, fit = runs[380.0]
        assert fit.beta < 1.0
        assert average_lifetime(fit) < 13.9
        assert average_lifetime(fit) == pytest.approx(intensity_weighted_mean_lifetime(rates), rel=0.03)

    def test_intensity_estimator_bias_direction(self, runs):
        for rates, fit in runs.values():
            assert P.k0 * average_lifetime(fit) / 1000.0 >= amplitude_weighted_qy(rates, P.k0)

    def test_beta_below_097_at_high_density(self, runs):
        assert runs[380.0][1].beta <= 0.97
