"""Acceptance criteria 1-9.

Each test records PASS/FAIL with a short detail line before asserting, so the
terminal summary lists every criterion even when one of them fails.
"""

import time

import numpy as np
import pytest

from nvquench.cli import main
from nvquench.lifetime import (
    DecayHistogram,
    StretchedExpFit,
    average_lifetime,
    fit_stretched_exp,
    qy_from_lifetime,
)
from nvquench.quench import (
    DISCREPANCY_NOTE,
    QuenchParams,
    max_density_for_qy,
    max_ppm_for_qy,
    relative_qy_model,
    tunnel_rate_from_qy,
)
from nvquench.simulate import (
    EnsembleSimConfig,
    draw_rate_distribution,
    intensity_weighted_mean_lifetime,
    simulate_from_rates,
)
from nvquench.spatial import mean_nn_distance, ppm_to_density, sample_nn_distances
from nvquench.spectra import SpectrumSeries, n_concentration_from_ftir, nv0_fraction_filtered, unmix_matrix
from nvquench.tunnelling import fit_samples
from synth import WAVELENGTHS, mixtures, nv_templates, poisson_histogram, tunnelling_records

P = QuenchParams.published()


def _fit(tau0, beta):
    return StretchedExpFit(I0=1.0, tau0=tau0, beta=beta, background=0.0,
                           covariance=np.zeros((4, 4)), reduced_chi2=1.0, converged=True)


def test_criterion_1_yield_algebra(acceptance):
    eps_short = qy_from_lifetime(4.4, 72.0)
    eps_ref = qy_from_lifetime(13.90, 72.0)
    k = tunnel_rate_from_qy(0.774, 72.0)
    ok = abs(eps_short - 0.317) <= 0.005 and abs(eps_ref - 1.0) <= 0.005 and abs(k - 21.0) <= 0.2
    acceptance(1, ok, f"eps(4.4)={eps_short:.4f} eps(13.90)={eps_ref:.4f} k(0.774)={k:.2f} MHz")
    assert ok


def test_criterion_2_conversion_chain(acceptance):
    t = time.perf_counter()
    rho = ppm_to_density(35.5)
    r_rounded = mean_nn_distance(6.2e-3)
    r_exact = mean_nn_distance(rho)
    mc = sample_nn_distances(rho, 1_000_000, seed=2).mean()
    elapsed = time.perf_counter() - t
    ok = (abs(rho - 6.25e-3) <= 5e-6
          and abs(r_rounded - 3.02) <= 0.01
          and abs(mc / r_exact - 1.0) <= 5e-3
          and elapsed < 2.0)
    acceptance(2, ok, f"rho={rho:.4e} nm^-3, <r>(6.2e-3)={r_rounded:.4f} nm, "
                      f"<r>(unrounded)={r_exact:.4f} nm, MC/analytic-1={mc / r_exact - 1:+.1e}, {elapsed:.2f}s")
    assert ok


EDGES = np.arange(0.0, 50.0 + 1e-9, 0.2)


def test_criterion_3_stretched_exponential(acceptance):
    t = time.perf_counter()
    identity = average_lifetime(_fit(8.0, 1.0)) == pytest.approx(8.0, rel=1e-14)
    gamma = average_lifetime(_fit(10.0, 0.5)) == pytest.approx(60.0, rel=1e-14)
    hits = 0
    for seed in range(100):
        fit = fit_stretched_exp(DecayHistogram(EDGES, poisson_histogram(8.0, 0.7, 1e6, EDGES, seed)))
        err = fit.errors
        hits += abs(fit.tau0 - 8.0) <= 3 * err[1] and abs(fit.beta - 0.7) <= 3 * err[2]
    elapsed = time.perf_counter() - t
    ok = identity and gamma and hits >= 95 and elapsed < 30
    acceptance(3, ok, f"identities {identity and gamma}, recovery {hits}/100 within 3 sigma, {elapsed:.1f}s")
    assert ok


SIM_PPM = (2.0, 88.0, 200.0, 380.0)


@pytest.fixture(scope="module")
def end_to_end():
    t = time.perf_counter()
    out = []
    for ppm in SIM_PPM:
        cfg = EnsembleSimConfig(ppm_to_density(ppm), n_emitters=10_000, total_photons=10_000_000, seed=1)
        rates = draw_rate_distribution(cfg, P)
        fit = fit_stretched_exp(simulate_from_rates(rates, cfg))
        out.append((ppm, fit, average_lifetime(fit), intensity_weighted_mean_lifetime(rates)))
    return out, time.perf_counter() - t


def test_criterion_4_end_to_end(acceptance, end_to_end):
    runs, elapsed = end_to_end
    taus = np.array([r[2] for r in runs])
    dev = np.array([abs(r[2] / r[3] - 1.0) for r in runs])
    beta_low, beta_high = runs[0][1].beta, runs[-1][1].beta
    checks = {
        "decreasing": bool(np.all(np.diff(taus) < 0)),
        "oracle 3%": bool(np.all(dev <= 0.03)),
        "beta(2ppm)=1": beta_low >= 0.99,
        "beta(380ppm)<=0.97": beta_high <= 0.97,
        "runtime": elapsed < 60,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    acceptance(4, ok, f"tau_bar={np.round(taus, 3).tolist()} max|dev|={dev.max():.2%} "
                      f"beta(2)={beta_low:.4f} beta(380)={beta_high:.4f} {elapsed:.1f}s"
                      + (f" failed: {', '.join(failed)}" if failed else ""))
    assert ok, failed


def test_criterion_5_tunnelling_round_trip(acceptance):
    t = time.perf_counter()
    hits = 0
    rel = []
    for seed in range(100):
        params, _, _ = fit_samples(tunnelling_records(seed))
        hits += abs(params.A - 185.0) <= 3 * params.A_err and abs(params.alpha - 0.53) <= 3 * params.alpha_err
        rel.append(params.A_err / params.A)
    elapsed = time.perf_counter() - t
    med = float(np.median(rel))
    ok = hits >= 95 and med >= 0.27 and elapsed < 30
    acceptance(5, ok, f"{hits}/100 within 3 sigma, median sigma_A/A={med:.3f}, {elapsed:.1f}s")
    assert ok


def test_criterion_6_inversion(acceptance):
    worst = 0.0
    for target in (0.3, 0.5, 0.774, 0.9, 0.99):
        worst = max(worst, abs(relative_qy_model(P, max_density_for_qy(P, target)) / target - 1.0))
    ppm = max_ppm_for_qy(P, 0.9)
    noted = "35.5 ppm" in DISCREPANCY_NOTE
    ok = worst <= 1e-9 and abs(ppm - 4.7) <= 0.1 and noted
    acceptance(6, ok, f"round trip {worst:.1e}, 90% threshold {ppm:.2f} ppm, discrepancy note {noted}")
    assert ok


def test_criterion_7_unmixing(acceptance):
    t = time.perf_counter()
    fractions = np.linspace(0.05, 0.95, 20)
    u = unmix_matrix(WAVELENGTHS, mixtures(fractions, seed=7))
    err = np.abs(u.nv0_fraction - fractions).max()
    filtered = nv0_fraction_filtered(u, 725.0)
    T = nv_templates(WAVELENGTHS)
    mask = WAVELENGTHS >= 725.0
    passed = np.trapezoid(T[:, mask], WAVELENGTHS[mask], axis=1)
    oracle = fractions * passed[0] / (fractions * passed[0] + (1 - fractions) * passed[1])
    low = fractions <= 0.3
    elapsed = time.perf_counter() - t
    ok = err < 0.05 and np.all(filtered[low] < 0.003) and np.abs(filtered - oracle).max() < 1e-3 and elapsed < 10
    acceptance(7, ok, f"max fraction error {err:.1e}, filtered max {filtered[low].max():.1e} "
                      f"(unfiltered <= 0.3), {elapsed:.1f}s")
    assert ok


def test_criterion_8_ftir(acceptance):
    wn = np.arange(900.0, 1500.0 + 0.5, 1.0)
    peak = 4.0 * np.exp(-0.5 * ((wn - 1130.0) / 12.0) ** 2)
    ppm, err = n_concentration_from_ftir(SpectrumSeries("wavenumber_cm-1", wn, peak))
    shifted = [n_concentration_from_ftir(SpectrumSeries("wavenumber_cm-1", wn, peak + c))[0]
               for c in (0.05, 0.5, 3.0)]
    spread = max(abs(s - ppm) for s in shifted)
    ok = abs(ppm - 100.0) <= 1e-9 and abs(err - 8.0) <= 1e-9 and spread <= 1e-9
    acceptance(8, ok, f"{ppm:.6f} +/- {err:.6f} ppm, offset spread {spread:.1e}")
    assert ok


def test_criterion_9_determinism(acceptance, tmp_path, capsys):
    outputs = []
    for jobs in (1, 2, 8):
        d = tmp_path / f"jobs{jobs}"
        code = main(["simulate", "--density-ppm", "10", "380", "--photons", "5000000",
                     "--n-jobs", str(jobs), "--seed", "3", "--out", str(d)])
        capsys.readouterr()
        assert code == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    ok = outputs[0] == outputs[1] == outputs[2] and len(outputs[0]) == 4
    acceptance(9, ok, f"{len(outputs[0])} files identical for n_jobs 1, 2, 8")
    assert ok
