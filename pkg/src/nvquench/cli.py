"""Command-line front end.

Every command writes a JSON report (to ``--out`` or stdout) carrying a
``provenance`` block with the config hash, seed and library versions.  No
timestamps are recorded, so identical inputs give byte-identical outputs.

Exit codes: 0 success, 1 numerical failure, 2 input, parse or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np
import scipy
import sklearn

from . import __version__
from .config import RunConfig, load_config
from .exceptions import (
    ConfigError,
    DomainError,
    InconsistentInputError,
    InsufficientDataError,
    ParseError,
    RangeError,
)
from .io import (
    read_histogram,
    read_power_table,
    read_sample_table,
    read_spectrum,
    write_csv,
    write_histogram,
    write_spectrum,
)
from .lifetime import (
    amplitude_weighted_qy,
    fit_stretched_exp,
    semi_dispersion,
)
from .quench import (
    DISCREPANCY_NOTE,
    max_density_for_qy,
    relative_qy,
    relative_qy_model_err,
    tunnel_rate_from_lifetime,
)
from .sensitivity import dipolar_t2, optimal_density, sensitivity_vs_density
from .simulate import (
    draw_rate_distribution,
    intensity_weighted_mean_lifetime,
    simulate_from_rates,
)
from .spatial import density_to_ppm, mean_nn_distance, ppm_to_density
from .spectra import (
    SpectrumSeries,
    brightness_fit,
    n_concentration_from_ftir,
    nnmf_unmix,
    nv0_fraction_filtered,
    nv_concentration_from_vis,
)
from .tunnelling import SampleRecord, fit_samples

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_INPUT = 2

INPUT_ERRORS = (ParseError, ConfigError, InsufficientDataError, DomainError,
                InconsistentInputError, RangeError, OSError, KeyError)


class NonConvergenceError(ArithmeticError):
    """A fit stopped before meeting its convergence criteria."""


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def provenance(cfg: RunConfig, seed=None):
    return {
        "config_sha256": cfg.digest(),
        "seed": cfg.seed if seed is None else seed,
        "versions": {
            "nvquench": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
    }


def _dump(report, out):
    text = json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_bytes(text.encode("utf-8"))


def _note(cfg, report):
    if cfg.quench_params.is_published_set():
        report["note"] = DISCREPANCY_NOTE
    return report


def _ppm_label(ppm):
    return f"{ppm:g}".replace(".", "p")


# commands


def cmd_simulate(args, cfg: RunConfig):
    p = cfg.quench_params
    densities = args.density_ppm if args.density_ppm else [cfg.simulation.density_ppm]
    n_jobs = args.n_jobs or cfg.simulation.n_jobs
    if args.out is None:
        raise ConfigError("simulate needs --out (a file for one density, a directory for several)")
    out = Path(args.out)
    if len(densities) > 1:
        out.mkdir(parents=True, exist_ok=True)
    written = []
    for ppm in densities:
        sim = cfg.sim_config(density_ppm=ppm)
        if args.photons is not None:
            sim = dataclasses.replace(sim, total_photons=args.photons)
        if args.emitters is not None:
            sim = dataclasses.replace(sim, n_emitters=args.emitters)
        rates = draw_rate_distribution(sim, p)
        hist = simulate_from_rates(rates, sim, n_jobs=n_jobs)
        path = out if len(densities) == 1 else out / f"decay_{_ppm_label(ppm)}ppm.csv"
        meta = {"density_ppm": f"{ppm:g}", **hist.metadata}
        if args.power is not None:
            meta["power_uw"] = f"{args.power:g}"
        write_histogram(path, hist, meta)
        side = {
            "histogram": path.name,
            "density_ppm": ppm,
            "simulation": sim.to_dict(),
            "quench_params": p.to_dict(),
            "oracle": {
                "intensity_weighted_tau_ns": intensity_weighted_mean_lifetime(rates),
                "amplitude_weighted_qy": amplitude_weighted_qy(rates, p.k0, cfg.clamp_tolerance),
            },
            "provenance": provenance(cfg, sim.seed),
        }
        _dump(side, path.with_suffix(".json"))
        written.append(str(path))
    _dump({"written": written, "provenance": provenance(cfg)}, None)
    return EXIT_OK


def _fit_one(path, cfg):
    hist = read_histogram(path)
    fit = fit_stretched_exp(hist)
    power = hist.metadata.get("power_uw")
    entry = {"file": Path(path).name, "power_uw": float(power) if power is not None else None,
             **fit.to_dict()}
    side = Path(path).with_suffix(".json")
    if side.exists():
        try:
            oracle = json.loads(side.read_text(encoding="utf-8")).get("oracle")
        except json.JSONDecodeError:
            oracle = None
        if oracle:
            entry["oracle"] = oracle
    return entry, fit


def cmd_fit_decay(args, cfg: RunConfig):
    p = cfg.quench_params
    entries = []
    converged = True
    for f in args.histograms:
        entry, fit = _fit_one(f, cfg)
        converged &= fit.converged
        entries.append(entry)
    powers = [e["power_uw"] for e in entries if e["power_uw"] is not None]
    if powers:
        chosen = min(sorted(set(powers)), key=lambda w: (abs(w - cfg.target_power), w))
        group = [e for e in entries if e["power_uw"] == chosen]
    else:
        chosen = None
        group = entries
    taus = np.array([e["tau_bar"] for e in group])
    errs = np.array([e["tau_bar_err"] for e in group])
    tau_bar = float(taus.mean())
    fit_err = float(np.sqrt(np.sum(errs**2)) / taus.size)
    dispersion = semi_dispersion(taus)
    k_t = float(tunnel_rate_from_lifetime(tau_bar, p.k0, cfg.clamp_tolerance))
    report = {
        "fits": entries,
        "selected_power_uw": chosen,
        "target_power_uw": cfg.target_power,
        "n_selected": int(taus.size),
        "tau_bar": tau_bar,
        "tau_bar_err_fit": fit_err,
        "tau_bar_semi_dispersion": dispersion,
        "tau_bar_err": max(fit_err, dispersion),
        "k_tunnel": k_t,
        "k_tunnel_err": 1000.0 * max(fit_err, dispersion) / tau_bar**2,
        "epsilon_rel": float(relative_qy(p.k0, k_t)),
        "epsilon_rel_err": p.k0 * max(fit_err, dispersion) / 1000.0,
        "k0": p.k0,
        "provenance": provenance(cfg),
    }
    if len(group) == 1:
        for key in ("I0", "tau0", "beta", "background", "covariance"):
            report[key] = group[0][key]
    amp = [e["oracle"]["amplitude_weighted_qy"] for e in group if "oracle" in e]
    if amp:
        report["amplitude_weighted_qy"] = float(np.mean(amp))
    _dump(report, args.out)
    if not converged:
        raise NonConvergenceError("at least one stretched-exponential fit did not converge")
    return EXIT_OK


def cmd_fit_tunnelling(args, cfg: RunConfig):
    p = cfg.quench_params
    rows = read_sample_table(args.table)
    records = [SampleRecord.derive(sid, rho, rho_e, tau, tau_e, k0=p.k0,
                                   tolerance=cfg.clamp_tolerance, carbon_density=cfg.carbon_density)
               for sid, rho, rho_e, tau, tau_e in rows]
    fitted, res, used = fit_samples(records, k0=p.k0)
    fitted = type(fitted)(k0=p.k0, A=fitted.A, alpha=fitted.alpha, k0_err=p.k0_err,
                          A_err=fitted.A_err, alpha_err=fitted.alpha_err)
    ids = {r.id for r in used}
    report = {
        "A": fitted.A, "A_err": fitted.A_err,
        "alpha": fitted.alpha, "alpha_err": fitted.alpha_err,
        "alpha_rho": fitted.alpha_rho, "alpha_rho_err": fitted.alpha_rho_err,
        "covariance": res.covariance,
        "reduced_chi2": res.reduced_chi2,
        "converged": res.converged,
        "k0": p.k0,
        "samples": [{**r.to_dict(), "used": r.id in ids} for r in records],
        "provenance": provenance(cfg),
    }
    curve_path = args.curve
    if curve_path is None and args.out is not None:
        curve_path = Path(args.out).with_name(Path(args.out).stem + "_curve.csv")
    if curve_path is not None:
        ppm = np.geomspace(args.curve_min, args.curve_max, args.curve_points)
        rho = ppm_to_density(ppm, carbon_density=cfg.carbon_density)
        eps, eps_err = relative_qy_model_err(fitted, rho)
        write_csv(curve_path, ("rho_n_ppm", "rho_n_nm3", "epsilon_rel", "epsilon_rel_err"),
                  zip(ppm, rho, eps, eps_err))
        report["curve"] = str(curve_path)
    _dump(report, args.out)
    if not res.converged:
        raise NonConvergenceError("tunnelling fit did not converge")
    return EXIT_OK


def cmd_predict_qy(args, cfg: RunConfig):
    p = cfg.quench_params
    rho = float(ppm_to_density(args.ppm, carbon_density=cfg.carbon_density))
    eps, eps_err = relative_qy_model_err(p, rho)
    report = {
        "rho_n_ppm": args.ppm,
        "rho_n_nm3": rho,
        "mean_distance_nm": float(mean_nn_distance(rho)) if rho > 0 else None,
        "epsilon_rel": eps,
        "epsilon_rel_err": eps_err,
        "quench_params": p.to_dict(),
        "provenance": provenance(cfg),
    }
    _dump(_note(cfg, report), args.out)
    return EXIT_OK


def cmd_max_nitrogen(args, cfg: RunConfig):
    p = cfg.quench_params
    rho = float(max_density_for_qy(p, args.target))
    report = {
        "target_epsilon_rel": args.target,
        "rho_n_nm3": rho,
        "rho_n_ppm": float(density_to_ppm(rho, carbon_density=cfg.carbon_density)),
        "mean_distance_nm": float(mean_nn_distance(rho)),
        "quench_params": p.to_dict(),
        "provenance": provenance(cfg),
    }
    _dump(_note(cfg, report), args.out)
    return EXIT_OK


def cmd_concentration(args, cfg: RunConfig):
    s = read_spectrum(args.spectrum)
    if args.kind == "ftir":
        ppm, err = n_concentration_from_ftir(s, cfg.baseline_windows)
        report = {"kind": "ftir", "rho_n_ppm": ppm, "rho_n_err": err,
                  "baseline_windows": cfg.baseline_windows}
    else:
        if cfg.sigma_nv is None or cfg.rho_c is None:
            raise ConfigError("visible-absorption calibration needs sigma_nv and rho_c in the config")
        ppm = nv_concentration_from_vis(s, cfg.sigma_nv, cfg.rho_c)
        report = {"kind": "vis", "rho_nv_ppm": float(ppm),
                  "sigma_nv": cfg.sigma_nv, "sigma_nv_source": cfg.sigma_nv_source,
                  "rho_c": cfg.rho_c, "rho_c_source": cfg.rho_c_source}
    report["provenance"] = provenance(cfg)
    _dump(report, args.out)
    return EXIT_OK


def cmd_unmix(args, cfg: RunConfig):
    files = sorted(Path(args.directory).glob("*.csv"))
    if not files:
        raise InsufficientDataError(f"no .csv spectra in {args.directory}")
    spectra = [read_spectrum(f) for f in files]
    u = nnmf_unmix(spectra)
    filtered = nv0_fraction_filtered(u, cfg.longpass_nm)
    report = {
        "spectra": [f.name for f in files],
        "nv0_fraction": u.nv0_fraction,
        "nv0_fraction_filtered": filtered,
        "longpass_nm": cfg.longpass_nm,
        "weights": u.weights,
        "residual_norm": u.residual_norm,
        "relative_residual": u.residual_norm / float(np.linalg.norm(np.vstack([s.sorted().values for s in spectra]))),
        "n_iter": u.n_iter,
        "provenance": provenance(cfg),
    }
    if args.components is not None:
        out = Path(args.components)
        out.mkdir(parents=True, exist_ok=True)
        for name, comp in zip(("nv0", "nvm"), u.components):
            write_spectrum(out / f"component_{name}.csv", SpectrumSeries("wavelength_nm", u.axis, comp, name))
        report["components"] = str(out)
    _dump(report, args.out)
    return EXIT_OK


def cmd_brightness(args, cfg: RunConfig):
    powers, intens = read_power_table(args.table)
    slope, err = brightness_fit(powers, intens)
    _dump({"slope": slope, "slope_err": err, "n_points": int(powers.size),
           "provenance": provenance(cfg)}, args.out)
    return EXIT_OK


def cmd_sensitivity(args, cfg: RunConfig):
    p = cfg.quench_params
    ppm = np.asarray(args.ppm, dtype=float)
    if ppm.size < 1 or np.any(ppm <= 0):
        raise DomainError("--ppm values must be > 0")
    rho = ppm_to_density(ppm, carbon_density=cfg.carbon_density)
    nv_per_n = args.nv_fraction

    def n_of(d):
        return nv_per_n * d

    if args.t2_bath is not None:
        # bath coefficient is given per ppm; convert to per nm^-3
        per_ppm = float(ppm_to_density(1.0, carbon_density=cfg.carbon_density))
        t2 = dipolar_t2(args.t2, args.t2_bath / per_ppm)
    else:
        t2 = args.t2
    rows = sensitivity_vs_density(p, n_of, t2, rho)
    table = [{"rho_n_ppm": float(c), "rho_n_nm3": r.density, "epsilon_rel": r.epsilon_rel,
              "n_emitters_rel": r.n_emitters, "t2_us": r.t2, "eta_rel": r.eta_rel}
             for c, r in zip(ppm, rows)]
    best = optimal_density(rows)
    report = {
        "rows": table,
        "optimal_rho_n_ppm": float(ppm[[r.density for r in rows].index(best)]),
        "interior_optimum": bool(rows[0].density < best < rows[-1].density),
        "provenance": provenance(cfg),
    }
    if args.table_out is not None:
        write_csv(args.table_out, tuple(table[0]), [tuple(r.values()) for r in table])
    _dump(_note(cfg, report), args.out)
    return EXIT_OK


# argument parsing


def _common():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON run configuration (fallback: $NVQUENCH_CONFIG)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path (default: stdout)")
    common.add_argument("--target-power", type=float, default=argparse.SUPPRESS,
                        help="excitation power (uW) whose lifetime is reported (default 50)")
    common.add_argument("--longpass", type=float, default=argparse.SUPPRESS,
                        help="long-pass filter edge in nm (default 725)")
    return common


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="nvquench", parents=[common],
                                     description="Nitrogen quenching analysis of NV- ensembles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo decay histogram(s)")
    s.add_argument("--density-ppm", type=float, nargs="+", help="donor concentration(s) in ppm")
    s.add_argument("--photons", type=int, help="photons per histogram")
    s.add_argument("--emitters", type=int, help="emitters per ensemble")
    s.add_argument("--n-jobs", type=int, help="worker threads (output does not depend on it)")
    s.add_argument("--power", type=float, help="power (uW) to record in the histogram metadata")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit-decay", parents=[common], help="stretched-exponential fit of histogram(s)")
    s.add_argument("histograms", nargs="+")
    s.set_defaults(func=cmd_fit_decay)

    s = sub.add_parser("fit-tunnelling", parents=[common], help="fit A and alpha to a sample table")
    s.add_argument("table")
    s.add_argument("--curve", help="CSV for the epsilon_rel(rho) curve (default: <out>_curve.csv)")
    s.add_argument("--curve-min", type=float, default=0.1, help="curve start (ppm)")
    s.add_argument("--curve-max", type=float, default=1000.0, help="curve end (ppm)")
    s.add_argument("--curve-points", type=int, default=200)
    s.set_defaults(func=cmd_fit_tunnelling)

    s = sub.add_parser("predict-qy", parents=[common], help="relative yield at a donor concentration")
    s.add_argument("--ppm", type=float, required=True)
    s.set_defaults(func=cmd_predict_qy)

    s = sub.add_parser("max-nitrogen", parents=[common], help="largest concentration keeping a yield")
    s.add_argument("--target", type=float, required=True, help="relative yield, e.g. 0.9")
    s.set_defaults(func=cmd_max_nitrogen)

    s = sub.add_parser("concentration", parents=[common], help="concentration from an absorption spectrum")
    s.add_argument("spectrum")
    s.add_argument("--kind", choices=("ftir", "vis"), required=True)
    s.set_defaults(func=cmd_concentration)

    s = sub.add_parser("unmix", parents=[common], help="NV0/NV- unmixing of a directory of spectra")
    s.add_argument("directory")
    s.add_argument("--components", help="directory for the two component spectra")
    s.set_defaults(func=cmd_unmix)

    s = sub.add_parser("brightness", parents=[common], help="intensity-vs-power slope")
    s.add_argument("table")
    s.set_defaults(func=cmd_brightness)

    s = sub.add_parser("sensitivity", parents=[common], help="relative sensitivity vs concentration")
    s.add_argument("--ppm", type=float, nargs="+", required=True)
    s.add_argument("--nv-fraction", type=float, default=1.0,
                   help="NV centres per donor (sets N proportional to concentration)")
    s.add_argument("--t2", type=float, default=1.0, help="T2 in us (constant, or the low-density limit)")
    s.add_argument("--t2-bath", type=float,
                   help="donor-bath decoherence, 1/T2 grows by this many us^-1 per ppm")
    s.add_argument("--table-out", help="CSV copy of the table")
    s.set_defaults(func=cmd_sensitivity)
    return parser


def _resolve(args):
    cfg = load_config(getattr(args, "config", None))
    changes = {}
    if hasattr(args, "seed"):
        changes["seed"] = args.seed
    if hasattr(args, "target_power"):
        changes["target_power"] = args.target_power
    if hasattr(args, "longpass"):
        changes["longpass_nm"] = args.longpass
    if changes:
        try:
            cfg = cfg.replace(**changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    if not hasattr(args, "out"):
        args.out = None
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        return args.func(args, cfg)
    except INPUT_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"nvquench: error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"nvquench: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"nvquench: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
