"""Batch experiment driver.

Usage::

    hawkes-impact <experiment> --config <file> [--seed N] [--out DIR]

Each experiment writes CSV files (one JSON header line embedding the resolved
configuration and seed) and a ``summary.json``. ``--config`` takes a path or
the name of a bundled preset. Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
import warnings
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text, dumps, format_csv
from .errors import AccuracyWarning, ConfigurationError, HawkesImpactError, NumericalError
from .impact import exponent_link, exponent_link_inverse, fit_log_log, impact_limit_study, \
    near_critical_impact, near_critical_tau
from .kernel import EXPONENTIAL, KernelSpec
from .longmemory import a_for_scale_ratio, convergence_study, empirical_covariance, estimate_gamma, \
    fbm_limit_covariance
from .manipulation import ImpactModelSpec, manipulation_scan
from .price import propagator_price
from .resolvent import check_martingale_identity, compute_resolvent, propagator_closed_form, \
    propagator_from_resolvent, resolvent_closed_form_exponential
from .simulation import BUY, SELL, MarketConfig, cluster_statistics, simulate_branching, \
    simulate_thinning, time_rescaling_test

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

REQUIRED = object()

DEFAULTS = {
    "simulate": {
        "kernel": REQUIRED,
        "mu": REQUIRED,
        "horizon": REQUIRED,
        "kappa": 1.0,
        "v": 1.0,
        "burn_in": None,
        "method": "thinning",
        "price_step": 1.0,
    },
    "propagator": {
        "kernel": REQUIRED,
        "kappa": 1.0,
        "v": 1.0,
        "step": 1e-3,
        "horizon": REQUIRED,
        "tail": "mass",
        "tol": 1e-10,
        "max_iter": 100_000,
    },
    "impact": {
        "kernel": REQUIRED,
        "a_T": REQUIRED,
        "a_sequence": [],
        "tau_T": None,
        "F": 1.0,
        "kappa": 1.0,
        "v": 1.0,
        "n_times": 200,
        "fit_window": [0.01, 1.0],
    },
    "longmem": {
        "kernel": REQUIRED,
        "C_mu": 1.0,
        "h": 1.0,
        "lags": [0.0, 0.5, 1.0, 2.0, 5.0],
        "T": REQUIRED,
        "scale_ratio": REQUIRED,
        "empirical": None,
    },
    "roundtrip": {
        "model": REQUIRED,
        "rates": [0.25, 1.0, 4.0],
        "T": [10.0, 100.0, 1000.0],
        "tol": 1e-6,
        "method": "quadrature",
    },
    "exponents": {
        "kernel": REQUIRED,
        "a_T": REQUIRED,
        "F": 1.0,
        "n_times": 200,
        "fit_window": [0.01, 1.0],
        "empirical": REQUIRED,
        "tolerance": 0.1,
    },
}

EMPIRICAL_DEFAULTS = {
    "a": REQUIRED,
    "mu": REQUIRED,
    "horizon": REQUIRED,
    "burn_in": None,
    "h": 1.0,
    "step": None,
    "lags": [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
    "n_replicas": 1,
    "fit_window": None,
    "gamma_range": [0.05, 0.35],
}

EXPERIMENTS = tuple(DEFAULTS)


# ---------------------------------------------------------------------------
# configuration


def _merge(section: dict, defaults: dict, where: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigurationError(f"{where}: expected a JSON object")
    unknown = sorted(set(section) - set(defaults))
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")
    out = {}
    for key, default in defaults.items():
        if key in section:
            out[key] = section[key]
        elif default is REQUIRED:
            raise ConfigurationError(f"{where}: missing required key {key!r}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def preset_names() -> list[str]:
    root = resources.files("hawkes_impact") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(ref: str) -> dict:
    """Read a JSON config from a path, or from a bundled preset of that name."""
    path = Path(ref)
    try:
        if path.is_file():
            text = path.read_text(encoding="utf-8")
        else:
            name = path.name[:-5] if path.name.endswith(".json") else path.name
            preset = resources.files("hawkes_impact") / "presets" / f"{name}.json"
            if not preset.is_file():
                raise ConfigurationError(f"no config file or preset named {ref!r}")
            text = preset.read_text(encoding="utf-8")
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{ref}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{ref}: top level must be a JSON object")
    return cfg


def resolve_config(experiment: str, raw: dict, seed: int | None) -> dict:
    if experiment not in DEFAULTS:
        raise ConfigurationError(f"unknown experiment {experiment!r}")
    raw = dict(raw)
    named = raw.pop("experiment", experiment)
    if named != experiment:
        raise ConfigurationError(f"config is for {named!r}, not {experiment!r}")
    cfg_seed = raw.pop("seed", None)
    cfg = _merge(raw, DEFAULTS[experiment], experiment)
    if cfg.get("empirical") is not None:
        cfg["empirical"] = _merge(cfg["empirical"], EMPIRICAL_DEFAULTS, f"{experiment}.empirical")
    seed = cfg_seed if seed is None else seed
    needs_seed = experiment in {"simulate", "exponents"} or (
        experiment == "longmem" and cfg["empirical"] is not None)
    if needs_seed and seed is None:
        raise ConfigurationError(f"{experiment}: a seed is required (config 'seed' or --seed)")
    if seed is not None:
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigurationError("seed must be a nonnegative integer")
    cfg["seed"] = seed
    cfg["experiment"] = experiment
    return cfg


def _kernel(cfg: dict) -> KernelSpec:
    if not isinstance(cfg, dict):
        raise ConfigurationError("kernel must be a JSON object")
    return KernelSpec.from_dict(cfg)


# ---------------------------------------------------------------------------
# experiments; each returns ({file name: (header, columns)}, summary)


def _simulated_flow(base: KernelSpec, emp: dict, seed: int):
    """Near-critical flows for the empirical covariance."""
    spec = base.rescaled(float(emp["a"]))
    market = MarketConfig(spec, float(emp["mu"]), float(emp["horizon"]),
                          burn_in=emp["burn_in"], seed=seed)
    return [simulate_branching(market, BUY, r) for r in range(int(emp["n_replicas"]))]


def _empirical_gamma(base: KernelSpec, emp: dict, seed: int):
    streams = _simulated_flow(base, emp, seed)
    h = float(emp["h"])
    step = float(emp["step"]) if emp["step"] is not None else h
    curve = empirical_covariance(streams, h, emp["lags"], step=step)
    fit = estimate_gamma(curve, emp["fit_window"])
    lo, hi = emp["gamma_range"]
    events = int(sum(len(s) for s in streams))
    return curve, fit, events, bool(lo <= fit.gamma <= hi)


def run_simulate(cfg: dict):
    spec = _kernel(cfg["kernel"])
    market = MarketConfig(spec, float(cfg["mu"]), float(cfg["horizon"]), float(cfg["kappa"]),
                          float(cfg["v"]), cfg["burn_in"], seed=cfg["seed"])
    method = cfg["method"]
    if method == "thinning":
        sim = simulate_thinning
    elif method == "branching":
        sim = simulate_branching
    else:
        raise ConfigurationError(f"unknown simulation method {method!r}")
    buy, sell = sim(market, BUY, 0), sim(market, SELL, 0)
    zeta = propagator_closed_form(spec, market.kappa, market.v, step=market.horizon,
                                  horizon=market.horizon)
    grid = np.arange(0.0, market.horizon + 0.5 * cfg["price_step"], cfg["price_step"])
    price = propagator_price(buy, sell, zeta, grid)
    summary = {"expected_rate": market.stationary_rate,
               "events": {BUY: len(buy), SELL: len(sell)},
               "rate": {BUY: buy.rate, SELL: sell.rate}}
    # the compensator assumes no history before 0, so the test needs burn_in = 0
    if spec.family != "tabulated" and market.resolved_burn_in() == 0:
        summary["time_rescaling_ks_pvalue"] = {
            side: float(time_rescaling_test(s, spec, market.mu).pvalue)
            for side, s in ((BUY, buy), (SELL, sell))}
    if method == "branching":
        stats = cluster_statistics(buy, margin=market.horizon * 0.1)
        summary["mean_cluster_size"] = stats.mean_size
        summary["expected_cluster_size"] = 1.0 / (1.0 - spec.branching_ratio)
    checks = {}
    if "time_rescaling_ks_pvalue" in summary:
        checks["time_rescaling_ks"] = min(summary["time_rescaling_ks_pvalue"].values()) > 0.01
    if "mean_cluster_size" in summary:
        rel = abs(summary["mean_cluster_size"] / summary["expected_cluster_size"] - 1.0)
        checks["cluster_size_within_5pct"] = rel < 0.05
    files = {
        "events_buy.csv": ({"kind": "events", "side": BUY}, {"t": buy.times}),
        "events_sell.csv": ({"kind": "events", "side": SELL}, {"t": sell.times}),
        "price.csv": ({"kind": "price", "construction": "propagator", "P0": 0.0},
                      {"t": price.times, "price": price.values}),
    }
    return files, summary, checks


def run_propagator(cfg: dict):
    spec = _kernel(cfg["kernel"])
    kappa, v = float(cfg["kappa"]), float(cfg["v"])
    step, horizon = float(cfg["step"]), float(cfg["horizon"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        res = compute_resolvent(spec, step, horizon, float(cfg["tol"]), int(cfg["max_iter"]))
    if not res.converged:
        raise NumericalError("resolvent iteration did not converge",
                             {"iterations": res.iterations, "residual": res.residual,
                              "tol": cfg["tol"]})
    zr = propagator_from_resolvent(res, kappa, v, tail=cfg["tail"])
    zc = propagator_closed_form(spec, kappa, v, step, horizon)
    t = res.times
    zc_vals = zc(t)
    distance = float(np.max(np.abs(zr.values - zc_vals)) / abs(zc.zeta0))
    ident = check_martingale_identity(zr, spec)
    summary = {"zeta0": zc.zeta0, "resolvent_iterations": res.iterations,
               "resolvent_residual": res.residual, "horizon_warning": res.horizon_warning,
               "relative_sup_distance": distance, "identity_residual_max": ident.max_abs,
               "identity_residual_relative": ident.relative_max}
    checks = {"zeta_equivalence": distance < 1e-4,
              "martingale_identity": ident.relative_max < 1e-4}
    cols = {"t": t, "psi": res.values}
    if spec.family == EXPONENTIAL:
        exact = resolvent_closed_form_exponential(spec, t)
        err = float(np.max(np.abs(res.values - exact)))
        summary["psi_closed_form_error"] = err
        checks["psi_closed_form"] = err < 1e-6
        cols["psi_closed_form"] = exact
    files = {
        "resolvent.csv": ({"kind": "resolvent", "step": step, "horizon": horizon}, cols),
        "propagator.csv": ({"kind": "propagator", "tail": cfg["tail"], "zeta0": zc.zeta0},
                           {"t": t, "zeta_resolvent": zr.values, "zeta_closed_form": zc_vals}),
    }
    return files, summary, checks


def _impact_curve(base, cfg):
    alpha = base.tail_alpha
    a_T = float(cfg["a_T"])
    tau = cfg.get("tau_T") or near_critical_tau(a_T, alpha)
    t = np.r_[0.0, np.geomspace(1e-3, 1.0, int(cfg["n_times"]))]
    rmi = near_critical_impact(base, a_T, t, cfg.get("kappa", 1.0), cfg.get("v", 1.0),
                               float(cfg["F"]), tau)
    fit = fit_log_log(rmi.times[1:], rmi.values[1:], tuple(cfg["fit_window"]))
    return rmi, fit


def run_impact(cfg: dict):
    base = _kernel(cfg["kernel"])
    if base.tail_alpha is None:
        raise ConfigurationError("impact experiment needs a heavy-tailed kernel")
    rmi, fit = _impact_curve(base, cfg)
    alpha = base.tail_alpha
    summary = {"nu_hat": fit.exponent, "nu_expected": 1.0 - alpha, "fit": fit.to_dict(),
               "renormalization": rmi.renormalization}
    checks = {"nu_hat_within_0.05": abs(fit.exponent - (1.0 - alpha)) < 0.05}
    if cfg["a_sequence"]:
        study = impact_limit_study(base, cfg["a_sequence"], None, float(cfg["kappa"]),
                                   float(cfg["v"]), float(cfg["F"]))
        summary["limit_study"] = study.to_dict()
        checks["limit_distance_decreasing"] = study.decreasing
    files = {"rmi.csv": ({"kind": "impact", "renormalization": rmi.renormalization},
                         {"t": rmi.times, "RMI": rmi.values})}
    return files, summary, checks


def run_longmem(cfg: dict):
    base = _kernel(cfg["kernel"])
    if base.tail_alpha is None:
        raise ConfigurationError("longmem experiment needs a heavy-tailed kernel")
    alpha = base.tail_alpha
    T_values = [float(x) for x in cfg["T"]]
    ratios = [float(x) for x in cfg["scale_ratio"]]
    if len(T_values) != len(ratios):
        raise ConfigurationError("T and scale_ratio must have equal length")
    a_values = [a_for_scale_ratio(T, r, alpha) for T, r in zip(T_values, ratios)]
    h = float(cfg["h"])
    study = convergence_study(base.rescaled(1.0), float(cfg["C_mu"]), h, cfg["lags"],
                              T_values, a_values)
    lags = np.asarray(cfg["lags"], dtype=float)
    limit = fbm_limit_covariance(study.amplitude, alpha, h, lags)
    cols = {"tau": lags, "fbm_limit": limit.values}
    for T, cur in zip(T_values, study.curves):
        cols[f"T={T:g}"] = cur.values
    summary = {"convergence": study.to_dict()}
    checks = {"sup_distance_decreasing": study.decreasing}
    files = {"rescaled_covariance.csv": ({"kind": "covariance", "h": h}, cols)}
    emp = cfg["empirical"]
    if emp is not None:
        curve, fit, events, ok = _empirical_gamma(base, emp, cfg["seed"])
        summary["empirical"] = {"gamma_hat": fit.gamma, "fit": fit.to_dict(), "events": events}
        checks["gamma_hat_in_range"] = ok
        checks["enough_events"] = events >= 10_000
        files["empirical_covariance.csv"] = (
            {"kind": "covariance", "h": curve.h, "provenance": curve.provenance},
            {"tau": curve.lags, "C": curve.values, "SE": curve.se})
    return files, summary, checks


def run_roundtrip(cfg: dict):
    model = ImpactModelSpec.from_dict(cfg["model"])
    rates = [float(r) for r in cfg["rates"]]
    grid = [(a, b) for a in rates for b in rates if a != b]
    report = manipulation_scan(model, grid, tuple(cfg["T"]), float(cfg["tol"]), cfg["method"])
    pts = report.points
    cols = {key: np.array([p[key] for p in pts], dtype=float)
            for key in ("v1", "v2", "limit", "error", "leading_term")}
    cols["negative"] = np.array([int(p["negative"]) for p in pts])
    summary = report.to_dict()
    checks = {}
    if model.is_linear:
        checks["linear_scans_clean"] = not report.manipulable
    elif model.G_inf > 0:
        checks["nonlinear_flagged"] = report.manipulable
    files = {"roundtrip.csv": ({"kind": "roundtrip", "verdict": report.verdict}, cols)}
    return files, summary, checks


def run_exponents(cfg: dict):
    base = _kernel(cfg["kernel"])
    if base.tail_alpha is None:
        raise ConfigurationError("exponents experiment needs a heavy-tailed kernel")
    rmi, fit = _impact_curve(base, cfg)
    curve, gfit, events, in_range = _empirical_gamma(base, cfg["empirical"], cfg["seed"])
    predicted = float(exponent_link(gfit.gamma))
    gap = abs(fit.exponent - predicted)
    exact = exponent_link_inverse(exponent_link(Fraction(1, 5))) == Fraction(1, 5)
    summary = {"nu_hat": fit.exponent, "gamma_hat": gfit.gamma, "nu_from_gamma": predicted,
               "gap": gap, "events": events, "gamma_fit": gfit.to_dict(), "nu_fit": fit.to_dict()}
    checks = {"exponent_link": gap < float(cfg["tolerance"]), "exact_identity": exact,
              "gamma_hat_in_range": in_range}
    files = {
        "rmi.csv": ({"kind": "impact", "renormalization": rmi.renormalization},
                    {"t": rmi.times, "RMI": rmi.values}),
        "empirical_covariance.csv": ({"kind": "covariance", "h": curve.h},
                                     {"tau": curve.lags, "C": curve.values, "SE": curve.se}),
    }
    return files, summary, checks


RUNNERS = {"simulate": run_simulate, "propagator": run_propagator, "impact": run_impact,
           "longmem": run_longmem, "roundtrip": run_roundtrip, "exponents": run_exponents}


def run(experiment: str, cfg: dict, out: Path) -> dict:
    """Run a resolved config and write its outputs under ``out``; returns the summary."""
    files, summary, checks = RUNNERS[experiment](cfg)
    provenance = {"experiment": experiment, "config": cfg, "seed": cfg["seed"],
                  "version": __version__}
    for name, (header, cols) in files.items():
        atomic_write_text(out / name, format_csv({**header, **provenance}, cols))
    full = {**provenance, "results": summary, "checks": checks,
            "all_checks_passed": all(checks.values()), "files": sorted(files)}
    atomic_write_text(out / "summary.json", json.dumps(json.loads(dumps(full)), indent=2,
                                                       sort_keys=True) + "\n")
    return full


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hawkes-impact", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="JSON config path or bundled preset name")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", type=Path, default=None, help="output directory (default out/<experiment>)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    out = args.out if args.out is not None else Path("out") / args.experiment
    try:
        cfg = resolve_config(args.experiment, load_config(args.config), args.seed)
        summary = run(args.experiment, cfg, out)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(dumps(exc.diagnostics), file=sys.stderr)
        return EXIT_NUMERICAL
    except FloatingPointError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (HawkesImpactError, KeyError, TypeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = "all checks passed" if summary["all_checks_passed"] else "some checks failed"
    print(f"{args.experiment}: wrote {len(summary['files']) + 1} files to {out} ({status})")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
