"""Command-line entry point: config-driven, reproducible experiment runs.

Usage::

    spinflow <subcommand> --config CONFIG.toml [--out DIR]

Subcommands: ``pde``, ``jko``, ``particles``, ``dissipation``, ``rate``,
``hydro-ladder``, ``check``.  The config is a TOML file (see ``configs/``
for commented examples); ``--out`` defaults to the config's
``output_dir`` or ``./out``.  Every run writes ``manifest.json`` (config
echo, library versions, wall time, output listing) next to its CSVs, and
identical configs and seeds reproduce CSV outputs byte for byte.

Exit codes: 0 success, 1 a declared check failed, 2 configuration or
runtime error.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .analysis import (
    dissipation_report,
    hydrodynamic_ladder,
    rate_report,
)
from .checks import run_suite
from .functionals import metric_slope
from .grids import ThetaGrid, TorusGrid
from .jko import JkoConfig, check_tau, solve_jko
from .measures import GridMeasure, normalize_fibers
from .models import ModelParams
from .particles import coarsen_to_sites, sample_from_fibers, simulate
from .pde import curve_observables, gibbs_measure, solve_pde, write_curve_csv
from .transport import fibered_wasserstein

DISTANCE_COLUMNS = "t,quantity,value"


class ConfigError(ValueError):
    """Configuration problem, reported with the offending key path."""


def _get(table, key, kind, default=None, path=""):
    full = f"{path}.{key}" if path else key
    if key not in table:
        if default is not None:
            return default
        raise ConfigError(f"missing config key '{full}'")
    value = table[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(
            f"config key '{full}' must be {kind.__name__},"
            f" got {type(value).__name__}"
        )
    return value


def _build_kernel(table):
    kind = _get(table, "kernel", str, "cosine", "model")
    amp = _get(table, "kernel_amplitude", float, 0.5, "model")
    if kind == "cosine":
        return lambda x: amp * np.cos(2.0 * np.pi * np.asarray(x, dtype=float))
    if kind == "constant":
        return lambda x: np.full_like(np.asarray(x, dtype=float), amp)
    if kind == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    raise ConfigError(
        f"model.kernel must be one of cosine/constant/zero, got '{kind}'"
    )


def build_model(config) -> ModelParams:
    table = config.get("model", {})
    coeffs = tuple(
        float(c) for c in _get(table, "psi_coeffs", list,
                               [0.0, 0.0, -0.5, 0.0, 0.25], "model")
    )
    try:
        return ModelParams(
            psi_coeffs=coeffs,
            j_kernel=_build_kernel(table),
            growth_exponent=_get(table, "growth_exponent", int, 2, "model"),
            coercivity_coeff=_get(table, "coercivity_coeff", float, 0.125,
                                  "model"),
            quadratic_coeff=_get(table, "quadratic_coeff", float, 1.0,
                                 "model"),
            offset_coeff=_get(table, "offset_coeff", float, 4.5, "model"),
            theta_range=(
                _get(table, "theta_min", float, -6.0, "model"),
                _get(table, "theta_max", float, 6.0, "model"),
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def build_grids(config):
    table = config.get("grid", {})
    n_x = _get(table, "n_x", int, 64, "grid")
    n_theta = _get(table, "n_theta", int, 256, "grid")
    model = config.get("model", {})
    lo = _get(model, "theta_min", float, -6.0, "model")
    hi = _get(model, "theta_max", float, 6.0, "model")
    return TorusGrid(n_x), ThetaGrid(lo, hi, n_theta)


def build_initial(config, p: ModelParams, torus: TorusGrid,
                  theta: ThetaGrid) -> GridMeasure:
    table = config.get("initial", {})
    kind = _get(table, "kind", str, "gaussian", "initial")
    if kind == "gibbs":
        return gibbs_measure(torus, theta, p)
    if kind == "gaussian":
        amp = _get(table, "mean_amplitude", float, 0.6, "initial")
        var = _get(table, "variance", float, 0.5, "initial")
        var_amp = _get(table, "variance_amplitude", float, 0.0, "initial")
        wave = np.cos(2.0 * np.pi * torus.x)
        variances = var + var_amp * wave
        if np.min(variances) <= 0.0:
            raise ConfigError(
                "initial: variance + variance_amplitude * cos must stay"
                " positive across sites"
            )
        means = amp * wave
        raw = np.exp(
            -0.5 * (theta.centers[None, :] - means[:, None]) ** 2
            / variances[:, None]
        )
        return normalize_fibers(raw, torus, theta)
    raise ConfigError(
        f"initial.kind must be gaussian or gibbs, got '{kind}'"
    )


def _write_distances(curve, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(DISTANCE_COLUMNS + "\n")
        for k in range(1, len(curve)):
            d = fibered_wasserstein(curve[k - 1], curve[k])
            fh.write(f"{curve.times[k]:.17g},step_wl,{d:.17g}\n")


def _declared_checks(config, curve, p):
    """Evaluate [checks] assertions declared in the config; return failures."""
    table = config.get("checks", {})
    failures = []
    if "final_slope_below" in table:
        bound = _get(table, "final_slope_below", float, path="checks")
        slope = metric_slope(curve[len(curve) - 1], p)
        line = f"final_slope_below: slope = {slope:.6e} (bound {bound:g})"
        print(("PASS  " if slope < bound else "FAIL  ") + line)
        if not slope < bound:
            failures.append(line)
    if "final_energy_below" in table:
        from .functionals import free_energy
        bound = _get(table, "final_energy_below", float, path="checks")
        fe = free_energy(curve[len(curve) - 1], p)
        line = f"final_energy_below: energy = {fe:.6e} (bound {bound:g})"
        print(("PASS  " if fe < bound else "FAIL  ") + line)
        if not fe < bound:
            failures.append(line)
    return failures


def _run_pde(config, out: Path) -> tuple:
    p = build_model(config)
    torus, theta = build_grids(config)
    mu0 = build_initial(config, p, torus, theta)
    table = config.get("pde", {})
    t_final = _get(table, "t_final", float, 0.5, "pde")
    dt = table.get("dt")
    res = solve_pde(
        mu0, p, t_final,
        dt=float(dt) if dt is not None else None,
        n_samples=_get(table, "n_samples", int, 26, "pde"),
        flux=_get(table, "flux", str, "exponential", "pde"),
    )
    res.observables.to_csv(out / "observables.csv")
    write_curve_csv(res.curve, out / "states")
    _write_distances(res.curve, out / "distances.csv")
    outputs = ["observables.csv", "states/", "distances.csv"]
    return _declared_checks(config, res.curve, p), outputs


def _run_jko(config, out: Path) -> tuple:
    p = build_model(config)
    torus, theta = build_grids(config)
    mu0 = build_initial(config, p, torus, theta)
    table = config.get("jko", {})
    cfg = JkoConfig(
        tau=_get(table, "tau", float, 0.05, "jko"),
        m_q=_get(table, "m_q", int, 64, "jko"),
        gtol=_get(table, "gtol", float, 0.05, "jko"),
    )
    check_tau(cfg, p)
    t_final = _get(table, "t_final", float, 0.5, "jko")
    res = solve_jko(mu0, p, cfg, t_final)
    curve_observables(res.curve, p).to_csv(out / "observables.csv")
    res.diagnostics.to_csv(out / "jko_diag.csv")
    write_curve_csv(res.curve, out / "states")
    _write_distances(res.curve, out / "distances.csv")
    outputs = ["observables.csv", "jko_diag.csv", "states/", "distances.csv"]
    return _declared_checks(config, res.curve, p), outputs


def _run_particles(config, out: Path) -> tuple:
    p = build_model(config)
    torus, theta = build_grids(config)
    mu0 = build_initial(config, p, torus, theta)
    table = config.get("particles", {})
    n = _get(table, "n_particles", int, 256, "particles")
    if torus.n_x % n != 0:
        raise ConfigError(
            f"particles.n_particles = {n} must divide grid.n_x = {torus.n_x}"
        )
    dt = _get(table, "dt", float, 1e-3, "particles")
    t_final = _get(table, "t_final", float, 1.0, "particles")
    n_samples = _get(table, "n_samples", int, 11, "particles")
    seeds = [int(s) for s in _get(table, "seeds", list, [0], "particles")]
    sample_times = np.linspace(0.0, t_final, n_samples)
    fibers = coarsen_to_sites(mu0, n)
    outputs = []
    for seed in seeds:
        theta0 = sample_from_fibers(fibers, seed)
        traj = simulate(theta0, p, dt, t_final, seed,
                        sample_times=sample_times)
        name = f"trajectory_seed{seed}.csv"
        traj.to_csv(out / name)
        outputs.append(name)
    return [], outputs


def _curve_for_analysis(config, p, torus, theta):
    kind = _get(config.get("dissipation", {}), "dynamics", str, "pde",
                "dissipation")
    mu0 = build_initial(config, p, torus, theta)
    if kind == "pde":
        table = config.get("pde", {})
        res = solve_pde(
            mu0, p, _get(table, "t_final", float, 0.5, "pde"),
            n_samples=_get(table, "n_samples", int, 26, "pde"),
        )
        return res.curve
    if kind == "jko":
        table = config.get("jko", {})
        cfg = JkoConfig(
            tau=_get(table, "tau", float, 0.05, "jko"),
            m_q=_get(table, "m_q", int, 64, "jko"),
            gtol=_get(table, "gtol", float, 0.05, "jko"),
        )
        check_tau(cfg, p)
        return solve_jko(
            mu0, p, cfg, _get(table, "t_final", float, 0.5, "jko")
        ).curve
    raise ConfigError(
        f"dissipation.dynamics must be pde or jko, got '{kind}'"
    )


def _run_dissipation(config, out: Path) -> tuple:
    p = build_model(config)
    torus, theta = build_grids(config)
    curve = _curve_for_analysis(config, p, torus, theta)
    rep = dissipation_report(curve, p)
    rep.to_csv(out / "dissipation.csv")
    (out / "report.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    (out / "report.txt").write_text(rep.to_text() + "\n", encoding="utf-8")
    print(rep.to_text())
    return [], ["dissipation.csv", "report.json", "report.txt"]


def _run_rate(config, out: Path) -> tuple:
    p = build_model(config)
    torus, theta = build_grids(config)
    curve = _curve_for_analysis(config, p, torus, theta)
    ref_kind = _get(config.get("rate", {}), "reference", str, "self", "rate")
    if ref_kind == "self":
        mu_ref = curve[0]
    elif ref_kind == "gibbs":
        mu_ref = gibbs_measure(torus, theta, p)
    else:
        raise ConfigError(
            f"rate.reference must be self or gibbs, got '{ref_kind}'"
        )
    rep = rate_report(curve, mu_ref, p)
    rep.dissipation.to_csv(out / "dissipation.csv")
    (out / "rate.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    (out / "rate.txt").write_text(rep.to_text() + "\n", encoding="utf-8")
    print(rep.to_text())
    return [], ["dissipation.csv", "rate.json", "rate.txt"]


def _run_hydro(config, out: Path) -> tuple:
    p = build_model(config)
    torus, theta = build_grids(config)
    mu0 = build_initial(config, p, torus, theta)
    table = config.get("hydro", {})
    ladder = [int(n) for n in _get(table, "site_ladder", list,
                                   [16, 32, 64], "hydro")]
    for n in ladder:
        if torus.n_x % n != 0:
            raise ConfigError(
                f"hydro.site_ladder entry {n} must divide grid.n_x ="
                f" {torus.n_x}"
            )
    seeds = [int(s) for s in _get(table, "seeds", list,
                                  list(range(8)), "hydro")]
    t_final = _get(table, "t_final", float, 0.3, "hydro")
    sample_times = [
        float(t) for t in _get(table, "sample_times", list,
                               [0.0, t_final / 2, t_final], "hydro")
    ]
    res = solve_pde(mu0, p, t_final, sample_times=sample_times)
    tab = hydrodynamic_ladder(
        res.curve, p, ladder, seeds,
        particle_dt=_get(table, "particle_dt", float, 5e-3, "hydro"),
        n_x_hist=int(table["n_x_hist"]) if "n_x_hist" in table else None,
    )
    tab.to_csv(out / "ladder.csv")
    return [], ["ladder.csv"]


def _run_check(config, out: Path) -> tuple:
    p = build_model(config)
    table = config.get("checks", {})
    which = table.get("run")
    if which is not None and not isinstance(which, list):
        raise ConfigError("checks.run must be a list of check names")
    try:
        results = run_suite(p, which)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    lines = [r.line() for r in results]
    print("\n".join(lines))
    (out / "checks.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    failures = [r.name for r in results if not r.passed]
    return failures, ["checks.txt"]


_RUNNERS = {
    "pde": _run_pde,
    "jko": _run_jko,
    "particles": _run_particles,
    "dissipation": _run_dissipation,
    "rate": _run_rate,
    "hydro-ladder": _run_hydro,
    "check": _run_check,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spinflow",
        description="Local mean-field spin systems: transport metric,"
        " free-energy gradient flow, and particle dynamics.",
    )
    parser.add_argument("subcommand", choices=sorted(_RUNNERS))
    parser.add_argument("--config", required=True,
                        help="TOML configuration file")
    parser.add_argument("--out", default=None,
                        help="output directory (default: config output_dir"
                        " or ./out)")
    args = parser.parse_args(argv)

    start = time.perf_counter()
    try:
        with open(args.config, "rb") as fh:
            config = tomllib.load(fh)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except tomllib.TOMLDecodeError as exc:
        print(f"error: malformed config: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out if args.out is not None
               else config.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)

    try:
        failures, outputs = _RUNNERS[args.subcommand](config, out)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error ({args.subcommand}): {exc}", file=sys.stderr)
        return 2

    manifest = {
        "command": args.subcommand,
        "config": config,
        "config_path": str(args.config),
        "failed_checks": failures,
        "outputs": sorted(outputs + ["manifest.json"]),
        "versions": {
            "numpy": np.__version__,
            "python": platform.python_version(),
            "scipy": scipy.__version__,
            "spinflow": __version__,
        },
        "wall_time_seconds": round(time.perf_counter() - start, 3),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
