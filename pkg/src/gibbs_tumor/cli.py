"""Command-line entry point: ``gibbs-tumor {stationary,bifurcation,simulate,verify}``.

Scenarios are read from a TOML file (or the JSON ``config`` block embedded in
any previous ``summary.json``). Every run writes into one output directory
with fixed file names.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import INITIAL_FAMILIES, ModelParams, SmoothingSpec, nondimensionalize
from .quasi import IntegrationError, QuasiOpts, Trajectory, classify_limit, integrate_quasi
from .solver import SolverOpts, simulate_full
from .stationary import BracketError, find_stationary_radii, scan_bifurcation
from .verification import (
    Check,
    MatrixSettings,
    OutcomeCase,
    Status,
    VerificationReport,
    _clean,
    audit_bounds,
    audit_gamma_monotonicity,
    check_spatial_convergence,
    check_temporal_convergence,
    outcome_matrix,
    run_scaling_study,
    starvation_cases,
)

log = logging.getLogger("gibbs_tumor")

DEFAULTS = {
    "params": {"c": 0.0, "lambda": 1.0, "mu": 1.0, "sigma_tilde": 0.3, "sigma_bar": 1.0,
               "gamma": 0.5},
    "smoothing": {"kind": "cubic"},
    "initial": {"family": "comparison", "R0": 2.0},
    "solver": {"n_grid": 201, "dt_init": 1e-4, "dt_max": 0.5, "picard_tol": 1e-10,
               "picard_max": 8, "scheme": "BackwardEuler", "extinction_floor": 1e-8,
               "stationary_rate": 1e-9, "bound_tol": 1e-8},
    "quasi": {"rtol": 1e-9, "atol": 1e-15, "extinction_floor": 1e-8,
              "stationary_rate": 1e-12, "h_max": 0.0},
    "run": {"t_end": 2000.0, "snapshot_times": [], "tol_conv_quasi": 1e-5,
            "tol_conv_full": 1e-3, "tol_rate": 1e-6},
    "bifurcation": {"axis": "gamma", "lo": 0.25, "hi": 1.0, "n_samples": 16},
    "verify": {
        "bounds": True, "bounds_c": 1e-2, "bounds_R0": 2.0, "bounds_t_end": 20.0,
        "bounds_dt_max": 0.05,
        "bounds_families": ["comparison", "quadratic", "saturated_core"],
        "matrix": True, "matrix_c": 1e-3, "small_c": 1e-2, "eps_fraction": 0.05,
        "random_dichotomy": 10, "cases": [],
        "scaling": True, "scaling_R0": 2.0, "scaling_t_end": 10.0,
        "scaling_c": [0.1, 0.05, 0.025, 0.0125], "scaling_dt_max": 0.01,
        "convergence": True, "convergence_R0": 4.0, "convergence_t_end": 4.0,
        "convergence_c": 0.1, "convergence_n_base": 101, "convergence_dt": 0.01,
        "temporal_dts": [0.04, 0.02, 0.01],
        "gamma_scan": True, "gamma_lo": 0.25, "gamma_hi": 1.0, "gamma_n": 16,
    },
}
CASE_KEYS = {"R0", "sigma_tilde", "c", "family"}


class ConfigError(ValueError):
    pass


def load_config(path: str | None) -> dict:
    """Read a scenario file and merge it over the defaults; unknown keys are errors."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            if p.suffix == ".json":
                raw = json.loads(text)
                if isinstance(raw, dict) and isinstance(raw.get("config"), dict):
                    raw = raw["config"]
            else:
                raw = tomllib.loads(text)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return resolve_config(raw)


def resolve_config(raw: dict) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table of sections")
    for section, values in raw.items():
        if section not in cfg:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in values.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            default = cfg[section][key]
            if isinstance(default, bool) and not isinstance(value, bool):
                raise ConfigError(f"[{section}] {key} must be true or false")
            if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            cfg[section][key] = value
    for case in cfg["verify"]["cases"]:
        if not isinstance(case, dict) or set(case) - CASE_KEYS or not {"R0", "sigma_tilde", "c"} <= set(case):
            raise ConfigError(f"verify case needs keys R0, sigma_tilde, c (optional family): {case!r}")
    try:
        params_from(cfg)
        spec_from(cfg)
        solver_opts(cfg)
        quasi_opts(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["initial"]["family"] not in INITIAL_FAMILIES:
        raise ConfigError(f"unknown initial family {cfg['initial']['family']!r}; "
                          f"choose from {sorted(INITIAL_FAMILIES)}")
    if not cfg["run"]["t_end"] > 0:
        raise ConfigError("run.t_end must be positive")
    b = cfg["bifurcation"]
    if b["axis"] not in ("gamma", "sigma_tilde"):
        raise ConfigError("bifurcation.axis must be 'gamma' or 'sigma_tilde'")
    if not (b["lo"] > 0 and b["hi"] > 0):
        raise ConfigError(f"bifurcation range must be positive, got [{b['lo']}, {b['hi']}]")
    if b["n_samples"] < 1 or (b["n_samples"] > 1 and not b["lo"] < b["hi"]):
        raise ConfigError("bifurcation needs n_samples >= 1 and lo < hi")
    return cfg


def params_from(cfg) -> ModelParams:
    p = cfg["params"]
    return ModelParams(c=float(p["c"]), lam=float(p["lambda"]), mu=float(p["mu"]),
                       sigma_tilde=float(p["sigma_tilde"]), sigma_bar=float(p["sigma_bar"]),
                       gamma=float(p["gamma"]))


def spec_from(cfg, gamma: float | None = None) -> SmoothingSpec:
    g = cfg["params"]["gamma"] if gamma is None else gamma
    return SmoothingSpec(float(g), cfg["smoothing"]["kind"])


def solver_opts(cfg, **over) -> SolverOpts:
    s = dict(cfg["solver"])
    s["snapshot_times"] = tuple(cfg["run"]["snapshot_times"])
    s.update(over)
    return SolverOpts(**s)


def quasi_opts(cfg) -> QuasiOpts:
    q = dict(cfg["quasi"])
    q["h_max"] = math.inf if q["h_max"] <= 0 else q["h_max"]
    return QuasiOpts(**q)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n",
                    encoding="utf-8")


def _scaled(cfg):
    params = params_from(cfg)
    scaled, factors = nondimensionalize(params)
    return params, scaled, factors, SmoothingSpec(scaled.gamma, cfg["smoothing"]["kind"])


def cmd_stationary(cfg, out: Path, args) -> int:
    params, scaled, factors, spec = _scaled(cfg)
    land = find_stationary_radii(scaled.sigma_tilde, scaled, spec)
    record = land.to_dict()
    record["radii_user_units"] = {
        "r_sharp": factors.radius_to_user(land.r_sharp),
        "roots": [factors.radius_to_user(r.radius) for r in land.roots]}
    record["config"] = cfg
    _dump_json(out / "landscape.json", record)
    print(f"r_sharp = {land.r_sharp!r}  theta_star = {land.theta_star!r}")
    if not land.roots:
        print("no stationary solutions")
    for i, root in enumerate(land.roots, 1):
        print(f"R_s{i} = {factors.radius_to_user(root.radius)!r}  {root.stability.value}")
    return 0


def cmd_bifurcation(cfg, out: Path, args) -> int:
    params, scaled, factors, spec = _scaled(cfg)
    b = cfg["bifurcation"]
    k = factors.length
    if b["axis"] == "gamma":
        lo, hi = b["lo"] * k, b["hi"] * k
    else:
        lo, hi = b["lo"] / factors.concentration, b["hi"] / factors.concentration
    scan = scan_bifurcation(b["axis"], lo, hi, int(b["n_samples"]), scaled, spec,
                            workers=args.parallel)
    (out / "scan.csv").write_text(scan.to_csv(), encoding="utf-8")
    status = 0
    summary = {"config": cfg, "errors": [s.error for s in scan.samples if s.error]}
    if b["axis"] == "gamma":
        report = audit_gamma_monotonicity(scan)
        report.scenario = {"config": cfg}
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        print(report.to_text(), end="")
        status = 0 if report.ok else 1
        summary["ok"] = report.ok
    _dump_json(out / "summary.json", summary)
    print(f"wrote {len(scan.samples)} samples to {out / 'scan.csv'}")
    return status


def cmd_simulate(cfg, out: Path, args) -> int:
    params, scaled, factors, spec_s = _scaled(cfg)
    run = cfg["run"]
    R0 = float(cfg["initial"]["R0"])
    land = find_stationary_radii(scaled.sigma_tilde, scaled.with_(c=0.0), spec_s)
    summary = {"config": cfg, "landscape": land.to_dict()}
    failure = None
    if params.c == 0.0:
        try:
            traj = integrate_quasi(factors.radius_to_scaled(R0), run["t_end"], scaled, spec_s,
                                   quasi_opts(cfg))
        except IntegrationError as exc:
            traj, failure = exc.partial, str(exc)
        cls = classify_limit(traj, land, run["tol_conv_quasi"], run["tol_rate"])
        user = Trajectory(traj.times, traj.radii / factors.length,
                          {"dR_dt": traj.columns["dR_dt"] / factors.length}, meta=traj.meta)
        (out / "trajectory.csv").write_text(user.to_csv(), encoding="utf-8")
    else:
        spec = spec_from(cfg)
        opts = solver_opts(cfg)
        data = INITIAL_FAMILIES[cfg["initial"]["family"]](R0, params, spec, opts.n_grid)
        try:
            user = simulate_full(data, run["t_end"], params, spec, opts)
        except IntegrationError as exc:
            user, failure = exc.partial, str(exc)
        k = factors.length
        as_scaled = Trajectory(user.times, user.radii * k,
                               {"dR_dt": user.columns["dR_dt"] * k}, meta=user.meta)
        cls = classify_limit(as_scaled, land, run["tol_conv_full"], run["tol_rate"])
        (out / "trajectory.csv").write_text(
            user.to_csv(extra=("sup_dev_from_v", "dt_used", "picard_iters")), encoding="utf-8")
        for ts, prof in user.snapshots:
            (out / f"profile_t{ts!r}.csv").write_text(prof.to_csv(), encoding="utf-8")
    result = cls.to_dict()
    result["final_R"] = user.final_R
    result["final_rate"] = float(user.columns["dR_dt"][-1])
    if result["target"] is not None:
        result["target"] = factors.radius_to_user(result["target"])
    if result["fitted_rate"] is not None:
        result["fitted_rate"] = result["fitted_rate"]
    summary.update(result)
    summary["params"] = params.to_dict()
    summary["termination"] = user.meta.get("termination")
    summary["n_steps"] = int(user.times.size - 1)
    if failure:
        summary["failure"] = failure
    _dump_json(out / "summary.json", summary)
    print(f"{result['outcome']}: final R = {user.final_R!r} at t = {float(user.times[-1])!r}")
    if failure:
        print(f"integration failed: {failure}", file=sys.stderr)
        return 1
    return 0


def _default_cases(v, scaled, spec, seed):
    land = find_stationary_radii(scaled.sigma_tilde, scaled, spec)
    sb = scaled.sigma_bar
    cases = []
    s = scaled.sigma_tilde
    starve = s if s > sb else 1.2 * sb
    R_big = land.R_s2 if land.n_roots == 2 else 5.0
    cases += starvation_cases(R_big, starve)
    if land.n_roots == 2:
        R1, R2 = land.R_s1, land.R_s2
        eps = v["eps_fraction"] * (R2 - R1)
        c = v["matrix_c"]
        cases += [OutcomeCase(0.5 * R1, s, 0.0), OutcomeCase(1.5 * R1, s, 0.0),
                  OutcomeCase(2.0 * R2, s, 0.0)]
        if R1 - eps > 0:
            cases.append(OutcomeCase(0.9 * (R1 - eps), s, c, "saturated_core"))
        cases += [OutcomeCase(R1 + 2.0 * eps, s, c, "quadratic"),
                  OutcomeCase(2.0 * R2, s, c, "saturated_core")]
        n = int(v["random_dichotomy"])
        if n > 0:
            rng = np.random.default_rng(seed)
            below = rng.uniform(0.0, R1, n)
            above = rng.uniform(R1, 10.0 * R2, n)
            cases += [OutcomeCase(float(r), s, 0.0) for r in np.concatenate([below, above]) if r > 0]
    if land.theta_star < sb:
        mid = 0.5 * (land.theta_star + sb)
        cases.append(OutcomeCase(R_big, mid, v["matrix_c"], "saturated_core"))
    return cases


def cmd_verify(cfg, out: Path, args) -> int:
    params = params_from(cfg)
    if not params.is_scaled:
        raise ConfigError("verify expects scaled parameters (lambda = sigma_bar = 1)")
    spec = spec_from(cfg)
    v = cfg["verify"]
    report = VerificationReport(scenario={"config": cfg, "seed": args.seed})
    base = params.with_(c=0.0)

    if v["bounds"]:
        p = params.with_(c=v["bounds_c"])
        opts = solver_opts(cfg, dt_max=v["bounds_dt_max"], stationary_rate=0.0, snapshot_times=())
        for fam in v["bounds_families"]:
            data = INITIAL_FAMILIES[fam](v["bounds_R0"], p, spec, opts.n_grid)
            try:
                traj = simulate_full(data, v["bounds_t_end"], p, spec, opts)
            except IntegrationError as exc:
                report.checks.append(Check(f"bounds[{fam}]", "a-priori bounds", Status.FAIL, math.nan,
                                           f"simulation aborted: {exc}"))
                continue
            for chk in audit_bounds(traj, p).checks:
                chk.name = f"{chk.name}[{fam}]"
                report.checks.append(chk)
        qtraj = integrate_quasi(v["bounds_R0"], v["bounds_t_end"], base, spec, quasi_opts(cfg))
        for chk in audit_bounds(qtraj, base, spec).checks:
            chk.name = f"{chk.name}[quasi]"
            report.checks.append(chk)

    if v["matrix"]:
        if v["cases"]:
            cases = [OutcomeCase(float(c["R0"]), float(c["sigma_tilde"]), float(c["c"]),
                                 c.get("family", "comparison")) for c in v["cases"]]
        else:
            cases = _default_cases(v, base, spec, args.seed)
        settings = MatrixSettings(t_end=cfg["run"]["t_end"], eps_fraction=v["eps_fraction"],
                                  small_c=v["small_c"], tol_conv_quasi=cfg["run"]["tol_conv_quasi"],
                                  tol_conv_full=cfg["run"]["tol_conv_full"],
                                  tol_rate=cfg["run"]["tol_rate"])
        report.extend(outcome_matrix(cases, base, spec, solver_opts(cfg, snapshot_times=()),
                                     quasi_opts(cfg), settings, workers=args.parallel))

    if v["scaling"]:
        land = find_stationary_radii(base.sigma_tilde, base, spec)
        if land.n_roots == 2:
            study = run_scaling_study(
                v["scaling_R0"], v["scaling_t_end"], v["scaling_c"], base, spec,
                solver_opts(cfg, dt_init=1e-3, dt_max=v["scaling_dt_max"], snapshot_times=()))
            report.checks.extend(study.checks())
            report.scenario["scaling_study"] = study.to_dict()
        else:
            report.checks.append(Check("v_scaling_ratio", "comparison-profile scaling",
                                       Status.SKIPPED, math.nan, "no stationary radii to start in"))

    if v["convergence"]:
        p = base.with_(c=v["convergence_c"])
        report.checks.append(check_spatial_convergence(
            v["convergence_R0"], v["convergence_t_end"], p, spec,
            n_base=int(v["convergence_n_base"]), dt=v["convergence_dt"]))
        for scheme in ("BackwardEuler", "CrankNicolson"):
            report.checks.append(check_temporal_convergence(
                v["convergence_R0"], v["convergence_t_end"], p, spec, scheme,
                dts=tuple(v["temporal_dts"]), n_grid=int(cfg["solver"]["n_grid"])))

    if v["gamma_scan"]:
        scan = scan_bifurcation("gamma", v["gamma_lo"], v["gamma_hi"], int(v["gamma_n"]), base,
                                spec, workers=args.parallel)
        report.extend(audit_gamma_monotonicity(scan))

    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    _dump_json(out / "summary.json", {"config": cfg, "ok": report.ok, "seed": args.seed,
                                      "n_checks": len(report.checks)})
    print(report.to_text(), end="")
    return 0 if report.ok else 1


COMMANDS = {
    "stationary": cmd_stationary,
    "bifurcation": cmd_bifurcation,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbs-tumor", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="scenario file (.toml, or .json)")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--parallel", type=int, default=1,
                        help="worker count for independent cases (default: 1, serial)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized scenarios (default: 0)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BracketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
