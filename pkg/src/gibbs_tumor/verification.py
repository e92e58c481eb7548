"""Executable checks of the model's a-priori bounds and long-time behavior."""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import (
    INITIAL_FAMILIES,
    ModelParams,
    SmoothingSpec,
    eval_comparison_profile_v,
    require_scaled,
)
from .quasi import (
    IntegrationError,
    Outcome,
    QuasiOpts,
    Trajectory,
    classify_limit,
    integrate_quasi,
)
from .solver import SolverOpts, growth_bounds, simulate_full, sup_deviation_from_v
from .stationary import BifurcationScan, ScanAxis, find_stationary_radii

# claim anchors
MAX_PRINCIPLE = "a-priori bound 0 <= sigma <= sigma_bar"
GROWTH_RATE = "a-priori bound -mu*sigma_tilde/3 <= R'/R <= mu*(sigma_bar-sigma_tilde)/3"
ENVELOPE = "a-priori exponential envelope on R(t)"
DICHOTOMY = "quasi-stationary phase line: extinction below R_s1, convergence to R_s2 above"
STARVATION = "sigma_tilde > sigma_bar: extinction for every c > 0"
SUBCRITICAL = "theta_* < sigma_tilde <= sigma_bar: extinction for small c"
SMALL_C = "sigma_tilde < theta_*: small-c limit is 0 below R_s1 - eps, R_s2 above R_s1 + eps"
V_SCALING = "|sigma - v| <= C (L c + M exp(-t/c))"
ADHESION = "theta_* and R_s2 decrease, R_s1 increases with gamma"
DISCRETIZATION = "discretization convergence order"


class Status(str, enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    SKIPPED = "Skipped"


@dataclass
class Check:
    """One verified claim. ``margin`` is positive when the claim holds with room to spare."""

    name: str
    anchor: str
    status: Status
    margin: float
    details: str = ""
    violation: dict | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "anchor": self.anchor, "status": self.status.value,
                "measured_margin": _clean(self.margin), "details": self.details,
                "violation": _clean(self.violation)}


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)
    scenario: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.status is not Status.FAIL for c in self.checks)

    def by_name(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def extend(self, other: "VerificationReport") -> "VerificationReport":
        self.checks.extend(other.checks)
        return self

    def to_dict(self) -> dict:
        return {"checks": [c.to_dict() for c in self.checks], "scenario": _clean(self.scenario),
                "ok": self.ok,
                "n_fail": sum(c.status is Status.FAIL for c in self.checks),
                "n_pass": sum(c.status is Status.PASS for c in self.checks),
                "n_skipped": sum(c.status is Status.SKIPPED for c in self.checks)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def to_text(self) -> str:
        width = max([len(c.name) for c in self.checks] + [5])
        lines = [f"{'check':<{width}}  status   margin       details"]
        for c in self.checks:
            lines.append(f"{c.name:<{width}}  {c.status.value:<7}  {c.margin: .3e}  {c.details}")
        return "\n".join(lines) + "\n"


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars plain floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _status(ok: bool) -> Status:
    return Status.PASS if ok else Status.FAIL


def audit_bounds(traj: Trajectory, params: ModelParams, spec: SmoothingSpec | None = None,
                 rel_tol: float = 1e-6, bound_tol: float = 1e-8, n_profile: int = 201) -> VerificationReport:
    """Check a trajectory against the maximum principle, the growth-rate bound and the envelope.

    Full-solver trajectories carry per-step ``u_min``/``u_max``; for
    quasi-stationary ones the comparison profile at each recorded radius is
    checked instead (this needs ``spec``).
    """
    report = VerificationReport()
    t, R = traj.times, traj.radii
    sb = params.sigma_bar

    # maximum principle
    if "u_min" in traj.columns:
        lows, highs = traj.columns["u_min"], traj.columns["u_max"]
        source = "per-step profile extrema"
    elif spec is not None:
        r = np.linspace(0.0, 1.0, n_profile)
        prof = [np.asarray(eval_comparison_profile_v(r * Ri, Ri, params, spec)) for Ri in R]
        lows = np.array([p.min() for p in prof])
        highs = np.array([p.max() for p in prof])
        source = "comparison profiles at recorded radii"
    else:
        lows = highs = None
    if lows is None:
        report.checks.append(Check("max_principle", MAX_PRINCIPLE, Status.SKIPPED, math.nan,
                                   "no profile information"))
    else:
        margins = np.minimum(lows, sb - highs)
        for _, prof in traj.snapshots:
            margins = np.append(margins, min(prof.u.min(), sb - prof.u.max()))
        k = int(np.argmin(margins[: t.size]))
        worst = float(margins.min())
        ok = worst >= -bound_tol
        viol = None if ok else {"t": float(t[k]), "value": float(lows[k] if lows[k] < 0 else highs[k])}
        report.checks.append(Check("max_principle", MAX_PRINCIPLE, _status(ok), worst,
                                   f"{source}, {t.size} samples", viol))

    lo, hi = growth_bounds(params)
    tol_lo = rel_tol * max(1.0, abs(lo))
    tol_hi = rel_tol * max(1.0, abs(hi))
    if t.size >= 2:
        slopes = np.diff(np.log(R)) / np.diff(t)
        margins = np.minimum(slopes - (lo - tol_lo), (hi + tol_hi) - slopes)
        k = int(np.argmin(margins))
        ok = bool(margins[k] >= 0)
        viol = None if ok else {"t": float(t[k + 1]), "value": float(slopes[k])}
        report.checks.append(Check(
            "growth_rate", GROWTH_RATE, _status(ok), float(margins[k]),
            f"log-slopes of {slopes.size} intervals within [{lo:.6g}, {hi:.6g}]", viol))
    else:
        report.checks.append(Check("growth_rate", GROWTH_RATE, Status.SKIPPED, math.nan,
                                   "fewer than two samples"))

    R0 = R[0]
    env_lo = R0 * np.exp(lo * t)
    env_hi = R0 * np.exp(hi * t)
    margins = np.minimum(R / env_lo - (1.0 - rel_tol), (1.0 + rel_tol) - R / env_hi)
    k = int(np.argmin(margins))
    ok = bool(margins[k] >= 0)
    viol = None if ok else {"t": float(t[k]), "value": float(R[k])}
    report.checks.append(Check("radius_envelope", ENVELOPE, _status(ok), float(margins[k]),
                               f"{t.size} recorded radii", viol))
    return report


@dataclass
class ScalingStudy:
    c_values: list[float]
    sample_times: list[float]
    deviations: list[list[float] | None]
    max_dev: list[float | None]
    slope: float
    residual: float
    ratios: list[float]

    def to_dict(self) -> dict:
        return _clean(self.__dict__)

    def checks(self, ratio_band=(0.8, 1.2), max_residual=0.2) -> list[Check]:
        """Linearity in c: successive deviation ratios and the fit through the origin.

        The ratio band is applied to ``(d_i / d_{i+1}) / (c_i / c_{i+1})``,
        so for halving c it reads ``[1.6, 2.4]``.
        """
        out = []
        if any(d is None for d in self.max_dev) or len(self.c_values) < 2:
            skipped = [c for c, d in zip(self.c_values, self.max_dev) if d is None]
            out.append(Check("v_scaling_ratio", V_SCALING, Status.SKIPPED, math.nan,
                             f"failed simulations at c={skipped}"))
            return out
        c = np.array(self.c_values)
        norm = np.array(self.ratios) / (c[:-1] / c[1:])
        margin = float(np.min(np.minimum(norm - ratio_band[0], ratio_band[1] - norm)))
        out.append(Check("v_scaling_ratio", V_SCALING, _status(margin >= 0), margin,
                         "deviation ratios " + ", ".join(f"{r:.4f}" for r in self.ratios)))
        ok = self.slope > 0 and math.isfinite(self.slope) and self.residual < max_residual
        out.append(Check("v_scaling_fit", V_SCALING, _status(ok), max_residual - self.residual,
                         f"slope {self.slope:.6g}, relative residual {self.residual:.4f}"))
        dec = np.all(np.diff(np.array(self.max_dev, dtype=float)) < 0)
        out.append(Check("v_scaling_monotone", V_SCALING, _status(bool(dec)),
                         float(np.min(-np.diff(np.array(self.max_dev, dtype=float)))),
                         "max deviation decreases with c"))
        return out


def transient_window(c: float) -> float:
    return 10.0 * c * abs(math.log(c))


def run_scaling_study(R0: float, t_end: float, c_values, params: ModelParams, spec: SmoothingSpec,
                      opts: SolverOpts | None = None, n_samples: int = 16,
                      family: str = "comparison") -> ScalingStudy:
    """Post-transient deviation of the full solution from the comparison profile, per c.

    All runs are sampled at the same times, starting after the longest
    transient window ``10 c |log c|``. The maximum deviation over those times
    is fitted as ``slope * c``.
    """
    c_values = [float(c) for c in c_values]
    if any(c <= 0 for c in c_values) or np.any(np.diff(c_values) >= 0):
        raise ValueError("c_values must be positive and strictly decreasing")
    opts = opts or SolverOpts(dt_max=0.01)
    t_lo = max(transient_window(c) for c in c_values)
    if not t_lo < t_end:
        raise ValueError(f"t_end={t_end} does not reach past the transient window {t_lo:.4g}")
    times = np.linspace(t_lo, t_end, n_samples).tolist()
    run_opts = SolverOpts(**{**opts.to_dict(), "snapshot_times": tuple(times), "stationary_rate": 0.0})
    deviations, max_dev = [], []
    for c in c_values:
        p = params.with_(c=c)
        data = INITIAL_FAMILIES[family](R0, p, spec, run_opts.n_grid)
        try:
            traj = simulate_full(data, t_end, p, spec, run_opts)
        except IntegrationError:
            deviations.append(None)
            max_dev.append(None)
            continue
        d = [sup_deviation_from_v(prof, p, spec) for _, prof in traj.snapshots]
        deviations.append(d)
        max_dev.append(max(d))
    ok = [(c, d) for c, d in zip(c_values, max_dev) if d is not None]
    if ok:
        cs = np.array([c for c, _ in ok])
        ds = np.array([d for _, d in ok])
        slope = float(cs @ ds / (cs @ cs))
        residual = float(np.linalg.norm(ds - slope * cs) / np.linalg.norm(ds))
    else:
        slope = residual = math.nan
    ratios = [a / b for a, b in zip(max_dev[:-1], max_dev[1:]) if a is not None and b is not None]
    return ScalingStudy(c_values, times, deviations, max_dev, slope, residual, ratios)


@dataclass(frozen=True)
class OutcomeCase:
    R0: float
    sigma_tilde: float
    c: float
    family: str = "comparison"


@dataclass
class MatrixSettings:
    t_end: float = 2000.0
    eps_fraction: float = 0.05
    small_c: float = 1e-2
    tol_conv_quasi: float = 1e-5
    tol_conv_full: float = 1e-3
    tol_rate: float = 1e-6


def predict_outcome(case: OutcomeCase, landscape, sigma_bar: float, settings: MatrixSettings):
    """Predicted limit for a case, as ``(outcome or None, anchor, note)``."""
    s, c, R0 = case.sigma_tilde, case.c, case.R0
    if s > sigma_bar:
        return Outcome.EXTINCTION, STARVATION, ""
    if landscape.n_roots == 0:
        if c == 0.0 or c <= settings.small_c:
            return Outcome.EXTINCTION, SUBCRITICAL, ""
        return None, SUBCRITICAL, f"c={c} above the small-c setting {settings.small_c}"
    if landscape.n_roots == 1:
        return None, DICHOTOMY, "degenerate threshold"
    R1, R2 = landscape.R_s1, landscape.R_s2
    if c == 0.0:
        if R0 < R1:
            return Outcome.EXTINCTION, DICHOTOMY, ""
        if R0 > R1:
            return Outcome.CONVERGES, DICHOTOMY, ""
        return None, DICHOTOMY, "R0 on the separatrix R_s1"
    if c > settings.small_c:
        return None, SMALL_C, f"c={c} above the small-c setting {settings.small_c}"
    eps = settings.eps_fraction * (R2 - R1)
    if R0 <= R1 - eps:
        return Outcome.EXTINCTION, SMALL_C, f"eps={eps:.6g}"
    if R0 > R1 + eps:
        eps_eff = min(eps, 0.5 / R0)
        return Outcome.CONVERGES, SMALL_C, f"eps={eps_eff:.6g}"
    return None, SMALL_C, f"R0 within eps={eps:.6g} of R_s1"


def _run_case(case: OutcomeCase, params_base: ModelParams, spec: SmoothingSpec,
              opts: SolverOpts, quasi_opts: QuasiOpts, settings: MatrixSettings) -> Check:
    p = params_base.with_(sigma_tilde=case.sigma_tilde, c=case.c)
    name = f"outcome[R0={case.R0:.6g},sigma_tilde={case.sigma_tilde:.6g},c={case.c:.6g}]"
    land = find_stationary_radii(case.sigma_tilde, p.with_(c=0.0), spec)
    predicted, anchor, note = predict_outcome(case, land, p.sigma_bar, settings)
    try:
        if case.c == 0.0:
            traj = integrate_quasi(case.R0, settings.t_end, p, spec, quasi_opts)
            tol = settings.tol_conv_quasi
        else:
            data = INITIAL_FAMILIES[case.family](case.R0, p, spec, opts.n_grid)
            traj = simulate_full(data, settings.t_end, p, spec, opts)
            tol = settings.tol_conv_full
    except IntegrationError as exc:
        return Check(name, anchor, Status.SKIPPED, math.nan, f"simulation failed: {exc}")
    got = classify_limit(traj, land, tol_conv=tol, tol_rate=settings.tol_rate)
    observed = got.outcome.value + (f"({got.target:.8g})" if got.target is not None else "")
    details = f"observed {observed}, final R {got.final_R:.8g}"
    if note:
        details += f"; {note}"
    if predicted is None:
        return Check(name, anchor, Status.SKIPPED, math.nan, "no prediction; " + details)
    ok = got.outcome is predicted
    if predicted is Outcome.CONVERGES:
        margin = tol - abs(got.final_R - land.R_s2)
    else:
        margin = float(opts.extinction_floor - got.final_R) if case.c else float(
            quasi_opts.extinction_floor - got.final_R)
    viol = None if ok else {"t": float(traj.times[-1]), "value": got.final_R}
    return Check(name, anchor, _status(ok), margin, f"predicted {predicted.value}; " + details, viol)


def outcome_matrix(cases, params_base: ModelParams, spec: SmoothingSpec,
                   opts: SolverOpts | None = None, quasi_opts: QuasiOpts | None = None,
                   settings: MatrixSettings | None = None, workers: int = 1) -> VerificationReport:
    """Run each case to its limit and compare with the predicted outcome.

    ``c == 0`` cases use the reduced radius equation, ``c > 0`` cases the
    full solver. Cases outside every prediction are reported as Skipped with
    the observed outcome in the details; failed simulations are Skipped too.
    """
    require_scaled(params_base)
    opts = opts or SolverOpts(dt_init=1e-4, dt_max=0.5)
    quasi_opts = quasi_opts or QuasiOpts()
    settings = settings or MatrixSettings()
    cases = list(cases)
    args = [(case, params_base, spec, opts, quasi_opts, settings) for case in cases]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            checks = list(pool.map(_run_case, *zip(*args)))
    else:
        checks = [_run_case(*a) for a in args]
    return VerificationReport(checks)


def starvation_cases(R0: float, sigma_tilde: float, family: str = "saturated_core"):
    """Cases at every c in ``{1e-3, 1e-1, 1, 10}`` for a supply below threshold."""
    return [OutcomeCase(R0, sigma_tilde, c, family) for c in (1e-3, 1e-1, 1.0, 10.0)]


def audit_gamma_monotonicity(scan: BifurcationScan) -> VerificationReport:
    """Strict monotonicity of theta_*, R_s1 and R_s2 along a gamma scan."""
    report = VerificationReport()
    if scan.axis is not ScanAxis.GAMMA:
        raise ValueError("gamma monotonicity needs a scan over gamma")
    vals = scan.values()
    theta = scan.column("theta_star")
    two = np.array([s.landscape is not None and s.landscape.n_roots == 2 for s in scan.samples])
    r1 = scan.column("R_s1")
    r2 = scan.column("R_s2")

    def audit(name, seq, x, sign, note=""):
        good = np.isfinite(seq)
        seq, x = seq[good], x[good]
        if seq.size < 2:
            return Check(name, ADHESION, Status.PASS, math.inf, "fewer than two samples" + note)
        diffs = sign * np.diff(seq)
        k = int(np.argmin(diffs))
        ok = bool(diffs[k] > 0)
        word = "increasing" if sign > 0 else "decreasing"
        viol = None if ok else {"t": float(x[k + 1]), "value": float(seq[k + 1])}
        details = f"strictly {word} over {seq.size} samples" + note
        if not ok:
            details = f"first violation at gamma={x[k + 1]:.6g}" + note
        return Check(name, ADHESION, _status(ok), float(diffs[k]), details, viol)

    report.checks.append(audit("theta_star_decreasing", theta, vals, -1))
    note = ""
    if not two.all():
        note = f"; roots checked on {int(two.sum())} of {two.size} samples with two roots"
    report.checks.append(audit("R_s1_increasing", np.where(two, r1, np.nan), vals, +1, note))
    report.checks.append(audit("R_s2_decreasing", np.where(two, r2, np.nan), vals, -1, note))
    return report


def check_spatial_convergence(R0: float, t_end: float, params: ModelParams, spec: SmoothingSpec,
                              n_base: int = 101, dt: float = 0.01, family: str = "comparison",
                              band=(3.5, 4.5)) -> Check:
    """Error ratio of grids ``n_base`` and ``2 n_base - 1`` against ``8 (n_base - 1) + 1``."""
    levels = [n_base, 2 * n_base - 1, 8 * (n_base - 1) + 1]
    finals = []
    for n in levels:
        data = INITIAL_FAMILIES[family](R0, params, spec, n)
        opts = SolverOpts(n_grid=n, dt_init=dt, dt_max=dt, stationary_rate=0.0)
        finals.append(simulate_full(data, t_end, params, spec, opts).final_R)
    e1, e2 = finals[0] - finals[2], finals[1] - finals[2]
    ratio = e1 / e2 if e2 != 0 else math.inf
    margin = min(ratio - band[0], band[1] - ratio)
    return Check("spatial_convergence", DISCRETIZATION, _status(margin >= 0), margin,
                 f"grids {levels}: error ratio {ratio:.4f}, expected in [{band[0]}, {band[1]}]")


def check_temporal_convergence(R0: float, t_end: float, params: ModelParams, spec: SmoothingSpec,
                               scheme: str, dts=(0.04, 0.02, 0.01), n_grid: int = 201,
                               family: str = "comparison", band=None) -> Check:
    """Ratio of successive differences in ``R(t_end)`` as dt halves."""
    opts0 = SolverOpts(n_grid=n_grid, scheme=scheme)
    if band is None:
        band = (1.75, 2.25) if opts0.scheme.theta == 1.0 else (3.5, 4.5)
    finals = []
    for dt in dts:
        data = INITIAL_FAMILIES[family](R0, params, spec, n_grid)
        opts = SolverOpts(n_grid=n_grid, dt_init=dt, dt_max=dt, scheme=scheme, stationary_rate=0.0)
        finals.append(simulate_full(data, t_end, params, spec, opts).final_R)
    d = np.diff(finals)
    ratios = d[:-1] / d[1:]
    margin = float(np.min(np.minimum(ratios - band[0], band[1] - ratios)))
    return Check(f"temporal_convergence_{opts0.scheme.value}", DISCRETIZATION,
                 _status(margin >= 0), margin,
                 f"dt {list(dts)}: ratios {', '.join(f'{r:.4f}' for r in ratios)}, "
                 f"expected in [{band[0]}, {band[1]}]")
