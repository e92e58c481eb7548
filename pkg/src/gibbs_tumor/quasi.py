"""Quasi-stationary (c = 0) radius dynamics and limit classification."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, SmoothingSpec, eval_F, require_scaled

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B_LOW = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b - bl for b, bl in zip(_B, _B_LOW))


class Termination(str, enum.Enum):
    T_END = "t_end"
    EXTINCTION = "extinction"
    STATIONARY = "stationary"
    FAILED = "failed"


class IntegrationError(RuntimeError):
    """Integration gave up; ``partial`` holds the trajectory computed so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class Trajectory:
    """Time series of radii with optional per-step diagnostics and profile snapshots.

    ``columns`` holds extra per-sample series (same length as ``times``),
    for example ``dR_dt`` or the solver's ``u_min``/``u_max``.
    """

    times: np.ndarray
    radii: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.radii = np.asarray(self.radii, dtype=float)
        if self.times.shape != self.radii.shape:
            raise ValueError("times and radii must have equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.radii <= 0):
            raise ValueError("radii must be positive")
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}

    @property
    def termination(self) -> Termination:
        return Termination(self.meta.get("termination", Termination.T_END))

    @property
    def final_R(self) -> float:
        return float(self.radii[-1])

    @property
    def final_rate(self) -> float:
        if "dR_dt" in self.columns:
            return float(self.columns["dR_dt"][-1])
        if self.times.size < 2:
            return 0.0
        return float((self.radii[-1] - self.radii[-2]) / (self.times[-1] - self.times[-2]))

    def to_csv(self, extra: tuple[str, ...] = ()) -> str:
        names = ["dR_dt", *[c for c in extra if c != "dR_dt"]]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "R", *names])
        cols = [self.columns.get(n, np.full(self.times.shape, np.nan)) for n in names]
        for i in range(self.times.size):
            w.writerow([repr(float(self.times[i])), repr(float(self.radii[i])),
                        *(_fmt(c[i]) for c in cols)])
        return buf.getvalue()


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


@dataclass
class QuasiOpts:
    rtol: float = 1e-9
    atol: float = 1e-15
    extinction_floor: float = 1e-8
    stationary_rate: float = 1e-12
    h_init: float | None = None
    h_max: float = math.inf
    max_steps: int = 200_000

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def rhs_quasi(R: float, params: ModelParams, spec: SmoothingSpec) -> float:
    """``(mu/3) (F(R) - sigma_tilde) R``."""
    if not R > 0:
        raise ValueError("radius must be positive")
    return params.mu / 3.0 * (eval_F(R, params, spec) - params.sigma_tilde) * R


def _dp_step(f, R, h, k1):
    k = [k1]
    for s in range(1, 7):
        Ri = R + h * sum(a * kj for a, kj in zip(_A[s], k))
        if Ri <= 0:
            return None, None, None
        k.append(f(Ri))
    R_new = R + h * sum(b * kj for b, kj in zip(_B, k))
    err = h * sum(e * kj for e, kj in zip(_E, k))
    return R_new, err, k[6]


def integrate_quasi(R0: float, t_end: float, params: ModelParams, spec: SmoothingSpec,
                    opts: QuasiOpts | None = None) -> Trajectory:
    """Adaptive Dormand-Prince integration of the reduced radius equation.

    Stops at ``t_end``, when ``R`` falls below ``extinction_floor``, or when
    ``|R'|/R`` falls below ``stationary_rate``. A step that would make any
    stage radius nonpositive is rejected and halved.
    """
    require_scaled(params)
    opts = opts or QuasiOpts()
    if not R0 > 0 or not t_end > 0:
        raise ValueError("R0 and t_end must be positive")
    f = lambda R: rhs_quasi(R, params, spec)  # noqa: E731

    t, R = 0.0, float(R0)
    k1 = f(R)
    times, radii, rates = [t], [R], [k1]
    meta = {"integrator": "dopri5", "opts": opts.to_dict(), "params": params.to_dict(),
            "smoothing": spec.to_dict()}

    def done(reason):
        meta["termination"] = reason.value
        return Trajectory(times, radii, {"dR_dt": rates}, meta=meta)

    if R < opts.extinction_floor:
        return done(Termination.EXTINCTION)
    if abs(k1) / R < opts.stationary_rate:
        return done(Termination.STATIONARY)

    if opts.h_init is not None:
        h = opts.h_init
    else:
        scale = abs(k1) / R + 1e-3 * params.mu
        h = min(t_end, 0.01 / scale)
    for _ in range(opts.max_steps):
        h = min(h, opts.h_max, t_end - t)
        if h < 1e-14 * max(1.0, t):
            meta["termination"] = Termination.FAILED.value
            raise IntegrationError("step size underflow", Trajectory(times, radii, {"dR_dt": rates}, meta=meta))
        R_new, err, k7 = _dp_step(f, R, h, k1)
        if R_new is None or R_new <= 0:
            h *= 0.5
            continue
        tol = opts.atol + opts.rtol * max(abs(R), abs(R_new))
        ratio = abs(err) / tol
        if ratio > 1.0:
            h *= max(0.2, 0.9 * ratio ** -0.2)
            continue
        t += h
        R, k1 = R_new, k7
        times.append(t)
        radii.append(R)
        rates.append(k1)
        if R < opts.extinction_floor:
            return done(Termination.EXTINCTION)
        if abs(k1) / R < opts.stationary_rate:
            return done(Termination.STATIONARY)
        if t >= t_end:
            return done(Termination.T_END)
        h *= min(5.0, 0.9 * ratio ** -0.2) if ratio > 0 else 5.0
    meta["termination"] = Termination.FAILED.value
    raise IntegrationError("maximum number of steps exceeded",
                           Trajectory(times, radii, {"dR_dt": rates}, meta=meta))


class Outcome(str, enum.Enum):
    EXTINCTION = "ExtinctionToZero"
    CONVERGES = "ConvergesTo"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class LimitClassification:
    outcome: Outcome
    final_R: float
    final_rate: float
    target: float | None = None
    fitted_rate: float | None = None

    def to_dict(self) -> dict:
        return {"outcome": self.outcome.value, "target": self.target, "final_R": self.final_R,
                "final_rate": self.final_rate, "fitted_rate": self.fitted_rate}


def classify_limit(traj: Trajectory, landscape, tol_conv: float = 1e-5,
                   tol_rate: float = 1e-6) -> LimitClassification:
    """Read off the long-time limit of a finished trajectory.

    ``ConvergesTo`` targets the stable (larger) stationary radius; anything
    neither extinct nor settled near it is ``Undecided``.
    """
    R, rate = traj.final_R, traj.final_rate
    if traj.termination is Termination.EXTINCTION:
        return LimitClassification(Outcome.EXTINCTION, R, rate)
    stable = [root.radius for root in landscape.roots if root.stability.value == "Stable"]
    if stable:
        target = stable[-1]
        if abs(R - target) < tol_conv and abs(rate) < tol_rate:
            fitted = None
            try:
                fitted = measure_linear_rate(traj, target)
            except ValueError:
                pass
            return LimitClassification(Outcome.CONVERGES, R, rate, target, fitted)
    return LimitClassification(Outcome.UNDECIDED, R, rate)


def measure_linear_rate(traj: Trajectory, R_target: float, lo: float = 1e-8,
                        hi: float = 1e-2, min_samples: int = 10) -> float:
    """Least-squares slope of ``log|R - R_target|`` against time.

    Only samples with ``lo < |R - R_target| < hi`` enter the fit. The slope
    is negative for a trajectory converging to ``R_target``.
    """
    dev = np.abs(traj.radii - R_target)
    mask = (dev > lo) & (dev < hi)
    if mask.sum() < min_samples:
        raise ValueError(f"only {int(mask.sum())} samples in the fitting window")
    slope, _ = np.polyfit(traj.times[mask], np.log(dev[mask]), 1)
    return float(slope)
