"""Full (c > 0) free boundary solver on the fixed domain ``y = r / R(t)``.

The nutrient equation

    c u_t = (1 / (R^2 y^2)) (y^2 u_y)_y + c (R'/R) y u_y - lam u,
    u_y(0) = 0,  u(1) = G(R),

is discretized with second-order central differences on a uniform grid and
stepped implicitly (backward Euler or Crank-Nicolson). The radius follows
``R_new = R exp(dt K)`` with ``K = R'/R`` taken from Simpson quadrature of the
profile; profile and radius are coupled by Picard iteration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded

from .model import (
    InitialData,
    ModelParams,
    SmoothingSpec,
    eval_comparison_profile_v,
    eval_G,
    validate_initial_data,
)
from .quasi import IntegrationError, Termination, Trajectory


class Scheme(str, enum.Enum):
    BACKWARD_EULER = "BackwardEuler"
    CRANK_NICOLSON = "CrankNicolson"

    @property
    def theta(self) -> float:
        return 1.0 if self is Scheme.BACKWARD_EULER else 0.5


class StepRejected(RuntimeError):
    pass


@dataclass
class RadialProfile:
    """Nutrient samples ``u`` on the uniform grid ``y_i = i / (n - 1)`` at radius ``R``."""

    u: np.ndarray
    R: float

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim != 1 or self.u.size < 3:
            raise ValueError("profile needs at least 3 samples")
        if not self.R > 0:
            raise ValueError("radius must be positive")

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    @property
    def r(self) -> np.ndarray:
        return self.R * self.y

    def bound_violation(self, sigma_bar: float) -> float:
        """How far the samples leave ``[0, sigma_bar]`` (0 if they don't)."""
        return float(max(0.0, -self.u.min(), self.u.max() - sigma_bar))

    def center_slope(self) -> float:
        h = 1.0 / (self.n - 1)
        return float((-3.0 * self.u[0] + 4.0 * self.u[1] - self.u[2]) / (2.0 * h))

    def interpolate(self, y) -> np.ndarray:
        return np.interp(y, self.y, self.u)

    def to_csv(self) -> str:
        lines = ["y,u"]
        lines += [f"{yi!r},{ui!r}" for yi, ui in zip(self.y.tolist(), self.u.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_initial(cls, data: InitialData) -> "RadialProfile":
        return cls(np.array(data.sigma0), data.R0)


@dataclass
class SolverOpts:
    n_grid: int = 201
    dt_init: float = 1e-3
    dt_max: float = 0.05
    picard_tol: float = 1e-10
    picard_max: int = 8
    scheme: Scheme = Scheme.BACKWARD_EULER
    extinction_floor: float = 1e-8
    stationary_rate: float = 1e-9
    bound_tol: float = 1e-8
    dt_min: float = 1e-12
    grow: float = 1.2
    snapshot_times: tuple[float, ...] = ()
    max_steps: int = 1_000_000

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        self.snapshot_times = tuple(sorted(float(t) for t in self.snapshot_times))
        if self.n_grid < 16 or self.n_grid % 2 == 0:
            raise ValueError("n_grid must be odd and at least 16")
        if not 0 < self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_init <= dt_max")
        if self.picard_max < 1:
            raise ValueError("picard_max must be >= 1")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["scheme"] = self.scheme.value
        d["snapshot_times"] = list(self.snapshot_times)
        return d


@lru_cache(maxsize=32)
def _simpson_y2_weights(n: int) -> np.ndarray:
    if n % 2 == 0:
        raise ValueError("Simpson quadrature needs an odd number of grid points")
    h = 1.0 / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    y = np.linspace(0.0, 1.0, n)
    out = w * h / 3.0 * y * y
    out.setflags(write=False)
    return out


def _log_rate(u: np.ndarray, params: ModelParams) -> float:
    """``R'/R = mu * int_0^1 (u - sigma_tilde) y^2 dy``."""
    w = _simpson_y2_weights(u.size)
    return params.mu * (float(w @ u) - params.sigma_tilde * float(w.sum()))


def radius_rate(profile: RadialProfile, params: ModelParams) -> float:
    """``dR/dt`` implied by the profile: ``mu R int_0^1 (u - sigma_tilde) y^2 dy``."""
    return profile.R * _log_rate(profile.u, params)


def _operator(n: int, R: float, adv: float, lam: float):
    """Tridiagonal spatial operator on nodes ``0 .. n-2``.

    Returns ``(sub, diag, sup)`` with ``sub[i]`` multiplying ``u[i-1]`` and
    ``sup[i]`` multiplying ``u[i+1]``; ``sup[n-2]`` couples to the Dirichlet
    node. ``adv`` is the coefficient ``c R'/R`` of ``y u_y``. Nodes where the
    central advection stencil would produce a negative off-diagonal fall back
    to upwinding, which keeps the discrete maximum principle.
    """
    h = 1.0 / (n - 1)
    D = 1.0 / (R * R * h * h)
    i = np.arange(1, n - 1, dtype=float)
    sub = np.empty(n - 1)
    diag = np.empty(n - 1)
    sup = np.empty(n - 1)
    a = adv * i / 2.0  # adv * y_i / (2h)
    sub[1:] = D * (1.0 - 1.0 / i) - a
    sup[1:] = D * (1.0 + 1.0 / i) + a
    diag[1:] = -2.0 * D - lam
    bad = (sub[1:] < 0.0) | (sup[1:] < 0.0)
    if np.any(bad):
        idx = np.flatnonzero(bad) + 1
        ii = i[idx - 1]
        b = adv * ii  # adv * y_i / h
        fwd = b > 0
        sub[idx] = D * (1.0 - 1.0 / ii) - np.where(fwd, 0.0, b)
        sup[idx] = D * (1.0 + 1.0 / ii) + np.where(fwd, b, 0.0)
        diag[idx] = -2.0 * D - lam - np.abs(b)
    # origin: (1/y^2)(y^2 u_y)_y -> 3 u_yy, symmetric stencil
    sub[0] = 0.0
    diag[0] = -6.0 * D - lam
    sup[0] = 6.0 * D
    return sub, diag, sup


def _apply(sub, diag, sup, u):
    out = diag * u[:-1]
    out[1:] += sub[1:] * u[:-2]
    out += sup * u[1:]
    return out


def step(profile: RadialProfile, dt: float, params: ModelParams, spec: SmoothingSpec,
         opts: SolverOpts | None = None):
    """Advance profile and radius by ``dt``.

    Returns ``(new_profile, info)`` where ``info`` has ``K`` (the new
    ``R'/R``), ``K_mean`` (the rate used for the radius update) and
    ``picard_iters``. Raises :class:`StepRejected` if the Picard coupling
    does not converge.
    """
    opts = opts or SolverOpts(n_grid=profile.n if profile.n % 2 else 201)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not params.c > 0:
        raise ValueError("the full solver needs c > 0")
    theta = opts.scheme.theta
    c = params.c
    n = profile.n
    u_old, R_old = profile.u, profile.R
    K_old = _log_rate(u_old, params)

    rhs_base = (c / dt) * u_old[:-1]
    if theta < 1.0:
        sub_o, diag_o, sup_o = _operator(n, R_old, c * K_old, params.lam)
        rhs_base = rhs_base + (1.0 - theta) * _apply(sub_o, diag_o, sup_o, u_old)

    R_new = R_old * math.exp(dt * K_old)
    K_new = K_old
    u_new = np.empty(n)
    ab = np.empty((3, n - 1))
    for it in range(1, opts.picard_max + 1):
        g_new = eval_G(R_new, params, spec)
        sub, diag, sup = _operator(n, R_new, c * K_new, params.lam)
        ab[0, 0] = 0.0
        ab[0, 1:] = -theta * sup[:-1]
        ab[1] = c / dt - theta * diag
        ab[2, :-1] = -theta * sub[1:]
        ab[2, -1] = 0.0
        rhs = rhs_base.copy()
        rhs[-1] += theta * sup[-1] * g_new
        try:
            u_new[:-1] = solve_banded((1, 1), ab, rhs, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise IntegrationError(
                f"tridiagonal solve failed at R={R_new!r}, dt={dt!r}, c={c!r}: {exc}") from exc
        u_new[-1] = g_new
        K_new = _log_rate(u_new, params)
        K_mean = K_new if theta == 1.0 else 0.5 * (K_old + K_new)
        R_next = R_old * math.exp(dt * K_mean)
        if abs(R_next - R_new) < opts.picard_tol * max(1.0, R_old):
            R_new = R_next
            u_new[-1] = eval_G(R_new, params, spec)
            info = {"K": K_new, "K_mean": K_mean, "picard_iters": it}
            return RadialProfile(u_new, R_new), info
        R_new = R_next
    raise StepRejected(f"Picard coupling did not converge in {opts.picard_max} iterations")


def sup_deviation_from_v(profile: RadialProfile, params: ModelParams,
                         spec: SmoothingSpec) -> float:
    """``max_i |u_i - v(R y_i)|`` against the quasi-steady comparison profile."""
    v = eval_comparison_profile_v(profile.r, profile.R, params, spec)
    return float(np.max(np.abs(profile.u - v)))


def growth_bounds(params: ModelParams) -> tuple[float, float]:
    """A-priori limits on ``R'/R`` implied by ``0 <= sigma <= sigma_bar``."""
    return (-params.mu * params.sigma_tilde / 3.0,
            params.mu * (params.sigma_bar - params.sigma_tilde) / 3.0)


@dataclass
class _Recorder:
    cols: dict = field(default_factory=lambda: {k: [] for k in (
        "dR_dt", "sup_dev_from_v", "dt_used", "picard_iters", "u_min", "u_max")})
    times: list = field(default_factory=list)
    radii: list = field(default_factory=list)

    def add(self, t, prof, rate, dev, dt, iters):
        self.times.append(t)
        self.radii.append(prof.R)
        c = self.cols
        c["dR_dt"].append(rate)
        c["sup_dev_from_v"].append(dev)
        c["dt_used"].append(dt)
        c["picard_iters"].append(iters)
        c["u_min"].append(float(prof.u.min()))
        c["u_max"].append(float(prof.u.max()))


def simulate_full(data: InitialData, t_end: float, params: ModelParams, spec: SmoothingSpec,
                  opts: SolverOpts | None = None) -> Trajectory:
    """Integrate the coupled nutrient/radius problem from ``data`` up to ``t_end``.

    The time step starts at ``dt_init``, halves whenever a step is rejected
    (Picard failure or a discrete maximum-principle breach) and otherwise
    grows by ``grow`` up to ``dt_max``. Steps are shortened to land exactly
    on snapshot times and on ``t_end``. Every accepted step is checked
    against the growth-rate and radius-envelope bounds; a breach beyond
    ``1e-6`` relative aborts with :class:`IntegrationError`.
    """
    opts = opts or SolverOpts()
    if not params.c > 0:
        raise ValueError("the full solver needs c > 0; use integrate_quasi for c = 0")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    check = validate_initial_data(data, params, spec)
    if not check.ok:
        raise ValueError("invalid initial data: " + "; ".join(map(str, check.violations)))
    if data.n != opts.n_grid:
        y = np.linspace(0.0, 1.0, opts.n_grid)
        u0 = np.interp(y, data.y, data.sigma0)
        u0[-1] = data.sigma0[-1]
        prof = RadialProfile(u0, data.R0)
    else:
        prof = RadialProfile.from_initial(data)

    lo_rate, hi_rate = growth_bounds(params)
    rel = 1e-6
    R0 = data.R0
    meta = {"integrator": "full", "opts": opts.to_dict(), "params": params.to_dict(),
            "smoothing": spec.to_dict(), "R0": R0}
    rec = _Recorder()
    snapshots = []
    pending = [ts for ts in opts.snapshot_times if 0.0 <= ts <= t_end]
    t = 0.0
    rate0 = radius_rate(prof, params)
    rec.add(t, prof, rate0, sup_deviation_from_v(prof, params, spec), 0.0, 0)
    while pending and pending[0] <= 0.0:
        snapshots.append((0.0, RadialProfile(prof.u.copy(), prof.R)))
        pending.pop(0)

    def finish(reason):
        meta["termination"] = reason.value
        return Trajectory(rec.times, rec.radii, rec.cols, snapshots, meta)

    def fail(message):
        meta["termination"] = Termination.FAILED.value
        meta["failure"] = message
        return IntegrationError(message, Trajectory(rec.times, rec.radii, rec.cols, snapshots, meta))

    dt = opts.dt_init
    for _ in range(opts.max_steps):
        stop = min(pending[0], t_end) if pending else t_end
        clipped = t + dt >= stop - 1e-12 * max(1.0, stop)
        dt_try = stop - t if clipped else dt
        try:
            new, info = step(prof, dt_try, params, spec, opts)
            if new.bound_violation(params.sigma_bar) > opts.bound_tol:
                raise StepRejected("discrete maximum principle violated")
        except StepRejected:
            dt = 0.5 * dt_try
            if dt < opts.dt_min:
                raise fail(f"time step underflow at t={t!r}")
            continue
        K = info["K_mean"]
        if K < lo_rate - rel * max(1.0, abs(lo_rate)) or K > hi_rate + rel * max(1.0, abs(hi_rate)):
            raise fail(f"growth-rate bound violated at t={t + dt_try!r}: R'/R={K!r}")
        t_new = stop if clipped else t + dt_try
        env_lo = R0 * math.exp(lo_rate * t_new)
        env_hi = R0 * math.exp(hi_rate * t_new)
        if new.R < env_lo * (1 - rel) or new.R > env_hi * (1 + rel):
            raise fail(f"radius envelope violated at t={t_new!r}: R={new.R!r}")
        t, prof = t_new, new
        rec.add(t, prof, prof.R * info["K"], sup_deviation_from_v(prof, params, spec),
                dt_try, info["picard_iters"])
        while pending and pending[0] <= t + 1e-12 * max(1.0, t):
            snapshots.append((pending.pop(0), RadialProfile(prof.u.copy(), prof.R)))
        if prof.R < opts.extinction_floor:
            return finish(Termination.EXTINCTION)
        if abs(info["K"]) < opts.stationary_rate:
            return finish(Termination.STATIONARY)
        if t >= t_end - 1e-12 * max(1.0, t_end):
            return finish(Termination.T_END)
        if not clipped:
            dt = min(opts.dt_max, dt * opts.grow)
    raise fail("maximum number of steps exceeded")
