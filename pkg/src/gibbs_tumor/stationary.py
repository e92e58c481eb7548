"""Stationary radii, the bifurcation threshold and parameter scans."""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ModelParams,
    SmoothingSpec,
    eval_F,
    eval_G,
    eval_stationary_profile,
    require_scaled,
)
from .solver import RadialProfile

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
XTOL = 1e-10
DEGENERATE_TOL = 1e-9


class BracketError(RuntimeError):
    """A search bracket does not contain the expected extremum or sign change."""


class Stability(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class StationaryRoot:
    radius: float
    slope: float
    stability: Stability

    @property
    def slope_sign(self) -> int:
        return int(np.sign(self.slope))

    def to_dict(self) -> dict:
        return {"radius": self.radius, "F_slope": self.slope,
                "F_slope_sign": self.slope_sign, "stability": self.stability.value}


@dataclass(frozen=True)
class StationaryLandscape:
    r_sharp: float
    theta_star: float
    sigma_tilde: float
    roots: tuple[StationaryRoot, ...]
    params: ModelParams
    spec: SmoothingSpec

    @property
    def n_roots(self) -> int:
        return len(self.roots)

    @property
    def R_s1(self) -> float | None:
        return self.roots[0].radius if len(self.roots) == 2 else None

    @property
    def R_s2(self) -> float | None:
        return self.roots[1].radius if len(self.roots) == 2 else None

    def to_dict(self) -> dict:
        return {
            "r_sharp": self.r_sharp,
            "theta_star": self.theta_star,
            "sigma_tilde": self.sigma_tilde,
            "n_roots": self.n_roots,
            "roots": [root.to_dict() for root in self.roots],
            "params": self.params.to_dict(),
            "smoothing": self.spec.to_dict(),
        }


def golden_section_max(func, a: float, b: float, xtol: float = XTOL) -> float:
    """Maximizer of a unimodal ``func`` on ``[a, b]``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = func(d)
    return 0.5 * (a + b)


def bisect(func, a: float, b: float, xtol: float = XTOL) -> float:
    fa, fb = func(a), func(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if np.sign(fa) == np.sign(fb):
        raise BracketError(f"no sign change on [{a!r}, {b!r}] (f={fa!r}, {fb!r})")
    while b - a > xtol:
        m = 0.5 * (a + b)
        fm = func(m)
        if fm == 0.0:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def F_slope(r: float, params: ModelParams, spec: SmoothingSpec) -> float:
    """Central-difference derivative of F with step ``1e-6 r``."""
    h = 1e-6 * r
    return (eval_F(r + h, params, spec) - eval_F(r - h, params, spec)) / (2.0 * h)


def find_r_sharp(params: ModelParams, spec: SmoothingSpec) -> float:
    """Location of the maximum of F, searched on ``[2 gamma, 2 gamma + 2]``."""
    require_scaled(params)
    a, b = 2.0 * params.gamma, 2.0 * params.gamma + 2.0
    F = lambda r: eval_F(r, params, spec)  # noqa: E731
    r = golden_section_max(F, a, b)
    Fr = F(r)
    edge = 10.0 * XTOL
    if r - a < edge or b - r < edge or not (Fr > F(a) and Fr > F(b)):
        raise BracketError(
            f"maximum of F is not interior to [{a!r}, {b!r}] for {spec.kind.value} smoothing")
    return r


def compute_theta_star(params: ModelParams, spec: SmoothingSpec) -> float:
    return eval_F(find_r_sharp(params, spec), params, spec)


def find_stationary_radii(sigma_tilde: float, params: ModelParams,
                          spec: SmoothingSpec) -> StationaryLandscape:
    """Solve ``F(r) = sigma_tilde`` for the stationary radii.

    Zero, one (degenerate, at the maximum of F) or two roots are returned in
    increasing order, each tagged by the sign of F' there: the radius
    dynamics ``R' ~ (F(R) - sigma_tilde) R`` are stable exactly where F
    decreases.
    """
    if not sigma_tilde > 0:
        raise ValueError("sigma_tilde must be positive")
    params = params.with_(sigma_tilde=sigma_tilde)
    r_sharp = find_r_sharp(params, spec)
    theta = eval_F(r_sharp, params, spec)

    def make(sigma_roots):
        return StationaryLandscape(r_sharp, theta, sigma_tilde, tuple(sigma_roots), params, spec)

    if abs(sigma_tilde - theta) <= DEGENERATE_TOL:
        return make([StationaryRoot(r_sharp, 0.0, Stability.DEGENERATE)])
    if sigma_tilde > theta:
        return make([])

    g = lambda r: eval_F(r, params, spec) - sigma_tilde  # noqa: E731
    lo = params.gamma + 1e-8 * max(1.0, params.gamma)
    r1 = bisect(g, lo, r_sharp)
    r_hi = 2.0 * r_sharp
    while g(r_hi) >= 0.0:
        r_hi *= 2.0
        if r_hi > 1e12:
            raise BracketError("F did not drop below sigma_tilde")
    r2 = bisect(g, r_sharp, r_hi)
    roots = []
    for r in (r1, r2):
        s = F_slope(r, params, spec)
        roots.append(StationaryRoot(r, s, Stability.STABLE if s < 0 else Stability.UNSTABLE))
    return make(roots)


def stationary_solution(R_s: float, params: ModelParams, spec: SmoothingSpec,
                        n_grid: int = 201) -> RadialProfile:
    if n_grid < 16:
        raise ValueError("n_grid must be at least 16")
    y = np.linspace(0.0, 1.0, n_grid)
    u = np.asarray(eval_stationary_profile(R_s * y, R_s, params, spec))
    u[-1] = eval_G(R_s, params, spec)
    return RadialProfile(u, R_s)


class ScanAxis(str, enum.Enum):
    GAMMA = "gamma"
    SIGMA_TILDE = "sigma_tilde"


@dataclass
class ScanSample:
    value: float
    landscape: StationaryLandscape | None
    error: str | None = None


@dataclass
class BifurcationScan:
    axis: ScanAxis
    samples: list[ScanSample] = field(default_factory=list)

    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.samples])

    def column(self, name: str) -> np.ndarray:
        out = []
        for s in self.samples:
            land = s.landscape
            v = None if land is None else getattr(land, name)
            out.append(np.nan if v is None else v)
        return np.array(out, dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["param_value", "r_sharp", "theta_star", "n_roots", "R_s1", "R_s2"])
        for s in self.samples:
            land = s.landscape
            if land is None:
                w.writerow([repr(s.value), "", "", "", "", ""])
                continue
            if land.n_roots == 2:
                r1, r2 = repr(land.R_s1), repr(land.R_s2)
            elif land.n_roots == 1:
                r1, r2 = repr(land.roots[0].radius), ""
            else:
                r1 = r2 = ""
            w.writerow([repr(s.value), repr(land.r_sharp), repr(land.theta_star),
                        land.n_roots, r1, r2])
        return buf.getvalue()


def _scan_one(axis, value, fixed, spec):
    try:
        if axis is ScanAxis.GAMMA:
            p = fixed.with_(gamma=value)
            land = find_stationary_radii(p.sigma_tilde, p, spec.with_gamma(value))
        else:
            land = find_stationary_radii(value, fixed, spec)
        return ScanSample(value, land)
    except (ValueError, BracketError) as exc:
        return ScanSample(value, None, str(exc))


def scan_bifurcation(axis, lo: float, hi: float, n_samples: int, fixed: ModelParams,
                     spec: SmoothingSpec, workers: int = 1) -> BifurcationScan:
    """Stationary landscapes along ``gamma`` or ``sigma_tilde``.

    A single-sample scan evaluates ``lo`` only. Per-sample failures are kept
    in the sample's ``error`` field and the scan carries on.
    """
    axis = ScanAxis(axis)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if n_samples > 1 and not lo < hi:
        raise ValueError("scan range needs lo < hi")
    if not lo > 0:
        raise ValueError(f"{axis.value} must stay positive over the scan range")
    require_scaled(fixed)
    values = np.linspace(lo, hi, n_samples) if n_samples > 1 else np.array([lo])
    args = [(axis, float(v), fixed, spec) for v in values]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            samples = list(pool.map(lambda a: _scan_one(*a), args))
    else:
        samples = [_scan_one(*a) for a in args]
    return BifurcationScan(axis, samples)
