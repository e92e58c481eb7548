"""Model parameters and closed-form functions of the radial tumor model.

Everything here is a pure function of its inputs. Array arguments are
accepted wherever a radius is expected and the result has the same shape.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

# Crossovers for the small-r series and the large-r exponential-scaled branches.
SERIES_CUTOFF = 1e-2
LARGE_R_CUTOFF = 30.0


class SmoothingKind(str, enum.Enum):
    CUBIC = "cubic"
    QUINTIC = "quintic"
    LINEAR = "linear"


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless model constants.

    ``c`` is the diffusion/doubling time-scale ratio (``c == 0`` selects the
    quasi-stationary reduction), ``lam`` the nutrient consumption rate,
    ``mu`` the proliferation rate, ``sigma_tilde`` the apoptosis threshold,
    ``sigma_bar`` the external nutrient level and ``gamma`` the adhesiveness.
    """

    c: float = 0.0
    lam: float = 1.0
    mu: float = 1.0
    sigma_tilde: float = 0.3
    sigma_bar: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        for name in ("lam", "mu", "sigma_tilde", "sigma_bar", "gamma"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ValueError(f"c must be >= 0, got {self.c!r}")

    @property
    def is_scaled(self) -> bool:
        return self.lam == 1.0 and self.sigma_bar == 1.0

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "lambda": self.lam,
            "mu": self.mu,
            "sigma_tilde": self.sigma_tilde,
            "sigma_bar": self.sigma_bar,
            "gamma": self.gamma,
        }


@dataclass(frozen=True)
class SmoothingSpec:
    """Cut-off ``H`` rising from 0 at ``gamma`` to 1 at ``2 * gamma``."""

    gamma: float
    kind: SmoothingKind = SmoothingKind.CUBIC

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        object.__setattr__(self, "kind", SmoothingKind(self.kind))

    @property
    def transition_lo(self) -> float:
        return self.gamma

    @property
    def transition_hi(self) -> float:
        return 2.0 * self.gamma

    def with_gamma(self, gamma: float) -> "SmoothingSpec":
        return SmoothingSpec(gamma, self.kind)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "transition_lo": self.transition_lo,
                "transition_hi": self.transition_hi}


def _check_spec(params: ModelParams, spec: SmoothingSpec) -> None:
    if not math.isclose(params.gamma, spec.gamma, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(
            f"smoothing transition (gamma={spec.gamma!r}) does not match params.gamma={params.gamma!r}"
        )


def _ramp(r, spec: SmoothingSpec):
    return np.clip((np.asarray(r, dtype=float) - spec.gamma) / spec.gamma, 0.0, 1.0)


def _scalar_or_array(out, r):
    return float(out) if np.ndim(r) == 0 else out


def eval_H(r, spec: SmoothingSpec):
    x = _ramp(r, spec)
    if spec.kind is SmoothingKind.CUBIC:
        h = x * x * (3.0 - 2.0 * x)
    elif spec.kind is SmoothingKind.QUINTIC:
        h = x**3 * (x * (6.0 * x - 15.0) + 10.0)
    else:
        h = x
    return _scalar_or_array(h, r)


def eval_H_prime(r, spec: SmoothingSpec):
    """Derivative of :func:`eval_H`.

    The linear ramp returns its right-sided slope at ``gamma`` and zero at
    ``2 * gamma``.
    """
    r_arr = np.asarray(r, dtype=float)
    x = _ramp(r_arr, spec)
    if spec.kind is SmoothingKind.CUBIC:
        d = 6.0 * x * (1.0 - x)
    elif spec.kind is SmoothingKind.QUINTIC:
        d = 30.0 * x * x * (1.0 - x) ** 2
    else:
        d = np.where((r_arr >= spec.transition_lo) & (r_arr < spec.transition_hi), 1.0, 0.0)
    return _scalar_or_array(d / spec.gamma, r)


def eval_G(R, params: ModelParams, spec: SmoothingSpec):
    """Boundary concentration ``sigma_bar * (1 - gamma/R) * H(R)``."""
    _check_spec(params, spec)
    R_arr = np.asarray(R, dtype=float)
    if np.any(R_arr <= 0):
        raise ValueError("radius must be positive")
    g = np.where(R_arr <= params.gamma, 0.0,
                 params.sigma_bar * (1.0 - params.gamma / R_arr) * eval_H(R_arr, spec))
    return _scalar_or_array(g, R)


def coth_ratio(r):
    """``(r coth r - 1) / r**2`` for ``r > 0`` without cancellation or overflow."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("radius must be positive")
    out = np.empty_like(r_arr)
    small = r_arr < SERIES_CUTOFF
    large = r_arr > LARGE_R_CUTOFF
    mid = ~(small | large)
    rs = r_arr[small]
    r2 = rs * rs
    out[small] = 1.0 / 3.0 - r2 / 45.0 + 2.0 * r2 * r2 / 945.0
    rm = r_arr[mid]
    out[mid] = (rm / np.tanh(rm) - 1.0) / (rm * rm)
    rl = r_arr[large]
    e = np.exp(-2.0 * rl)
    out[large] = (rl * (1.0 + e) / (1.0 - e) - 1.0) / (rl * rl)
    return _scalar_or_array(out, r)


def eval_f(r, gamma: float):
    """Profile factor ``(1 - gamma/r) (r coth r - 1) / r**2``."""
    r_arr = np.asarray(r, dtype=float)
    out = (1.0 - gamma / r_arr) * np.asarray(coth_ratio(r_arr))
    return _scalar_or_array(out, r)


def eval_F(r, params: ModelParams, spec: SmoothingSpec):
    """Bifurcation function ``3 f(r) H(r)``; its level sets give stationary radii."""
    _check_spec(params, spec)
    r_arr = np.asarray(r, dtype=float)
    out = np.zeros(r_arr.shape)
    live = r_arr > params.gamma
    rl = r_arr[live]
    out[live] = 3.0 * np.asarray(eval_f(rl, params.gamma)) * np.asarray(eval_H(rl, spec))
    return _scalar_or_array(out, r)


def sinh_ratio(r, R: float):
    """``R sinh(r) / (r sinh(R))`` for ``0 <= r <= R``, with the ``r = 0`` limit."""
    r_arr = np.asarray(r, dtype=float)
    if R <= 0:
        raise ValueError("radius must be positive")
    if np.any(r_arr < 0) or np.any(r_arr > R * (1 + 1e-14)):
        raise ValueError("evaluation point outside [0, R]")
    safe = np.where(r_arr > 0, r_arr, 1.0)
    if R > LARGE_R_CUTOFF:
        # sinh(r)/sinh(R) = exp(r - R) (1 - exp(-2r)) / (1 - exp(-2R))
        num = np.where(r_arr > 0, -np.expm1(-2.0 * safe) / safe, 2.0)
        out = R * np.exp(r_arr - R) * num / (1.0 - math.exp(-2.0 * R))
    else:
        inner = np.where(r_arr > 0, np.sinh(safe) / safe, 1.0)
        out = inner * (R / math.sinh(R))
    return _scalar_or_array(out, r)


def eval_stationary_profile(r, R_s: float, params: ModelParams, spec: SmoothingSpec):
    """Quasi-steady nutrient profile inside a tumor of radius ``R_s``.

    This is the boundary value ``G(R_s)`` propagated inward by the
    ``sinh(r)/r`` solution of the steady equation, so it is nondecreasing in
    ``r`` and hits ``G(R_s)`` at the surface. Radii are stretched by
    ``sqrt(lam)`` when ``lam != 1``.
    """
    if R_s <= 0:
        raise ValueError("radius must be positive")
    boundary = eval_G(R_s, params, spec)
    k = math.sqrt(params.lam)
    out = boundary * np.asarray(sinh_ratio(k * np.asarray(r, dtype=float), k * R_s))
    return _scalar_or_array(out, r)


def eval_comparison_profile_v(r, R: float, params: ModelParams, spec: SmoothingSpec):
    """Comparison profile at the instantaneous radius ``R`` (same closed form)."""
    return eval_stationary_profile(r, R, params, spec)


@dataclass(frozen=True)
class ScaleFactors:
    """Maps scaled quantities back to user units.

    Scaled radius = ``length * user radius``; scaled concentration =
    user concentration / ``concentration``; time is unchanged.
    """

    length: float = 1.0
    time: float = 1.0
    concentration: float = 1.0

    def radius_to_user(self, r):
        return np.asarray(r) / self.length if np.ndim(r) else r / self.length

    def radius_to_scaled(self, r):
        return np.asarray(r) * self.length if np.ndim(r) else r * self.length

    def time_to_user(self, t):
        return t * self.time

    def concentration_to_user(self, u):
        return u * self.concentration

    def rate_to_user(self, dRdt):
        return dRdt / self.length * self.time


def nondimensionalize(params: ModelParams) -> tuple[ModelParams, ScaleFactors]:
    """Rescale to ``lam = sigma_bar = 1``.

    Uses ``r' = sqrt(lam) r``, ``t' = t`` and ``sigma' = sigma / sigma_bar``;
    the remaining constants transform as ``gamma' = sqrt(lam) gamma``,
    ``sigma_tilde' = sigma_tilde / sigma_bar``, ``mu' = mu sigma_bar`` and
    ``c' = c / lam``.
    """
    k = math.sqrt(params.lam)
    s = params.sigma_bar
    scaled = ModelParams(
        c=params.c / params.lam,
        lam=1.0,
        mu=params.mu * s,
        sigma_tilde=params.sigma_tilde / s,
        sigma_bar=1.0,
        gamma=params.gamma * k,
    )
    return scaled, ScaleFactors(length=k, time=1.0, concentration=s)


def require_scaled(params: ModelParams) -> None:
    if not params.is_scaled:
        raise ValueError("this operation expects scaled params (lam = sigma_bar = 1); "
                         "call nondimensionalize() first")


@dataclass
class Violation:
    kind: str
    location: float
    magnitude: float

    def __str__(self):
        return f"{self.kind} at {self.location:.6g} (magnitude {self.magnitude:.3e})"


@dataclass
class ValidationResult:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class InitialData:
    """Initial radius and nutrient profile sampled on a uniform ``y = r/R0`` grid.

    The plain constructor stores the samples as given so that
    :func:`validate_initial_data` can report incompatible data. Use
    :meth:`compatible` or the family constructors to get data whose surface
    value is set to ``G(R0)`` exactly.
    """

    R0: float
    sigma0: np.ndarray

    def __post_init__(self):
        arr = np.array(self.sigma0, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "sigma0", arr)
        if arr.ndim != 1 or arr.size < 3:
            raise ValueError("sigma0 must be a 1-D array with at least 3 samples")

    @property
    def n(self) -> int:
        return self.sigma0.size

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    @property
    def r(self) -> np.ndarray:
        return self.R0 * self.y

    @classmethod
    def compatible(cls, R0: float, sigma0, params: ModelParams, spec: SmoothingSpec) -> "InitialData":
        arr = np.array(sigma0, dtype=float)
        arr[-1] = eval_G(R0, params, spec)
        return cls(R0, arr)

    @classmethod
    def from_function(cls, R0, func, n, params, spec) -> "InitialData":
        r = np.linspace(0.0, R0, n)
        return cls.compatible(R0, func(r), params, spec)


def initial_comparison(R0, params, spec, n=201) -> InitialData:
    """Profile already at quasi-steady state for radius ``R0``."""
    return InitialData.from_function(
        R0, lambda r: eval_comparison_profile_v(r, R0, params, spec), n, params, spec)


def initial_quadratic(R0, params, spec, n=201) -> InitialData:
    """``G(R0) (r/R0)**2``: nutrient-starved core."""
    g = eval_G(R0, params, spec)
    return InitialData.from_function(R0, lambda r: g * (r / R0) ** 2, n, params, spec)


def initial_saturated_core(R0, params, spec, n=201) -> InitialData:
    """Core at ``sigma_bar`` relaxing to ``G(R0)`` at the surface."""
    g = eval_G(R0, params, spec)
    s = params.sigma_bar
    return InitialData.from_function(
        R0, lambda r: g + (s - g) * (1.0 - (r / R0) ** 2) ** 2, n, params, spec)


INITIAL_FAMILIES = {
    "comparison": initial_comparison,
    "quadratic": initial_quadratic,
    "saturated_core": initial_saturated_core,
}


def validate_initial_data(data: InitialData, params: ModelParams, spec: SmoothingSpec,
                          bound_tol: float = 1e-12) -> ValidationResult:
    """Check bounds, zero slope at the center and the surface compatibility."""
    result = ValidationResult()
    if not (math.isfinite(data.R0) and data.R0 > 0):
        result.violations.append(Violation("nonpositive radius", 0.0, float(data.R0)))
        return result
    u = data.sigma0
    r = data.r
    h = 1.0 / (data.n - 1)

    below = np.flatnonzero(u < -bound_tol)
    if below.size:
        i = below[np.argmin(u[below])]
        result.violations.append(Violation("below zero", float(r[i]), float(-u[i])))
    above = np.flatnonzero(u > params.sigma_bar + bound_tol)
    if above.size:
        i = above[np.argmax(u[above])]
        result.violations.append(Violation("above sigma_bar", float(r[i]),
                                           float(u[i] - params.sigma_bar)))

    # second-order one-sided slope in y; the allowance scales with the spacing
    slope = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    if abs(slope) > params.sigma_bar * h:
        result.violations.append(Violation("nonzero slope at center", 0.0, float(abs(slope))))

    g = eval_G(data.R0, params, spec)
    mismatch = abs(u[-1] - g)
    if mismatch > 1e-12 * max(1.0, params.sigma_bar):
        result.violations.append(Violation("surface value differs from G(R0)",
                                           float(data.R0), float(mismatch)))
    return result
