"""Radial free boundary tumor model with a Gibbs-Thomson surface condition."""

from .model import (
    InitialData,
    ModelParams,
    ScaleFactors,
    SmoothingKind,
    SmoothingSpec,
    eval_comparison_profile_v,
    eval_f,
    eval_F,
    eval_G,
    eval_H,
    eval_H_prime,
    eval_stationary_profile,
    nondimensionalize,
    validate_initial_data,
)
from .quasi import (
    LimitClassification,
    Outcome,
    QuasiOpts,
    Trajectory,
    classify_limit,
    integrate_quasi,
    measure_linear_rate,
    rhs_quasi,
)
from .solver import RadialProfile, Scheme, SolverOpts, radius_rate, simulate_full, step, sup_deviation_from_v
from .stationary import (
    BifurcationScan,
    StationaryLandscape,
    Stability,
    compute_theta_star,
    find_r_sharp,
    find_stationary_radii,
    scan_bifurcation,
    stationary_solution,
)

__version__ = "0.1.0"
