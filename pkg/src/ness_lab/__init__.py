"""Stationary fluctuations of boundary-driven nonlinear diffusion.

The pipeline runs from a model (mobility ``K`` and entropy ``s``) through
the stationary profile, the linearized fluctuation generator and its noise,
to the stationary covariance ``W`` and the source field ``Phi`` that
decides whether ``W`` has a long-range part. Two independent samplers check
the result: the linear fluctuation process itself, and a lattice gas whose
hydrodynamics is the SSEP case.
"""

from .covariance import (
    CorrelationReport,
    analyze,
    compute_phi,
    decompose_local,
    long_range_verdict,
    proposition_residual,
    solve_stationary_covariance,
    time_correlation,
)
from .exceptions import (
    ConfigError,
    DomainViolation,
    ModelError,
    NessLabError,
    PhaseWindowError,
    PreconditionError,
    SolverError,
)
from .grid import build_grid
from .linearized import assemble_generator, assemble_noise, check_dissipativity, linearize
from .models import CATALOG, ModelSpec, make_model, polynomial_model, validate_model
from .simulate import SimConfig, estimate_covariance, estimate_time_correlation, simulate
from .ssep import LatticeConfig, compare_to_macro, run_ssep
from .steady import Profile, solve_steady

__version__ = "0.1.0"

__all__ = [
    "CATALOG",
    "ConfigError",
    "CorrelationReport",
    "DomainViolation",
    "LatticeConfig",
    "ModelError",
    "ModelSpec",
    "NessLabError",
    "PhaseWindowError",
    "PreconditionError",
    "Profile",
    "SimConfig",
    "SolverError",
    "analyze",
    "assemble_generator",
    "assemble_noise",
    "build_grid",
    "check_dissipativity",
    "compare_to_macro",
    "compute_phi",
    "decompose_local",
    "estimate_covariance",
    "estimate_time_correlation",
    "linearize",
    "long_range_verdict",
    "make_model",
    "polynomial_model",
    "proposition_residual",
    "run_ssep",
    "simulate",
    "solve_stationary_covariance",
    "solve_steady",
    "time_correlation",
    "validate_model",
]
