"""Numerical evaluation of exact contour-integral formulas for joint
particle-position probabilities in the asymmetric simple exclusion process,
cross-validated against stochastic simulation and exact finite-state solvers."""

from .core import (
    AsepParams,
    BudgetExceededError,
    ParticleConfig,
    PoleError,
    PositionEvent,
    ProbResult,
    ValidationError,
    validate_params,
)
from .formulas import (
    TruncationPolicy,
    prob_consecutive,
    prob_first_m_large,
    prob_first_m_small,
    prob_single,
    prob_single_step_ic,
    transition_probability,
)
from .quadrature import ContourSpec, QuadConfig, QuadGrid

__version__ = "0.1.0"

__all__ = [
    "AsepParams",
    "BudgetExceededError",
    "ContourSpec",
    "ParticleConfig",
    "PoleError",
    "PositionEvent",
    "ProbResult",
    "QuadConfig",
    "QuadGrid",
    "TruncationPolicy",
    "ValidationError",
    "__version__",
    "prob_consecutive",
    "prob_first_m_large",
    "prob_first_m_small",
    "prob_single",
    "prob_single_step_ic",
    "transition_probability",
    "validate_params",
]
