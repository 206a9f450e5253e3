"""Zeroth-order mirror descent with Gaussian-smoothing gradient estimates
under a biased noisy oracle, with the matching theoretical bounds."""

from ._validation import (ConfigurationError, DomainError, PreconditionError,
                          ScanLimitError)
from .analysis import (BoundReport, TheoryParams, bound_report, compute_bias_bound,
                       compute_delta, compute_second_moment_bound, concentration_bound,
                       empirical_convergence_probability, min_iterations_for_confidence,
                       neighborhood_radius, optimal_mu)
from .geometry import (FeasibleSet, Geometry, MirrorMap, NormPair, bregman, dual_norm_of,
                       prox_step, three_point_gap)
from .nga import (GradientSample, NgaConfig, estimate_gradient, sample_direction,
                  smoothed_gradient_ref, smoothed_value_ref, verify_estimator_bounds)
from .optimizer import ZerothOrderMirrorDescent
from .oracle import (NoiseModel, ObjectiveSpec, evaluate_exact, evaluate_noisy,
                     gradient_exact)
from .solver import (Experiment, Problem, StepSchedule, Trajectory, alpha_at,
                     run_ensemble, run_zomd, update_average)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ConfigurationError",
    "DomainError",
    "Experiment",
    "FeasibleSet",
    "Geometry",
    "GradientSample",
    "MirrorMap",
    "NgaConfig",
    "NoiseModel",
    "NormPair",
    "ObjectiveSpec",
    "PreconditionError",
    "Problem",
    "ScanLimitError",
    "StepSchedule",
    "TheoryParams",
    "Trajectory",
    "ZerothOrderMirrorDescent",
    "alpha_at",
    "bound_report",
    "bregman",
    "compute_bias_bound",
    "compute_delta",
    "compute_second_moment_bound",
    "concentration_bound",
    "dual_norm_of",
    "empirical_convergence_probability",
    "estimate_gradient",
    "evaluate_exact",
    "evaluate_noisy",
    "gradient_exact",
    "min_iterations_for_confidence",
    "neighborhood_radius",
    "optimal_mu",
    "prox_step",
    "run_ensemble",
    "run_zomd",
    "sample_direction",
    "smoothed_gradient_ref",
    "smoothed_value_ref",
    "three_point_gap",
    "update_average",
    "verify_estimator_bounds",
]
