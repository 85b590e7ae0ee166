"""Robust rigid point-cloud registration.

Bidirectional correspondence with round-trip gating, two-sided information
matrices, and correntropy-weighted closed-form updates on SE(3), plus
point-to-point, point-to-plane, and GICP-style reference registrars.
"""

from .baselines import BaselineKind, register_baseline
from .correspond import (CorrespondencePair, CorrespondenceSet, ForwardMatches,
                         adaptive_gate, backward_search, bidirectional_filter,
                         forward_search)
from .se3 import (RigidTransform, TangentVector, compose, exp_so3, hat, invert,
                  is_rotation, pose_error, project_to_so3, retract,
                  transform_from_line, transform_to_line)
from .solver import (IterationTrace, MixtureFit, RegistrationError,
                     RegistrationResult, SolverConfig,
                     accumulate_normal_equations, correntropy_weight,
                     fit_mixture_constants, linearize, mahalanobis_residual,
                     register, solve_step, weighted_normal_equations)
from .surface import (NeighborIndex, PointCloud, SurfaceStats, build_index,
                      combine_information, estimate_stats, gicp_information,
                      regularize_covariance)

__version__ = "0.1.0"

__all__ = [
    "BaselineKind",
    "CorrespondencePair",
    "CorrespondenceSet",
    "ForwardMatches",
    "IterationTrace",
    "MixtureFit",
    "NeighborIndex",
    "PointCloud",
    "RegistrationError",
    "RegistrationResult",
    "RigidTransform",
    "SolverConfig",
    "SurfaceStats",
    "TangentVector",
    "accumulate_normal_equations",
    "adaptive_gate",
    "backward_search",
    "bidirectional_filter",
    "build_index",
    "combine_information",
    "compose",
    "correntropy_weight",
    "estimate_stats",
    "exp_so3",
    "fit_mixture_constants",
    "forward_search",
    "gicp_information",
    "hat",
    "invert",
    "is_rotation",
    "linearize",
    "mahalanobis_residual",
    "pose_error",
    "project_to_so3",
    "register",
    "register_baseline",
    "regularize_covariance",
    "retract",
    "solve_step",
    "transform_from_line",
    "transform_to_line",
    "weighted_normal_equations",
]
