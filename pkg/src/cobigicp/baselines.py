"""Reference registrars for ablation: point-to-point, point-to-plane, a
GICP-style probabilistic variant, and the correntropy-only ablation that keeps
forward-only correspondence."""

from __future__ import annotations

from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .correspond import forward_search
from .se3 import RigidTransform, retract
from .solver import (AUTO_SIGMA_FLOOR, AUTO_SIGMA_SCALE, SIGMA_FLOOR_FRACTION, IterationTrace,
                     RegistrationError, RegistrationResult, SolverConfig,
                     _pair_geometry, _sigma_at, correntropy_weight, solve_step,
                     weighted_normal_equations)
from .surface import PointCloud

_DET_FLOOR = 1e-18


class BaselineKind(str, Enum):
    POINT_TO_POINT = "p2pt"
    POINT_TO_PLANE = "p2pl"
    GICP = "gicp"
    COGICP = "cogicp"


def _inv3_batch(mats: NDArray[np.float64], det_floor: float = _DET_FLOOR) -> NDArray[np.float64]:
    """Closed-form cofactor inverse of a (n, 3, 3) batch.

    Determinant magnitudes are floored so near-singular combined covariances
    stay finite instead of raising mid-run.
    """
    a, b, c = mats[:, 0, 0], mats[:, 0, 1], mats[:, 0, 2]
    d, e, f = mats[:, 1, 0], mats[:, 1, 1], mats[:, 1, 2]
    g, h, i = mats[:, 2, 0], mats[:, 2, 1], mats[:, 2, 2]
    adj = np.empty_like(mats)
    adj[:, 0, 0] = e * i - f * h
    adj[:, 0, 1] = c * h - b * i
    adj[:, 0, 2] = b * f - c * e
    adj[:, 1, 0] = f * g - d * i
    adj[:, 1, 1] = a * i - c * g
    adj[:, 1, 2] = c * d - a * f
    adj[:, 2, 0] = d * h - e * g
    adj[:, 2, 1] = b * g - a * h
    adj[:, 2, 2] = a * e - b * d
    det = a * adj[:, 0, 0] + b * adj[:, 1, 0] + c * adj[:, 2, 0]
    det = np.where(det < 0, np.minimum(det, -det_floor), np.maximum(det, det_floor))
    return adj / det[:, None, None]


def _pair_information(kind: BaselineKind, source: PointCloud, target: PointCloud,
                      source_idx: NDArray[np.int64], rotation) -> NDArray[np.float64]:
    n = len(source_idx)
    if kind is BaselineKind.POINT_TO_POINT:
        return np.broadcast_to(np.eye(3), (n, 3, 3))
    if kind is BaselineKind.POINT_TO_PLANE:
        normals = target.stats.normals
        return np.einsum("ni,nj->nij", normals, normals)
    # GICP-style: invert the combined covariance of both neighborhoods.
    combined = (target.stats.covariance
                + np.einsum("ij,njk,lk->nil", rotation,
                            source.stats.covariance[source_idx], rotation))
    return _inv3_batch(combined)


def _require_stats(kind: BaselineKind, source: PointCloud, target: PointCloud) -> None:
    if kind is BaselineKind.POINT_TO_POINT:
        return
    if kind is BaselineKind.POINT_TO_PLANE:
        if target.stats is None:
            raise ValueError("point-to-plane registration requires target surface statistics")
        return
    if source.stats is None or target.stats is None:
        raise ValueError(f"{kind.value} registration requires surface statistics on both clouds")


def register_baseline(kind: BaselineKind, source: PointCloud, target: PointCloud,
                      init: RigidTransform | None = None,
                      config: SolverConfig | None = None) -> RegistrationResult:
    """Run one of the reference registrars with forward-only correspondence.

    All kinds share the outer-loop skeleton, stopping rule, and step solver of
    the main registrar; they differ only in the per-pair information matrix
    and whether residuals are correntropy-weighted (COGICP) or unweighted.
    Trace objectives are the summed kernel score for COGICP and the summed
    squared Mahalanobis residual otherwise.
    """
    kind = BaselineKind(kind)
    cfg = config or SolverConfig()
    _require_stats(kind, source, target)
    if len(source) == 0 or len(target) == 0:
        raise ValueError("empty point cloud")

    transform = init or RigidTransform.identity()
    use_kernel = kind is BaselineKind.COGICP
    sigma0 = None if cfg.sigma0 == "auto" else float(cfg.sigma0)
    sigma_floor = None if sigma0 is None else SIGMA_FLOOR_FRACTION * sigma0

    trace: list[IterationTrace] = []
    converged = False
    iterations = 0
    final_pairs = 0

    for it in range(cfg.max_iterations):
        iterations = it + 1
        forward = forward_search(target, source, transform)
        a_pts = target.points
        b_pts = source.points[forward.source_indices]
        omega = _pair_information(kind, source, target, forward.source_indices,
                                  transform.rotation)
        _, v = _pair_geometry(a_pts, b_pts, transform)
        r_sq = np.maximum(np.einsum("ni,nij,nj->n", v, omega, v), 0.0)

        if use_kernel:
            if sigma0 is None:
                sigma0 = max(AUTO_SIGMA_SCALE * float(np.sqrt(np.median(r_sq))),
                                 AUTO_SIGMA_FLOOR)
                sigma_floor = SIGMA_FLOOR_FRACTION * sigma0
            sigma = _sigma_at(sigma0, cfg.sigma_decay, sigma_floor, it)
            weights = correntropy_weight(r_sq, sigma)
            objective = float(np.sum(weights))
        else:
            sigma = 0.0
            weights = np.ones(len(forward))
            objective = float(np.sum(r_sq))
        if not np.isfinite(objective):
            raise RegistrationError("numerical divergence")

        a_mat, b_vec = weighted_normal_equations(a_pts, b_pts, transform, omega, weights)
        step = solve_step(a_mat, b_vec, cfg.pinv_tolerance)
        transform = retract(transform, step)

        trace.append(IterationTrace(
            iteration=iterations,
            sigma=sigma,
            pair_count=len(forward),
            objective=objective,
            mean_mahalanobis=float(np.mean(np.sqrt(r_sq))),
            step_norm=float(np.linalg.norm(step.stacked)),
        ))
        final_pairs = len(forward)

        if (float(np.linalg.norm(step.dt)) < cfg.translation_tol
                and float(np.linalg.norm(step.xi)) < cfg.rotation_tol):
            converged = True
            break

    return RegistrationResult(transform=transform, converged=converged,
                              iterations=iterations, trace=tuple(trace),
                              final_pairs=final_pairs)
