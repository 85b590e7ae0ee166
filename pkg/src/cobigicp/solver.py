"""Registration outer loop: correntropy-weighted residuals, closed-form
tangent-space steps, and kernel-bandwidth annealing.

Each iteration alternates gated bidirectional correspondence, Gaussian-kernel
reweighting of the Mahalanobis residuals, and a pseudoinverse solve of the
weighted normal equations; the step is mapped back onto SE(3) by the
retraction.  The robust weights are frozen within an iteration, so every
subproblem is an exactly solvable quadratic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .correspond import (CorrespondenceSet, adaptive_gate, backward_search,
                         bidirectional_filter, forward_search)
from .se3 import Mat3, RigidTransform, TangentVector, Vec3, retract
from .surface import NeighborIndex, PointCloud

SIGMA_FLOOR_FRACTION = 0.05
AUTO_SIGMA_FLOOR = 1e-3
# Auto bandwidth starts at this multiple of the median initial residual, so
# the annealing begins above the bulk of the distribution instead of cutting
# away the far half of a poorly initialized scene.
AUTO_SIGMA_SCALE = 3.0
_COLLAPSE_LIMIT = 3


class RegistrationError(RuntimeError):
    """Raised when a registration run cannot continue."""


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs for the registration loop.

    sigma0 is the Gaussian kernel bandwidth; "auto" initializes it from the
    median Mahalanobis residual of the first gated correspondence set.  The
    bandwidth decays by sigma_decay per iteration and is floored at 5% of its
    initial value.
    """

    sigma0: float | str = "auto"
    sigma_decay: float = 0.97
    max_iterations: int = 100
    translation_tol: float = 1e-6
    rotation_tol: float = 1e-6
    k_neighbors: int = 20
    eps_plane: float = 1e-3
    gate_mode: str = "adaptive"
    eps_gate: float | None = None
    pinv_tolerance: float = 1e-8

    def __post_init__(self) -> None:
        if isinstance(self.sigma0, str):
            if self.sigma0 != "auto":
                raise ValueError('sigma0 must be a positive number or "auto"')
        elif self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if not 0.0 < self.sigma_decay <= 1.0:
            raise ValueError("sigma_decay must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.translation_tol <= 0 or self.rotation_tol <= 0:
            raise ValueError("convergence tolerances must be positive")
        if self.gate_mode not in ("adaptive", "fixed"):
            raise ValueError('gate_mode must be "adaptive" or "fixed"')
        if self.gate_mode == "fixed" and (self.eps_gate is None or self.eps_gate <= 0):
            raise ValueError("fixed gate_mode requires a positive eps_gate")
        if self.pinv_tolerance <= 0:
            raise ValueError("pinv_tolerance must be positive")


@dataclass(frozen=True)
class IterationTrace:
    """Per-iteration diagnostics.

    `objective` is the summed kernel score of the accepted pairs (the summed
    squared Mahalanobis residual for unit-weight baselines); `sigma` is 0.0 on
    iterations that ran before an automatic bandwidth could be initialized.
    """

    iteration: int
    sigma: float
    pair_count: int
    objective: float
    mean_mahalanobis: float
    step_norm: float


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    converged: bool
    iterations: int
    trace: tuple[IterationTrace, ...]
    final_pairs: int


def correntropy_weight(r_squared, sigma: float):
    """Gaussian kernel weight (1/(sqrt(2*pi)*sigma)) * exp(-r²/(2σ²)).

    Accepts a scalar or an array of squared residuals; strictly decreasing in
    r_squared with maximum 1/(sqrt(2*pi)*sigma) at zero.
    """
    if sigma <= 0:
        raise ValueError("nonpositive bandwidth")
    r_squared = np.asarray(r_squared, dtype=np.float64)
    out = np.exp(-r_squared / (2.0 * sigma * sigma)) / (math.sqrt(2.0 * math.pi) * sigma)
    return float(out) if out.ndim == 0 else out


def mahalanobis_residual(a, b, transform: RigidTransform, omega) -> tuple[float, Vec3]:
    """Squared Mahalanobis residual and raw error e = a - T(b)."""
    a = np.asarray(a, dtype=np.float64).reshape(3)
    b = np.asarray(b, dtype=np.float64).reshape(3)
    omega = np.asarray(omega, dtype=np.float64)
    e = a - transform.apply(b)
    r_sq = max(float(e @ omega @ e), 0.0)
    return r_sq, e


def linearize(a, b, transform: RigidTransform) -> tuple[Vec3, NDArray[np.float64]]:
    """First-order model of the pair residual under a tangent perturbation.

    Returns (v, H) with v = a - R b - t and H = [hat(R b + t) | -I], so the
    residual after retract(T, dx) is v + H @ dx up to second order in dx.
    """
    a = np.asarray(a, dtype=np.float64).reshape(3)
    b = np.asarray(b, dtype=np.float64).reshape(3)
    p = transform.apply(b)
    v = a - p
    h = np.zeros((3, 6))
    h[:, :3] = _hat_batch(p[None, :])[0]
    h[:, 3:] = -np.eye(3)
    return v, h


def _hat_batch(v: NDArray[np.float64]) -> NDArray[np.float64]:
    out = np.zeros((v.shape[0], 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def _rotate_information(omega_b: NDArray[np.float64], rotation: Mat3) -> NDArray[np.float64]:
    return np.einsum("ij,njk,lk->nil", rotation, omega_b, rotation)


def _pair_geometry(target_pts, source_pts, transform):
    predicted = source_pts @ transform.rotation.T + transform.translation
    residuals = target_pts - predicted
    return predicted, residuals


def weighted_normal_equations(target_pts, source_pts, transform: RigidTransform,
                              omegas, weights) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Accumulate A = Σ w HᵀΩH and b = Σ w HᵀΩv over matched point pairs.

    The reduction order is fixed (a single einsum contraction), so results are
    reproducible run to run.
    """
    target_pts = np.asarray(target_pts, dtype=np.float64)
    source_pts = np.asarray(source_pts, dtype=np.float64)
    omegas = np.asarray(omegas, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if target_pts.shape[0] == 0:
        raise ValueError("no correspondences")
    predicted, v = _pair_geometry(target_pts, source_pts, transform)
    h = np.concatenate([_hat_batch(predicted),
                        np.broadcast_to(-np.eye(3), (len(v), 3, 3))], axis=2)
    omega_w = omegas * weights[:, None, None]
    a_mat = np.einsum("nka,nkl,nlb->ab", h, omega_w, h)
    b_vec = np.einsum("nka,nkl,nl->a", h, omega_w, v)
    return a_mat, b_vec


def accumulate_normal_equations(pairs: CorrespondenceSet, source: PointCloud,
                                target: PointCloud, transform: RigidTransform,
                                sigma: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Normal equations for a gated pair set with two-sided information and
    correntropy weights at bandwidth sigma."""
    if len(pairs) == 0:
        raise ValueError("no correspondences")
    if source.stats is None or target.stats is None:
        raise ValueError("clouds must carry surface statistics")
    a_pts = target.points[pairs.target_indices]
    b_pts = source.points[pairs.source_indices]
    omega = (target.stats.information[pairs.target_indices]
             + _rotate_information(source.stats.information[pairs.source_indices],
                                   transform.rotation))
    _, v = _pair_geometry(a_pts, b_pts, transform)
    r_sq = np.maximum(np.einsum("ni,nij,nj->n", v, omega, v), 0.0)
    weights = correntropy_weight(r_sq, sigma)
    return weighted_normal_equations(a_pts, b_pts, transform, omega, weights)


def solve_step(a_mat, b_vec, pinv_tolerance: float = 1e-8) -> TangentVector:
    """Closed-form step -A†b via the singular-value pseudoinverse.

    Singular values below pinv_tolerance relative to the largest are treated as
    zero, so rank-deficient geometry yields the minimum-norm step (zero along
    unobservable directions) instead of blowing up.
    """
    a_mat = np.asarray(a_mat, dtype=np.float64)
    b_vec = np.asarray(b_vec, dtype=np.float64).reshape(6)
    a_sym = 0.5 * (a_mat + a_mat.T)
    dx = -np.linalg.pinv(a_sym, rcond=pinv_tolerance) @ b_vec
    return TangentVector.from_stacked(dx)


def _sigma_at(sigma0: float, decay: float, floor: float, iteration: int) -> float:
    # Closed form keeps the schedule exactly reproducible from (sigma0, n).
    return max(sigma0 * decay ** iteration, floor)


def register(source: PointCloud, target: PointCloud,
             init: RigidTransform | None = None,
             config: SolverConfig | None = None) -> RegistrationResult:
    """Align `source` onto `target` with bidirectional correspondence and
    correntropy-weighted closed-form updates.

    Both clouds must already carry surface statistics (see estimate_stats).
    Per iteration: gate correspondences round-trip under the current pose,
    combine both neighborhoods' information matrices in the target frame,
    reweight residuals with the annealed Gaussian kernel, solve the weighted
    normal equations by pseudoinverse, and retract the step.  Stops when both
    step components drop below their tolerances or at max_iterations.

    Raises RegistrationError if the gated set is empty for three consecutive
    iterations or the objective becomes non-finite.
    """
    cfg = config or SolverConfig()
    if source.stats is None or target.stats is None:
        raise ValueError("clouds must carry surface statistics")
    if len(source) == 0 or len(target) == 0:
        raise ValueError("empty point cloud")

    transform = init or RigidTransform.identity()
    target_index = NeighborIndex(target.points)
    omega_a_all = target.stats.information
    omega_b_all = source.stats.information

    sigma0 = None if cfg.sigma0 == "auto" else float(cfg.sigma0)
    sigma_floor = None if sigma0 is None else SIGMA_FLOOR_FRACTION * sigma0

    trace: list[IterationTrace] = []
    converged = False
    iterations = 0
    final_pairs = 0
    empty_streak = 0

    for it in range(cfg.max_iterations):
        iterations = it + 1
        forward = forward_search(target, source, transform)
        backward = backward_search(target_index, source, transform, forward)
        gate = (cfg.eps_gate if cfg.gate_mode == "fixed"
                else adaptive_gate(forward.distances))
        pairs = bidirectional_filter(forward, backward, target, gate)

        if len(pairs) == 0:
            empty_streak += 1
            if empty_streak >= _COLLAPSE_LIMIT:
                raise RegistrationError("correspondence collapse")
            sigma = 0.0 if sigma0 is None else _sigma_at(sigma0, cfg.sigma_decay,
                                                         sigma_floor, it)
            trace.append(IterationTrace(iterations, sigma, 0, 0.0, 0.0, 0.0))
            continue
        empty_streak = 0

        a_pts = target.points[pairs.target_indices]
        b_pts = source.points[pairs.source_indices]
        omega = (omega_a_all[pairs.target_indices]
                 + _rotate_information(omega_b_all[pairs.source_indices],
                                       transform.rotation))
        _, v = _pair_geometry(a_pts, b_pts, transform)
        r_sq = np.maximum(np.einsum("ni,nij,nj->n", v, omega, v), 0.0)

        if sigma0 is None:
            sigma0 = max(AUTO_SIGMA_SCALE * float(np.sqrt(np.median(r_sq))),
                             AUTO_SIGMA_FLOOR)
            sigma_floor = SIGMA_FLOOR_FRACTION * sigma0
        sigma = _sigma_at(sigma0, cfg.sigma_decay, sigma_floor, it)

        weights = correntropy_weight(r_sq, sigma)
        objective = float(np.sum(weights))
        if not np.isfinite(objective):
            raise RegistrationError("numerical divergence")

        a_mat, b_vec = weighted_normal_equations(a_pts, b_pts, transform, omega, weights)
        step = solve_step(a_mat, b_vec, cfg.pinv_tolerance)
        transform = retract(transform, step)

        trace.append(IterationTrace(
            iteration=iterations,
            sigma=sigma,
            pair_count=len(pairs),
            objective=objective,
            mean_mahalanobis=float(np.mean(np.sqrt(r_sq))),
            step_norm=float(np.linalg.norm(step.stacked)),
        ))
        final_pairs = len(pairs)

        if (float(np.linalg.norm(step.dt)) < cfg.translation_tol
                and float(np.linalg.norm(step.xi)) < cfg.rotation_tol):
            converged = True
            break

    return RegistrationResult(transform=transform, converged=converged,
                              iterations=iterations, trace=tuple(trace),
                              final_pairs=final_pairs)


@dataclass(frozen=True)
class MixtureFit:
    """Gaussian-plus-uniform noise mixture and its exponential surrogate.

    The mixture density of a pair error e with squared Mahalanobis residual r²
    is c1 * exp(-r²/2) + c2 * outlier_ratio.  Its negative log is approximated
    by d1 * exp(-d2 * r²/2) + d3, with d1 and d3 chosen so both curves agree
    exactly at r = 0 and as r grows unbounded, and d2 pinned by matching at
    r² = 1.
    """

    outlier_ratio: float
    c1: float
    c2: float
    d1: float
    d2: float
    d3: float

    def neg_log_mixture(self, r_squared) -> NDArray[np.float64]:
        r_squared = np.asarray(r_squared, dtype=np.float64)
        return -np.log(self.c1 * np.exp(-r_squared / 2.0) + self.c2 * self.outlier_ratio)

    def approximation(self, r_squared) -> NDArray[np.float64]:
        r_squared = np.asarray(r_squared, dtype=np.float64)
        return self.d1 * np.exp(-self.d2 * r_squared / 2.0) + self.d3

    @property
    def tail_value(self) -> float:
        """Limit of the negative log mixture as the residual grows unbounded."""
        return -math.log(self.c2 * self.outlier_ratio)


def fit_mixture_constants(outlier_ratio: float, omega=None) -> MixtureFit:
    """Fit the exponential surrogate of the noise-mixture negative log.

    Both mixture components are scaled by the Gaussian peak density implied by
    `omega` (identity information by default), so the inlier-to-outlier ratio
    is (1 - outlier_ratio) / outlier_ratio regardless of units.
    """
    if not 0.0 < outlier_ratio < 1.0:
        raise ValueError("outlier_ratio must lie strictly between 0 and 1")
    omega = np.eye(3) if omega is None else np.asarray(omega, dtype=np.float64)
    det = float(np.linalg.det(omega))
    if det <= 0:
        raise ValueError("information matrix must be positive definite")
    peak = math.sqrt(det) / (2.0 * math.pi) ** 1.5
    c1 = (1.0 - outlier_ratio) * peak
    c2 = peak
    d3 = -math.log(c2 * outlier_ratio)
    d1 = -math.log(c1 + c2 * outlier_ratio) - d3
    mid = -math.log(c1 * math.exp(-0.5) + c2 * outlier_ratio) - d3
    d2 = -2.0 * math.log(mid / d1)
    return MixtureFit(outlier_ratio=outlier_ratio, c1=c1, c2=c2, d1=d1, d2=d2, d3=d3)
