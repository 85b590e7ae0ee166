"""Point clouds, exact nearest-neighbor search, and per-point surface statistics.

Each point gets a local covariance from its k nearest neighbors, flattened onto
a plane by eigenvalue replacement, plus the resulting information matrix and
normal.  Statistics are computed once per cloud and stay fixed while the cloud
is registered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .se3 import Mat3

_SYMMETRY_TOL = 1e-9
_DET_FLOOR = 1e-18
# Components smaller than this are treated as zero when fixing normal signs.
_SIGN_TOL = 1e-12


def _sq_dists(a, b) -> NDArray[np.float64]:
    """Broadcasting squared Euclidean distances over the last axis."""
    d = a - b
    return (d * d).sum(axis=-1)


@dataclass(frozen=True)
class SurfaceStats:
    """Per-point local statistics, parallel to the owning cloud's points."""

    covariance: NDArray[np.float64]   # (n, 3, 3), regularized, symmetric PSD
    information: NDArray[np.float64]  # (n, 3, 3), inverse of covariance
    normals: NDArray[np.float64]      # (n, 3), unit vectors
    neighbor_count: int

    def __len__(self) -> int:
        return self.covariance.shape[0]


@dataclass(frozen=True)
class PointCloud:
    """3D points (meters) with optional per-point surface statistics."""

    points: NDArray[np.float64]
    stats: SurfaceStats | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if self.stats is not None and len(self.stats) != pts.shape[0]:
            raise ValueError("stats must have exactly one entry per point")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


class NeighborIndex:
    """Exact k-nearest-neighbor search over a fixed set of 3D points.

    Backed by a KD-tree, with results re-ranked on (squared distance, point
    index) so queries reproduce an exhaustive linear scan exactly, including
    lowest-index tie-breaking.
    """

    def __init__(self, points) -> None:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ValueError("empty point cloud")
        self._points = pts
        self._tree = cKDTree(pts)
        self._n = pts.shape[0]

    def __len__(self) -> int:
        return self._n

    def query(self, queries, k: int = 1) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Return (indices, squared distances) of the k nearest points per query.

        Accepts a single (3,) point or an (m, 3) batch; k is clamped to the
        cloud size.  Rows are ordered by ascending squared distance, ties by
        ascending point index, exactly as a linear scan would order them.
        """
        q = np.asarray(queries, dtype=np.float64)
        single = q.ndim == 1
        q = q.reshape(1, 3) if single else q
        if q.ndim != 2 or q.shape[1] != 3:
            raise ValueError("queries must have shape (m, 3) or (3,)")
        if k < 1:
            raise ValueError("k must be >= 1")

        k_eff = min(k, self._n)
        kk = min(k_eff + 1, self._n)  # one spare to detect boundary ties
        _, idx = self._tree.query(q, k=kk)
        idx = idx.reshape(q.shape[0], kk).astype(np.int64)

        # Re-rank candidates with our own arithmetic: sort by index first, then
        # stably by squared distance, so equal distances keep ascending index.
        sq = _sq_dists(self._points[idx], q[:, None, :])
        order = np.argsort(idx, axis=1, kind="stable")
        idx = np.take_along_axis(idx, order, axis=1)
        sq = np.take_along_axis(sq, order, axis=1)
        order = np.argsort(sq, axis=1, kind="stable")
        idx = np.take_along_axis(idx, order, axis=1)
        sq = np.take_along_axis(sq, order, axis=1)

        if kk > k_eff:
            # A tie across the k-th boundary may involve points outside the
            # candidate window; re-resolve those rows from a ball query.
            boundary = sq[:, k_eff] == sq[:, k_eff - 1]
            for row in np.flatnonzero(boundary):
                idx[row, :k_eff], sq[row, :k_eff] = self._resolve_boundary_tie(
                    q[row], sq[row, k_eff - 1], k_eff)
            idx = idx[:, :k_eff]
            sq = sq[:, :k_eff]

        if single:
            return idx[0], sq[0]
        return idx, sq

    def _resolve_boundary_tie(self, point, boundary_sq: float, k: int):
        radius = float(np.sqrt(boundary_sq)) * (1.0 + 1e-9) + 1e-12
        cand = np.asarray(self._tree.query_ball_point(point, radius), dtype=np.int64)
        sq = _sq_dists(self._points[cand], point)
        order = np.lexsort((cand, sq))[:k]
        return cand[order], sq[order]


def build_index(cloud: PointCloud) -> NeighborIndex:
    """Exact nearest-neighbor index over a cloud's points."""
    return NeighborIndex(cloud.points)


def _fix_normal_signs(normals: NDArray[np.float64]) -> NDArray[np.float64]:
    # Deterministic sign: first component above the zero tolerance is positive.
    lead = np.where(np.abs(normals[:, 0]) > _SIGN_TOL, normals[:, 0],
                    np.where(np.abs(normals[:, 1]) > _SIGN_TOL, normals[:, 1],
                             normals[:, 2]))
    return np.where(lead[:, None] < 0.0, -normals, normals)


def _regularize_batch(cov: NDArray[np.float64], eps_plane: float):
    """Eigenvalue surgery on (m, 3, 3) covariances.

    The smallest eigenvalue is replaced by eps_plane times the largest, forcing
    locally planar behavior; the middle one is floored at the same value so the
    condition number never exceeds 1/eps_plane.  A neighborhood with zero
    spread degenerates to isotropic unit statistics.
    """
    lam, vec = np.linalg.eigh(cov)
    lam_max = lam[:, 2]
    floor = eps_plane * lam_max
    lam_reg = np.column_stack([floor, np.maximum(lam[:, 1], floor), lam_max])
    flat = lam_max <= 0.0
    if np.any(flat):
        lam_reg[flat] = 1.0
        vec[flat] = np.eye(3)
    cov_reg = np.einsum("nij,nj,nkj->nik", vec, lam_reg, vec)
    info = np.einsum("nij,nj,nkj->nik", vec, 1.0 / lam_reg, vec)
    normals = _fix_normal_signs(vec[:, :, 0].copy())
    return cov_reg, info, normals


def regularize_covariance(cov, eps_plane: float):
    """Regularize one 3x3 covariance; returns (covariance, information, normal)."""
    cov = np.asarray(cov, dtype=np.float64).reshape(1, 3, 3)
    cov_reg, info, normals = _regularize_batch(cov, eps_plane)
    return cov_reg[0], info[0], normals[0]


def estimate_stats(cloud: PointCloud, k: int = 20, eps_plane: float = 1e-3) -> PointCloud:
    """Attach per-point covariance, information matrix, and normal to a cloud.

    Each point's covariance is the sample covariance (1/k) of its k nearest
    neighbors, itself included, then regularized by eigenvalue replacement.
    The normal is the eigenvector of the smallest eigenvalue with its sign
    fixed so the first nonzero component is positive.
    """
    if k < 4:
        raise ValueError("k must be at least 4")
    if len(cloud) < k:
        raise ValueError("insufficient points for statistics")
    index = NeighborIndex(cloud.points)
    idx, _ = index.query(cloud.points, k=k)
    neighborhoods = cloud.points[idx]                      # (n, k, 3)
    centered = neighborhoods - neighborhoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    cov_reg, info, normals = _regularize_batch(cov, eps_plane)
    stats = SurfaceStats(covariance=cov_reg, information=info,
                         normals=normals, neighbor_count=k)
    return PointCloud(points=cloud.points, stats=stats)


def _check_symmetric(m: NDArray[np.float64], what: str) -> None:
    if float(np.abs(m - m.T).max()) > _SYMMETRY_TOL:
        raise ValueError(f"asymmetric {what}")


def combine_information(omega_a, omega_b, rotation: Mat3) -> Mat3:
    """Two-sided information matrix: omega_a + R omega_b Rᵀ.

    Adds the source neighborhood's information rotated into the target frame;
    no matrix inversion is involved.
    """
    omega_a = np.asarray(omega_a, dtype=np.float64)
    omega_b = np.asarray(omega_b, dtype=np.float64)
    _check_symmetric(omega_a, "information matrix")
    _check_symmetric(omega_b, "information matrix")
    out = omega_a + rotation @ omega_b @ rotation.T
    return 0.5 * (out + out.T)


def gicp_information(sigma_a, sigma_b, rotation: Mat3) -> Mat3:
    """Inverse of the combined covariance sigma_a + R sigma_b Rᵀ."""
    sigma_a = np.asarray(sigma_a, dtype=np.float64)
    sigma_b = np.asarray(sigma_b, dtype=np.float64)
    _check_symmetric(sigma_a, "covariance matrix")
    _check_symmetric(sigma_b, "covariance matrix")
    combined = sigma_a + rotation @ sigma_b @ rotation.T
    if abs(float(np.linalg.det(combined))) < _DET_FLOOR:
        raise ValueError("singular combined covariance")
    out = np.linalg.inv(combined)
    return 0.5 * (out + out.T)
