"""Seeded scene generation, downsampling, and initial-pose perturbation."""

from __future__ import annotations

import math

import numpy as np

from ..se3 import RigidTransform, TangentVector, exp_so3, invert, retract
from ..surface import PointCloud

SCENE_KINDS = ("plane_corner", "corridor", "random_surfaces")

# (max translation meters, max rotation radians) per hardness level.
PERTURBATION_LEVELS = {
    "easy": (0.1, math.radians(5.0)),
    "medium": (0.5, math.radians(20.0)),
    "hard": (1.0, math.radians(45.0)),
}


def downsample(cloud: PointCloud, fraction: float, seed) -> PointCloud:
    """Uniform random subset without replacement of size ceil(fraction * n).

    fraction 1 returns the cloud unchanged; smaller fractions keep the
    original point order and subset any attached statistics alongside.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1.0:
        return cloud
    n = len(cloud)
    size = math.ceil(fraction * n)
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(n, size=size, replace=False))
    stats = cloud.stats
    if stats is not None:
        from ..surface import SurfaceStats
        stats = SurfaceStats(covariance=stats.covariance[keep],
                             information=stats.information[keep],
                             normals=stats.normals[keep],
                             neighbor_count=stats.neighbor_count)
    return PointCloud(points=cloud.points[keep], stats=stats)


def _ball_sample(rng: np.random.Generator, radius: float) -> np.ndarray:
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    return direction * radius * rng.uniform() ** (1.0 / 3.0)


def perturb(transform: RigidTransform, level: str, seed) -> RigidTransform:
    """Retract a random tangent perturbation drawn uniformly within the level's
    translation/rotation balls; level "none" returns the transform unchanged."""
    if level == "none":
        return transform
    if level not in PERTURBATION_LEVELS:
        raise ValueError(f"unknown perturbation level {level!r}")
    max_trans, max_rot = PERTURBATION_LEVELS[level]
    rng = np.random.default_rng(seed)
    xi = _ball_sample(rng, max_rot)
    dt = _ball_sample(rng, max_trans)
    return retract(transform, TangentVector(xi, dt))


def _sample_patch(rng, n, origin, edge_u, edge_v):
    u = rng.uniform(size=(n, 1))
    v = rng.uniform(size=(n, 1))
    return origin + u * edge_u + v * edge_v


def _split_counts(total: int, parts: int) -> list[int]:
    base = total // parts
    counts = [base] * parts
    counts[0] += total - base * parts
    return counts


def _scene_points(kind: str, n_points: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "plane_corner":
        side = 2.0
        patches = [
            (np.zeros(3), np.array([side, 0, 0]), np.array([0, side, 0])),   # floor
            (np.zeros(3), np.array([0, side, 0]), np.array([0, 0, side])),   # wall x=0
            (np.zeros(3), np.array([side, 0, 0]), np.array([0, 0, side])),   # wall y=0
        ]
    elif kind == "corridor":
        length, width, height = 8.0, 1.0, 1.0
        patches = [
            (np.zeros(3), np.array([length, 0, 0]), np.array([0, width, 0])),          # floor
            (np.zeros(3), np.array([length, 0, 0]), np.array([0, 0, height])),         # wall y=0
            (np.array([0, width, 0.0]), np.array([length, 0, 0]), np.array([0, 0, height])),
        ]
    elif kind == "random_surfaces":
        patches = []
        for _ in range(6):
            center = rng.uniform(-1.5, 1.5, size=3)
            frame = exp_so3(rng.normal(size=3))
            patches.append((center, 1.5 * frame[:, 0], 1.5 * frame[:, 1]))
    else:
        raise ValueError(f"unknown scene kind {kind!r}")
    chunks = [_sample_patch(rng, c, *patch)
              for c, patch in zip(_split_counts(n_points, len(patches)), patches)]
    return np.vstack(chunks)


def make_synthetic_scene(kind: str, n_points: int, noise_sigma: float,
                         outlier_fraction: float, seed,
                         rotation_deg: float = 5.0,
                         translation: float = 0.1,
                         outlier_box_scale: float = 2.0) -> tuple[PointCloud, PointCloud, RigidTransform]:
    """Build a (source, target, ground-truth transform) registration instance.

    The target is sampled on the scene's surfaces.  The source is the target
    mapped through the inverse ground truth, plus per-axis Gaussian noise and
    floor(outlier_fraction * n) uniform outliers inside the source bounding box
    inflated by outlier_box_scale (2x by default; 1.0 confines outliers to the
    scene volume, which makes them far more adversarial).  The ground-truth
    rotation angle and translation magnitude are fixed (seeded directions), so
    recovery accuracy is directly comparable across seeds.
    """
    if not 0.0 <= outlier_fraction < 1.0:
        raise ValueError("outlier_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    target_pts = _scene_points(kind, n_points, rng)

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    t_gt = RigidTransform(exp_so3(axis * math.radians(rotation_deg)),
                          direction * translation)

    source_pts = invert(t_gt).apply(target_pts)
    if noise_sigma > 0:
        source_pts = source_pts + rng.normal(scale=noise_sigma, size=source_pts.shape)
    n_out = int(math.floor(outlier_fraction * n_points))
    if n_out > 0:
        lo = source_pts.min(axis=0)
        hi = source_pts.max(axis=0)
        center = 0.5 * (lo + hi)
        half = 0.5 * outlier_box_scale * (hi - lo)
        outliers = rng.uniform(center - half, center + half, size=(n_out, 3))
        source_pts = np.vstack([source_pts, outliers])

    return PointCloud(points=source_pts), PointCloud(points=target_pts), t_gt
