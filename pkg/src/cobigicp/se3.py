"""Minimal SO(3)/SE(3) toolkit: hat operator, exponential map, retraction, pose errors.

All rotations are plain 3x3 numpy arrays; rigid transforms are (rotation,
translation) pairs.  Every function is pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

Vec3 = NDArray[np.float64]   # shape (3,)
Vec6 = NDArray[np.float64]   # shape (6,)
Mat3 = NDArray[np.float64]   # shape (3, 3)

# Below this angle the Rodrigues sin/cos terms lose precision; use the series.
_SMALL_ANGLE = 1e-8
# Re-orthonormalize a retracted rotation once drift exceeds this defect.
_DRIFT_TOL = 1e-7


def _vec3(x) -> Vec3:
    return np.asarray(x, dtype=np.float64).reshape(3)


def hat(phi) -> Mat3:
    """Skew-symmetric cross-product matrix: hat(a) @ b == np.cross(a, b)."""
    x, y, z = _vec3(phi)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def exp_so3(phi) -> Mat3:
    """Axis-angle exponential map (Rodrigues formula) from rotation vector to SO(3).

    Angles below 1e-8 rad use the first-order series I + hat(phi), which is
    exact to double precision there and avoids dividing by a near-zero angle.
    """
    phi = _vec3(phi)
    angle = float(np.linalg.norm(phi))
    k = hat(phi)
    if angle < _SMALL_ANGLE:
        return np.eye(3) + k
    a = np.sin(angle) / angle
    b = (1.0 - np.cos(angle)) / (angle * angle)
    return np.eye(3) + a * k + b * (k @ k)


def orthogonality_defect(m: Mat3) -> float:
    """Frobenius norm of mᵀm - I."""
    m = np.asarray(m, dtype=np.float64)
    return float(np.linalg.norm(m.T @ m - np.eye(3)))


def is_rotation(m, tol: float = 1e-9) -> bool:
    """True if m is orthogonal with unit determinant within tol."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    return orthogonality_defect(m) <= tol and abs(float(np.linalg.det(m)) - 1.0) <= tol


def project_to_so3(m) -> Mat3:
    """Nearest rotation matrix (polar factor via SVD, reflection corrected)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element acting on points as x -> rotation @ x + translation."""

    rotation: Mat3
    translation: Vec3

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be a 3x3 matrix")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        # Loose sanity gate; strict 1e-9 manifold checks live in the tests.
        if not is_rotation(r, tol=1e-6):
            raise ValueError("rotation matrix is not in SO(3)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points) -> NDArray[np.float64]:
        """Transform one (3,) point or an (n, 3) batch."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def matrix(self) -> NDArray[np.float64]:
        """4x4 homogeneous form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class TangentVector:
    """Local SE(3) perturbation: rotation vector xi (rad) and translation step dt (m)."""

    xi: Vec3
    dt: Vec3

    def __post_init__(self) -> None:
        xi = _vec3(self.xi)
        dt = _vec3(self.dt)
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(dt))):
            raise ValueError("tangent vector entries must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "dt", dt)

    @classmethod
    def zero(cls) -> "TangentVector":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_stacked(cls, v) -> "TangentVector":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return cls(v[:3], v[3:])

    @property
    def stacked(self) -> Vec6:
        return np.concatenate([self.xi, self.dt])


def _as_tangent(dx) -> TangentVector:
    if isinstance(dx, TangentVector):
        return dx
    return TangentVector.from_stacked(dx)


def retract(transform: RigidTransform, dx) -> RigidTransform:
    """Map a tangent perturbation onto the group around `transform`.

    Returns (exp(xi^) R, exp(xi^) t + dt).  The rotation is re-projected onto
    SO(3) only if accumulated round-off drift exceeds 1e-7, so retract(T, 0)
    reproduces T bit for bit.
    """
    dx = _as_tangent(dx)
    e = exp_so3(dx.xi)
    r = e @ transform.rotation
    if orthogonality_defect(r) > _DRIFT_TOL:
        r = project_to_so3(r)
    t = e @ transform.translation + dx.dt
    return RigidTransform(r, t)


def compose(first: RigidTransform, second: RigidTransform) -> RigidTransform:
    """Transform applying `second` then `first`: x -> first(second(x))."""
    return RigidTransform(first.rotation @ second.rotation,
                          first.rotation @ second.translation + first.translation)


def invert(transform: RigidTransform) -> RigidTransform:
    rt = transform.rotation.T
    return RigidTransform(rt, -rt @ transform.translation)


def pose_error(estimate: RigidTransform, ground_truth: RigidTransform) -> tuple[float, float]:
    """Relative pose error (translation meters, rotation radians).

    Computed from the relative transform estimate ∘ ground_truth⁻¹; the arccos
    argument is clamped to [-1, 1] to absorb trace round-off.
    """
    delta = compose(estimate, invert(ground_truth))
    e_trans = float(np.linalg.norm(delta.translation))
    c = (float(np.trace(delta.rotation)) - 1.0) / 2.0
    e_rot = float(np.arccos(np.clip(c, -1.0, 1.0)))
    return e_trans, e_rot


def transform_to_line(transform: RigidTransform) -> str:
    """Serialize as 12 numbers: row-major rotation entries, then translation."""
    values = list(transform.rotation.reshape(9)) + list(transform.translation)
    return " ".join(repr(float(v)) for v in values)


def transform_from_line(line: str) -> RigidTransform:
    """Parse the 12-number line format produced by transform_to_line."""
    parts = line.replace(",", " ").split()
    if len(parts) != 12:
        raise ValueError(f"expected 12 numbers on a transform line, got {len(parts)}")
    values = np.array([float(p) for p in parts])
    return RigidTransform(values[:9].reshape(3, 3), values[9:])
