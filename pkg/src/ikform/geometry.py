"""Planar and spatial rigid transforms and roll-pitch-yaw conversion.

Entries may be plain floats or :class:`~ikform.autodiff.Dual` values, so the
same code paths serve both numeric evaluation and differentiation.

Euler convention: extrinsic X, then Y, then Z, i.e.
``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

GIMBAL_TOL = 1e-12


@dataclass(frozen=True)
class Pose2:
    """Planar pose; ``theta`` is kept unnormalized."""

    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([ad.value(self.x), ad.value(self.y), ad.value(self.theta)], dtype=float)

    def wrapped(self) -> "Pose2":
        return Pose2(self.x, self.y, ad.wrap_angle(self.theta))

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = ad.cos(self.theta), ad.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def to_dict(self) -> dict:
        x, y, t = self.as_array()
        return {"x": float(x), "y": float(y), "theta": float(t)}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose2":
        return cls(float(d["x"]), float(d["y"]), float(d["theta"]))


@dataclass(frozen=True)
class EulerRPY:
    roll: float
    pitch: float
    yaw: float
    gimbal_lock: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw], dtype=float)


@dataclass(frozen=True, eq=False)
class Pose3:
    """Rigid transform ``x -> rotation @ x + position``."""

    position: np.ndarray
    rotation: np.ndarray

    @classmethod
    def identity(cls) -> "Pose3":
        return cls(np.zeros(3), np.eye(3))

    @classmethod
    def from_translation(cls, x, y, z) -> "Pose3":
        return cls(np.array([x, y, z], dtype=float), np.eye(3))

    @classmethod
    def from_rpy(cls, position, rpy) -> "Pose3":
        """Pose ``X(p, o)`` from a position and roll-pitch-yaw angles."""
        return cls(position, rotation_from_rpy(rpy))

    @classmethod
    def from_matrix(cls, T) -> "Pose3":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3].copy(), T[:3, :3].copy())

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = ad.value(self.rotation)
        T[:3, 3] = ad.value(self.position)
        return T

    def compose(self, other: "Pose3") -> "Pose3":
        return compose(self, other)

    def __matmul__(self, other: "Pose3") -> "Pose3":
        return compose(self, other)

    def inverse(self) -> "Pose3":
        Rt = self.rotation.T
        return Pose3(-(Rt @ self.position), Rt)

    def transform_point(self, p):
        return self.rotation @ p + self.position

    def rpy(self) -> EulerRPY:
        return rpy_from_rotation(ad.value(self.rotation))

    def numeric(self) -> "Pose3":
        """Copy with derivative information stripped."""
        return Pose3(ad.value(self.position).copy(), ad.value(self.rotation).copy())

    def orthonormality_error(self) -> float:
        R = ad.value(self.rotation)
        return float(np.max(np.abs(R.T @ R - np.eye(3))))

    def to_dict(self) -> dict:
        e = self.rpy()
        return {
            "position": [float(v) for v in ad.value(self.position)],
            "rpy": [float(e.roll), float(e.pitch), float(e.yaw)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose3":
        return cls.from_rpy(np.asarray(d["position"], dtype=float), np.asarray(d["rpy"], dtype=float))


def compose(a: Pose3, b: Pose3) -> Pose3:
    """Rigid transform ``a * b``."""
    return Pose3(a.rotation @ b.position + a.position, a.rotation @ b.rotation)


def pose_distance(a: Pose3, b: Pose3) -> float:
    """Position error norm plus chordal (Frobenius) rotation distance."""
    dp = np.linalg.norm(ad.value(a.position) - ad.value(b.position))
    dR = np.linalg.norm(ad.value(a.rotation) - ad.value(b.rotation))
    return float(dp + dR)


def rot_x(a):
    c, s = ad.cos(a), ad.sin(a)
    return ad.stack([ad.stack([1.0, 0.0, 0.0]), ad.stack([0.0, c, -s]), ad.stack([0.0, s, c])])


def rot_y(a):
    c, s = ad.cos(a), ad.sin(a)
    return ad.stack([ad.stack([c, 0.0, s]), ad.stack([0.0, 1.0, 0.0]), ad.stack([-s, 0.0, c])])


def rot_z(a):
    c, s = ad.cos(a), ad.sin(a)
    return ad.stack([ad.stack([c, -s, 0.0]), ad.stack([s, c, 0.0]), ad.stack([0.0, 0.0, 1.0])])


def rotation_from_rpy(e) -> np.ndarray:
    """``Rz(yaw) @ Ry(pitch) @ Rx(roll)``.

    ``e`` is an :class:`EulerRPY` or any length-3 sequence / dual vector.
    """
    if isinstance(e, EulerRPY):
        r, p, y = e.roll, e.pitch, e.yaw
    else:
        r, p, y = e[0], e[1], e[2]
    if not any(ad.is_dual(v) for v in (r, p, y)):
        r, p, y = float(r), float(p), float(y)
        cr, sr = math.cos(r), math.sin(r)
        cp, sp = math.cos(p), math.sin(p)
        cy, sy = math.cos(y), math.sin(y)
        return np.array([
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ])
    cr, sr = ad.cos(r), ad.sin(r)
    cp, sp = ad.cos(p), ad.sin(p)
    cy, sy = ad.cos(y), ad.sin(y)
    return ad.stack([
        ad.stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr]),
        ad.stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr]),
        ad.stack([-sp, cp * sr, cp * cr]),
    ])


def rpy_from_rotation(R) -> EulerRPY:
    """Roll-pitch-yaw of a rotation matrix.

    At gimbal lock (``cos(pitch) == 0``) roll is fixed to zero and yaw takes
    the remaining rotation; the result is flagged.
    """
    R = np.asarray(R, dtype=float)
    cp = math.hypot(R[2, 1], R[2, 2])
    pitch = math.atan2(-R[2, 0], cp)
    if cp < GIMBAL_TOL:
        return EulerRPY(0.0, pitch, math.atan2(-R[0, 1], R[1, 1]), gimbal_lock=True)
    return EulerRPY(math.atan2(R[2, 1], R[2, 2]), pitch, math.atan2(R[1, 0], R[0, 0]))


def rpy_vector(R):
    """Differentiable roll-pitch-yaw of a (possibly dual) rotation matrix.

    Returns a length-3 vector; the gimbal-lock convention matches
    :func:`rpy_from_rotation`.
    """
    if not ad.is_dual(R):
        return rpy_from_rotation(R).as_array()
    r21, r22, r20 = R[2, 1], R[2, 2], R[2, 0]
    cp = ad.sqrt(r21 * r21 + r22 * r22)
    pitch = ad.atan2(-r20, cp)
    if ad.value(cp) < GIMBAL_TOL:
        return ad.stack([0.0 * pitch, pitch, ad.atan2(-R[0, 1], R[1, 1])])
    return ad.stack([ad.atan2(r21, r22), pitch, ad.atan2(R[1, 0], R[0, 0])])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (unit-quaternion sampling)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
