"""Continuous-time IMU models on flat and rotating Earth.

Provides the right-hand sides of the motion equations as 5x5 embedding
derivatives, the group-affine embedding matrices (W, U, f), a residual
checker for the group-affine property, and a fixed-step RK4 integrator used
as the ground-truth oracle for every preintegration claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .se23 import ExtendedPose, project_rotation, skew

DEFAULT_GRAVITY = np.array([0.0, 0.0, -9.81])
# Standard geodesy constant (rad/s); the paper does not pin a value.
EARTH_RATE = 7.2921159e-5


class NonFinite(FloatingPointError):
    """Integrator state left the space of finite numbers."""


@dataclass
class ImuSample:
    """One gyro/accel increment: body-frame rates over a step of dt seconds.

    ``accel`` is specific acceleration (true acceleration minus gravity,
    body frame).
    """

    gyro: np.ndarray
    accel: np.ndarray
    dt: float

    def __post_init__(self):
        self.gyro = np.asarray(self.gyro, dtype=float).reshape(3)
        self.accel = np.asarray(self.accel, dtype=float).reshape(3)
        self.dt = float(self.dt)
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (np.all(np.isfinite(self.gyro)) and np.all(np.isfinite(self.accel))):
            raise ValueError("gyro/accel must be finite")


@dataclass
class EarthModel:
    """Gravity vector g and Earth-rate vector Omega in the local frame.

    Flat-Earth mode is exactly earth_rate == 0.
    """

    gravity: np.ndarray = field(default_factory=lambda: DEFAULT_GRAVITY.copy())
    earth_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float).reshape(3)
        self.earth_rate = np.asarray(self.earth_rate, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.gravity)) and np.all(np.isfinite(self.earth_rate))):
            raise ValueError("gravity/earth_rate must be finite")

    @classmethod
    def flat(cls, gravity=None) -> "EarthModel":
        return cls(DEFAULT_GRAVITY.copy() if gravity is None else gravity, np.zeros(3))

    @classmethod
    def rotating(cls, gravity=None, axis=(0.0, 0.0, 1.0), rate=EARTH_RATE) -> "EarthModel":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        return cls(DEFAULT_GRAVITY.copy() if gravity is None else gravity, rate * axis)

    @property
    def is_flat(self) -> bool:
        return bool(np.all(self.earth_rate == 0.0))


def _embedding(t) -> np.ndarray:
    if isinstance(t, ExtendedPose):
        return t.as_matrix()
    return np.asarray(t, dtype=float)


def rhs_flat(t, u: ImuSample, earth: EarthModel) -> np.ndarray:
    """d/dt of the 5x5 embedding on flat Earth.

    Rdot = R (w)x, Vdot = g + R a, Xdot = V.  Accepts an ExtendedPose or a
    raw 5x5 matrix (the integrator feeds it off-manifold stage values).
    """
    if not earth.is_flat:
        raise ValueError("rhs_flat requires earth_rate == 0")
    m = _embedding(t)
    out = np.zeros((5, 5))
    out[:3, :3] = m[:3, :3] @ skew(u.gyro)
    out[:3, 3] = earth.gravity + m[:3, :3] @ u.accel
    out[:3, 4] = m[:3, 3]
    return out


def rhs_earth(t, u: ImuSample, earth: EarthModel) -> np.ndarray:
    """d/dt of the 5x5 embedding on rotating Earth.

    Rdot = -Ox R + R (w)x, Vdot = g + R a - 2 Ox V - Ox Ox X, Xdot = V.
    """
    m = _embedding(t)
    ox = skew(earth.earth_rate)
    out = np.zeros((5, 5))
    out[:3, :3] = -ox @ m[:3, :3] + m[:3, :3] @ skew(u.gyro)
    out[:3, 3] = (earth.gravity + m[:3, :3] @ u.accel
                  - 2.0 * (ox @ m[:3, 3]) - ox @ (ox @ m[:3, 4]))
    out[:3, 4] = m[:3, 3]
    return out


def matrices_WUf(u: ImuSample, earth: EarthModel, primed: bool = False):
    """Embedding matrices of the group-affine form dT/dt = W T + f(T) + T U.

    Flat mode: W carries g in its velocity column; primed mode additionally
    carries the Earth-rate skew in the rotation block (the rotating-Earth
    model expressed in the auxiliary velocity V' = V + Ox X).  U carries the
    body-frame inputs and f places V in the position column.  The primed
    rotation block is -Ox: that is the sign under which W'T' + f(T') + T'U
    reproduces Rdot = -Ox R + R (w)x, V'dot = g + R a - Ox V',
    Xdot = V' - Ox X.
    """
    w = np.zeros((5, 5))
    w[:3, 3] = earth.gravity
    if primed:
        w[:3, :3] = -skew(earth.earth_rate)
    u_mat = np.zeros((5, 5))
    u_mat[:3, :3] = skew(u.gyro)
    u_mat[:3, 3] = u.accel

    def f_eval(t) -> np.ndarray:
        m = _embedding(t)
        out = np.zeros((5, 5))
        out[:3, 4] = m[:3, 3]
        return out

    return w, u_mat, f_eval


def group_affine_residual(g_eval: Callable, t1, t2) -> float:
    """Frobenius norm of g(T1 T2) - g(T1) T2 - T1 g(T2) + T1 g(Id) T2."""
    m1, m2 = _embedding(t1), _embedding(t2)
    ident = np.eye(5)
    res = (np.asarray(g_eval(m1 @ m2))
           - np.asarray(g_eval(m1)) @ m2
           - m1 @ np.asarray(g_eval(m2))
           + m1 @ np.asarray(g_eval(ident)) @ m2)
    return float(np.linalg.norm(res))


def rk4_integrate(rhs: Callable, t0: ExtendedPose, samples: Sequence[ImuSample],
                  earth: EarthModel, substeps: int = 1, full_output: bool = False):
    """Classical RK4 on the 5x5 embedding with zero-order-hold inputs.

    Each sample is split into ``substeps`` equal substeps.  The raw 9-dof
    embedding is integrated without manifold retraction so that the
    integrator's own drift stays observable; the final rotation is projected
    to the nearest rotation exactly once and the projection distance is
    reported via ``full_output``.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    m = t0.as_matrix()
    for u in samples:
        h = u.dt / substeps
        for _ in range(substeps):
            k1 = rhs(m, u, earth)
            k2 = rhs(m + 0.5 * h * k1, u, earth)
            k3 = rhs(m + 0.5 * h * k2, u, earth)
            k4 = rhs(m + h * k3, u, earth)
            m = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(m)):
            raise NonFinite("integrator state became non-finite")
    raw_rot = m[:3, :3]
    projected = project_rotation(raw_rot)
    pose = ExtendedPose(projected, m[:3, 3], m[:3, 4])
    if full_output:
        info = {
            "projection_distance": float(np.linalg.norm(projected - raw_rot)),
            "orthogonality_defect": float(np.linalg.norm(raw_rot.T @ raw_rot - np.eye(3))),
        }
        return pose, info
    return pose
