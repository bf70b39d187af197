"""Bias containers shared between the preintegration and bias modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BiasState:
    """Gyro (rad/s) and accelerometer (m/s^2) bias vectors."""

    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        self.gyro = np.asarray(self.gyro, dtype=float).reshape(3)
        self.accel = np.asarray(self.accel, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.gyro)) and np.all(np.isfinite(self.accel))):
            raise ValueError("bias entries must be finite")

    @classmethod
    def zero(cls) -> "BiasState":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "BiasState":
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.gyro, self.accel])


@dataclass
class BiasUpdate:
    """Bias increment db = (db_gyro, db_accel) applied to a reference bias."""

    delta_bias: np.ndarray

    def __post_init__(self):
        self.delta_bias = np.asarray(self.delta_bias, dtype=float).reshape(6)

    @classmethod
    def from_parts(cls, gyro, accel) -> "BiasUpdate":
        return cls(np.concatenate([np.asarray(gyro, float).reshape(3),
                                   np.asarray(accel, float).reshape(3)]))

    def lifted(self, dt: float) -> np.ndarray:
        """Per-step tangent injection (db_g dt, db_a dt, 0); position block zero."""
        return np.concatenate([self.delta_bias[:3] * dt, self.delta_bias[3:] * dt,
                               np.zeros(3)])
