"""Flat-Earth IMU preintegration.

The preintegrated factor (R, V, X delta) obeys the same group recursion as
the full state but with gravity removed: delta_{k+1} = Phi_dt(delta_k) *
upsilon_step_k.  Composing with the gravity flow Gamma_t and the position
drift map Phi_t reconstructs the state from any initial value,

    T_t = Gamma_t * Phi_t(T_0) * Upsilon_t,

exactly for the zero-order-hold model when the factor is integrated in
``exact_step`` mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .bias_types import BiasState
from .kinematics import EarthModel, ImuSample
from .se23 import (
    ExtendedPose,
    accel_double_integral,
    compose,
    left_jacobian,
    so3_exp,
)

MODES = ("first_order", "exact_step")


class NonPositiveDt(ValueError):
    """Sample durations must be strictly positive."""


@dataclass
class NoiseDensities:
    """Per-sample standard deviations of the gyro/accel white noise."""

    gyro_std: np.ndarray
    accel_std: np.ndarray

    def __post_init__(self):
        self.gyro_std = np.broadcast_to(np.asarray(self.gyro_std, float), (3,)).copy()
        self.accel_std = np.broadcast_to(np.asarray(self.accel_std, float), (3,)).copy()
        if np.any(self.gyro_std < 0.0) or np.any(self.accel_std < 0.0):
            raise ValueError("noise densities must be nonnegative")

    @classmethod
    def zero(cls) -> "NoiseDensities":
        return cls(np.zeros(3), np.zeros(3))


@dataclass
class PreintDelta:
    """Preintegrated factor: delta triplet, covariance and bias Jacobian.

    ``cov`` is the 9x9 covariance of the factor's right-multiplied
    exponential error; ``bias_jac`` maps a raw bias update (rad/s, m/s^2) to
    the factor discrepancy in exponential coordinates.  ``jac_flavor``
    records which accumulation filled ``bias_jac`` (in-memory only, not part
    of the JSON schema).
    """

    rot_d: np.ndarray
    vel_d: np.ndarray
    pos_d: np.ndarray
    duration: float
    ref_bias: BiasState
    cov: np.ndarray
    bias_jac: np.ndarray
    mode: str
    jac_flavor: str = "refined"

    def __post_init__(self):
        self.rot_d = np.asarray(self.rot_d, dtype=float).reshape(3, 3)
        self.vel_d = np.asarray(self.vel_d, dtype=float).reshape(3)
        self.pos_d = np.asarray(self.pos_d, dtype=float).reshape(3)
        self.duration = float(self.duration)
        self.cov = np.asarray(self.cov, dtype=float).reshape(9, 9)
        self.bias_jac = np.asarray(self.bias_jac, dtype=float).reshape(9, 6)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @classmethod
    def fresh(cls, mode: str = "exact_step", ref_bias: BiasState | None = None) -> "PreintDelta":
        return cls(np.eye(3), np.zeros(3), np.zeros(3), 0.0,
                   ref_bias if ref_bias is not None else BiasState.zero(),
                   np.zeros((9, 9)), np.zeros((9, 6)), mode)

    @classmethod
    def from_upsilon(cls, upsilon: ExtendedPose, duration: float,
                     mode: str = "exact_step", ref_bias: BiasState | None = None,
                     cov: np.ndarray | None = None,
                     bias_jac: np.ndarray | None = None) -> "PreintDelta":
        return cls(upsilon.rot, upsilon.vel, upsilon.pos, duration,
                   ref_bias if ref_bias is not None else BiasState.zero(),
                   cov if cov is not None else np.zeros((9, 9)),
                   bias_jac if bias_jac is not None else np.zeros((9, 6)), mode)


def phi_map(t: ExtendedPose, dt: float) -> ExtendedPose:
    """Position drift automorphism (R, V, X) -> (R, V, X + t V)."""
    return ExtendedPose(t.rot, t.vel, t.pos + dt * t.vel)


def gamma_flat(t: float, earth: EarthModel) -> ExtendedPose:
    """Gravity flow (I, t g, g t^2 / 2); flat Earth only."""
    if not earth.is_flat:
        raise ValueError("gamma_flat requires earth_rate == 0")
    return ExtendedPose(np.eye(3), t * earth.gravity, 0.5 * t * t * earth.gravity)


def f_matrix(dt: float) -> np.ndarray:
    """9x9 tangent-space matrix of phi_map: identity plus dt in the (rho, nu) block."""
    f = np.eye(9)
    f[6:9, 3:6] = dt * np.eye(3)
    return f


def upsilon_step(u: ImuSample, mode: str) -> ExtendedPose:
    """Per-step factor increment for one zero-order-hold sample.

    exact_step: (exp((w dt)x), N(w dt) a dt, M(w dt) a dt^2) — the exact
    constant-input solution of the delta ODE.  first_order: the same with
    N -> I and M -> I/2.
    """
    if u.dt <= 0.0:
        raise NonPositiveDt(f"dt must be positive, got {u.dt}")
    phi = u.gyro * u.dt
    rot = so3_exp(phi)
    if mode == "exact_step":
        vel = left_jacobian(phi) @ u.accel * u.dt
        pos = accel_double_integral(phi) @ u.accel * (u.dt * u.dt)
    elif mode == "first_order":
        vel = u.accel * u.dt
        pos = 0.5 * u.accel * (u.dt * u.dt)
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return ExtendedPose(rot, vel, pos)


def absorb_sample(delta: PreintDelta, u: ImuSample, mode: str | None = None) -> PreintDelta:
    """Fold one sample into the factor; returns a new value.

    Only the delta triplet and the duration change here; covariance and bias
    Jacobian accumulation live in the uncertainty and bias modules.  The
    caller is responsible for having applied noise/bias to ``u``.
    """
    mode = delta.mode if mode is None else mode
    step = upsilon_step(u, mode)
    # delta_{k+1} = Phi_dt(delta_k) * step
    rot = delta.rot_d @ step.rot
    vel = delta.vel_d + delta.rot_d @ step.vel
    pos = delta.pos_d + delta.vel_d * u.dt + delta.rot_d @ step.pos
    return replace(delta, rot_d=rot, vel_d=vel, pos_d=pos,
                   duration=delta.duration + u.dt)


def upsilon_of(delta: PreintDelta) -> ExtendedPose:
    """Pack the factor triplet as a group element."""
    return ExtendedPose(delta.rot_d, delta.vel_d, delta.pos_d)


def apply_flat(delta: PreintDelta, t0: ExtendedPose, earth: EarthModel) -> ExtendedPose:
    """Reconstruct the state: Gamma_t * Phi_t(T0) * Upsilon_t."""
    t = delta.duration
    return compose(gamma_flat(t, earth), compose(phi_map(t0, t), upsilon_of(delta)))


def corrupt_sample(u_true: ImuSample, noise: NoiseDensities, bias: BiasState,
                   rng: np.random.Generator) -> ImuSample:
    """Measurement model: (w - b_g - eta_g, a - b_a - eta_a, dt)."""
    eta_g = noise.gyro_std * rng.standard_normal(3)
    eta_a = noise.accel_std * rng.standard_normal(3)
    return ImuSample(u_true.gyro - bias.gyro - eta_g,
                     u_true.accel - bias.accel - eta_a, u_true.dt)


def integrate_stream(gyro: np.ndarray, accel: np.ndarray, dt: float,
                     mode: str = "exact_step",
                     ref_bias: BiasState | None = None) -> PreintDelta:
    """Preintegrate an (n, 3)/(n, 3) stream through the kernel backend.

    Equivalent to folding each sample with :func:`absorb_sample`; covariance
    and bias Jacobian stay zero (see ``uncertainty`` / ``bias`` modules or
    :func:`preintegrate_full`).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if dt <= 0.0:
        raise NonPositiveDt(f"dt must be positive, got {dt}")
    gyro = np.asarray(gyro, dtype=float)
    accel = np.asarray(accel, dtype=float)
    rot, vel, pos = backend.integrate_delta(gyro, accel, dt, mode == "exact_step")
    delta = PreintDelta.fresh(mode, ref_bias)
    return replace(delta, rot_d=rot, vel_d=vel, pos_d=pos,
                   duration=dt * gyro.shape[0])


def propagate_state_stream(t0: ExtendedPose, gyro: np.ndarray, accel: np.ndarray,
                           dt: float, earth: EarthModel,
                           mode: str = "exact_step") -> ExtendedPose:
    """Step the full state with the per-step discrete model (kernel backend)."""
    rot, vel, pos = backend.propagate_state(t0.rot, t0.vel, t0.pos,
                                            np.asarray(gyro, float),
                                            np.asarray(accel, float),
                                            dt, earth.gravity, mode == "exact_step")
    return ExtendedPose(rot, vel, pos)


def delta_to_dict(delta: PreintDelta) -> dict:
    """JSON-ready form: fixed key set, row-major matrices."""
    return {
        "rot_d": delta.rot_d.reshape(-1).tolist(),
        "vel_d": delta.vel_d.tolist(),
        "pos_d": delta.pos_d.tolist(),
        "duration": delta.duration,
        "ref_bias": {"gyro": delta.ref_bias.gyro.tolist(),
                     "accel": delta.ref_bias.accel.tolist()},
        "cov": delta.cov.reshape(-1).tolist(),
        "bias_jac": delta.bias_jac.reshape(-1).tolist(),
        "mode": delta.mode,
    }


def delta_from_dict(data: dict) -> PreintDelta:
    ref = data["ref_bias"]
    return PreintDelta(
        np.asarray(data["rot_d"], float).reshape(3, 3),
        np.asarray(data["vel_d"], float),
        np.asarray(data["pos_d"], float),
        float(data["duration"]),
        BiasState(np.asarray(ref["gyro"], float), np.asarray(ref["accel"], float)),
        np.asarray(data["cov"], float).reshape(9, 9),
        np.asarray(data["bias_jac"], float).reshape(9, 6),
        str(data["mode"]),
    )
