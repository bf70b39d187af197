"""Pure-numpy kernels for the hot per-step propagation loops.

Fallback twin of the compiled ``_native`` extension: identical signatures,
identical closed forms and Taylor thresholds, vectorized across the batch
dimension instead of compiled per-sample loops.
"""

from __future__ import annotations

import numpy as np

from .se23 import SERIES_ANGLE, SMALL_ANGLE

BACKEND_NAME = "python"


def _batch_coeffs(theta: np.ndarray):
    """Trig coefficient ratios a,b,c,d for exp/N/M, elementwise with Taylor branch."""
    small = theta < SMALL_ANGLE
    series = theta < SERIES_ANGLE
    t2 = theta * theta
    t4 = t2 * t2
    safe = np.where(small, 1.0, theta)
    sin_t = np.sin(safe)
    half_sin2 = np.sin(0.5 * safe) ** 2  # 2 sin^2(t/2) = 1 - cos t, no cancellation
    a = np.where(small, 1.0 - t2 / 6.0, sin_t / safe)
    b = np.where(small, 0.5 - t2 / 24.0, 2.0 * half_sin2 / (safe * safe))
    c = np.where(series,
                 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t4 * t2 / 362880.0,
                 (safe - sin_t) / (safe ** 3))
    d = np.where(series,
                 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t4 * t2 / 3628800.0,
                 (0.5 * safe * safe - 2.0 * half_sin2) / (safe ** 4))
    return a, b, c, d


def _batch_skew(v: np.ndarray) -> np.ndarray:
    m = v.shape[0]
    out = np.zeros((m, 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def _batch_step_mats(phi: np.ndarray, exact: bool):
    """Per-step (E, N, M) for rotation vectors phi of shape (m, 3)."""
    m = phi.shape[0]
    theta = np.linalg.norm(phi, axis=1)
    a, b, c, d = _batch_coeffs(theta)
    wx = _batch_skew(phi)
    wx2 = wx @ wx
    eye = np.broadcast_to(np.eye(3), (m, 3, 3))
    rot = eye + a[:, None, None] * wx + b[:, None, None] * wx2
    if not exact:
        return rot, None, None
    nmat = eye + b[:, None, None] * wx + c[:, None, None] * wx2
    mmat = 0.5 * eye + c[:, None, None] * wx + d[:, None, None] * wx2
    return rot, nmat, mmat


def propagate_batch(rot0, vel0, pos0, gyro, accel, dt, gravity, exact):
    """Propagate m state triplets through n zero-order-hold IMU steps.

    One discrete step (exact mode) is

        X+ = X + V dt + g dt^2 / 2 + R M(w dt) a dt^2
        V+ = V + g dt + R N(w dt) a dt
        R+ = R exp((w dt)x)

    with N -> I and M -> I/2 in first-order mode.  ``gyro``/``accel`` have
    shape (m, n, 3); initial states broadcast if given as single values.
    Returns (rot (m,3,3), vel (m,3), pos (m,3)).
    """
    gyro = np.asarray(gyro, dtype=float)
    accel = np.asarray(accel, dtype=float)
    m, n, _ = gyro.shape
    rot = np.broadcast_to(np.asarray(rot0, dtype=float), (m, 3, 3)).copy()
    vel = np.broadcast_to(np.asarray(vel0, dtype=float), (m, 3)).copy()
    pos = np.broadcast_to(np.asarray(pos0, dtype=float), (m, 3)).copy()
    gravity = np.asarray(gravity, dtype=float).reshape(3)
    g_dt = gravity * dt
    g_dt2 = 0.5 * gravity * dt * dt
    for k in range(n):
        rot_step, nmat, mmat = _batch_step_mats(gyro[:, k, :] * dt, exact)
        acc = accel[:, k, :, None]
        if exact:
            ra_n = (rot @ (nmat @ acc))[:, :, 0]
            ra_m = (rot @ (mmat @ acc))[:, :, 0]
        else:
            ra_n = (rot @ acc)[:, :, 0]
            ra_m = 0.5 * ra_n
        pos += vel * dt + g_dt2 + ra_m * (dt * dt)
        vel += g_dt + ra_n * dt
        rot = rot @ rot_step
    return rot, vel, pos


def propagate_state(rot0, vel0, pos0, gyro, accel, dt, gravity, exact):
    """Single-stream variant of :func:`propagate_batch`."""
    rot, vel, pos = propagate_batch(
        rot0, vel0, pos0, np.asarray(gyro, dtype=float)[None],
        np.asarray(accel, dtype=float)[None], dt, gravity, exact)
    return rot[0], vel[0], pos[0]


def integrate_delta(gyro, accel, dt, exact):
    """Preintegrated (R, V, X) delta of one sample stream (gravity-free)."""
    return propagate_state(np.eye(3), np.zeros(3), np.zeros(3),
                           gyro, accel, dt, np.zeros(3), exact)
