# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot per-step propagation loops.

Same closed forms and Taylor thresholds as the numpy fallback in
``_purepy``; plain C loops instead of batched array operations.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt

cnp.import_array()

BACKEND_NAME = "cython"

cdef double SMALL_ANGLE = 1e-6
cdef double SERIES_ANGLE = 1e-2


cdef inline void _step_mats(const double* phi, bint exact,
                            double* e, double* n, double* m) noexcept nogil:
    """E = exp(phi_x), N = left Jacobian, M = double-integral coefficient."""
    cdef double t2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    cdef double theta = sqrt(t2)
    cdef double t4 = t2 * t2
    cdef double a, b, c, d, st, hs2
    if theta < SMALL_ANGLE:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        st = sin(theta)
        hs2 = sin(0.5 * theta)
        hs2 = hs2 * hs2  # 2 sin^2(t/2) = 1 - cos t, no cancellation
        a = st / theta
        b = 2.0 * hs2 / t2
    if theta < SERIES_ANGLE:
        c = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t4 * t2 / 362880.0
        d = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t4 * t2 / 3628800.0
    else:
        c = (theta - st) / (t2 * theta)
        d = (0.5 * t2 - 2.0 * hs2) / t4
    cdef double wx[9]
    cdef double wx2[9]
    wx[0] = 0.0;      wx[1] = -phi[2]; wx[2] = phi[1]
    wx[3] = phi[2];   wx[4] = 0.0;     wx[5] = -phi[0]
    wx[6] = -phi[1];  wx[7] = phi[0];  wx[8] = 0.0
    cdef int i, j, k
    for i in range(3):
        for j in range(3):
            wx2[3 * i + j] = 0.0
            for k in range(3):
                wx2[3 * i + j] += wx[3 * i + k] * wx[3 * k + j]
    for i in range(9):
        e[i] = a * wx[i] + b * wx2[i]
    e[0] += 1.0; e[4] += 1.0; e[8] += 1.0
    if exact:
        for i in range(9):
            n[i] = b * wx[i] + c * wx2[i]
            m[i] = c * wx[i] + d * wx2[i]
        n[0] += 1.0; n[4] += 1.0; n[8] += 1.0
        m[0] += 0.5; m[4] += 0.5; m[8] += 0.5


cdef inline void _mat_vec(const double* a, const double* v, double* out) noexcept nogil:
    out[0] = a[0] * v[0] + a[1] * v[1] + a[2] * v[2]
    out[1] = a[3] * v[0] + a[4] * v[1] + a[5] * v[2]
    out[2] = a[6] * v[0] + a[7] * v[1] + a[8] * v[2]


cdef inline void _mat_mul(const double* a, const double* b, double* out) noexcept nogil:
    cdef int i, j, k
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = 0.0
            for k in range(3):
                out[3 * i + j] += a[3 * i + k] * b[3 * k + j]


cdef void _propagate_one(double* rot, double* vel, double* pos,
                         const double* gyro, const double* accel, Py_ssize_t n,
                         double dt, const double* gravity, bint exact) noexcept nogil:
    cdef double phi[3]
    cdef double e[9]
    cdef double nm[9]
    cdef double mm[9]
    cdef double tmp[3]
    cdef double ra_n[3]
    cdef double ra_m[3]
    cdef double new_rot[9]
    cdef double dt2 = dt * dt
    cdef Py_ssize_t k
    cdef int i
    for k in range(n):
        phi[0] = gyro[3 * k] * dt
        phi[1] = gyro[3 * k + 1] * dt
        phi[2] = gyro[3 * k + 2] * dt
        _step_mats(phi, exact, e, nm, mm)
        if exact:
            _mat_vec(nm, &accel[3 * k], tmp)
            _mat_vec(rot, tmp, ra_n)
            _mat_vec(mm, &accel[3 * k], tmp)
            _mat_vec(rot, tmp, ra_m)
        else:
            _mat_vec(rot, &accel[3 * k], ra_n)
            ra_m[0] = 0.5 * ra_n[0]
            ra_m[1] = 0.5 * ra_n[1]
            ra_m[2] = 0.5 * ra_n[2]
        for i in range(3):
            pos[i] += vel[i] * dt + 0.5 * gravity[i] * dt2 + ra_m[i] * dt2
            vel[i] += gravity[i] * dt + ra_n[i] * dt
        _mat_mul(rot, e, new_rot)
        for i in range(9):
            rot[i] = new_rot[i]


def propagate_batch(rot0, vel0, pos0, gyro, accel, double dt, gravity, bint exact):
    """Propagate m state triplets through n zero-order-hold IMU steps.

    Same contract as ``_purepy.propagate_batch``.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=3] g = np.ascontiguousarray(gyro, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] a = np.ascontiguousarray(accel, dtype=np.float64)
    cdef Py_ssize_t m = g.shape[0]
    cdef Py_ssize_t n = g.shape[1]
    rot = np.ascontiguousarray(np.broadcast_to(np.asarray(rot0, dtype=np.float64), (m, 3, 3))).copy()
    vel = np.ascontiguousarray(np.broadcast_to(np.asarray(vel0, dtype=np.float64), (m, 3))).copy()
    pos = np.ascontiguousarray(np.broadcast_to(np.asarray(pos0, dtype=np.float64), (m, 3))).copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=3] r_ = rot
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v_ = vel
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_ = pos
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grav = np.ascontiguousarray(gravity, dtype=np.float64).reshape(3)
    cdef Py_ssize_t s
    with nogil:
        for s in range(m):
            _propagate_one(&r_[s, 0, 0], &v_[s, 0], &p_[s, 0],
                           &g[s, 0, 0], &a[s, 0, 0], n, dt, &grav[0], exact)
    return rot, vel, pos


def propagate_state(rot0, vel0, pos0, gyro, accel, double dt, gravity, bint exact):
    """Single-stream variant of :func:`propagate_batch`."""
    rot, vel, pos = propagate_batch(
        rot0, vel0, pos0, np.asarray(gyro, dtype=np.float64)[None],
        np.asarray(accel, dtype=np.float64)[None], dt, gravity, exact)
    return rot[0], vel[0], pos[0]


def integrate_delta(gyro, accel, double dt, bint exact):
    """Preintegrated (R, V, X) delta of one sample stream (gravity-free)."""
    return propagate_state(np.eye(3), np.zeros(3), np.zeros(3),
                           gyro, accel, dt, np.zeros(3), exact)
