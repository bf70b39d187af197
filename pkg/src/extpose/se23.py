"""Matrix Lie group SE2(3) of extended poses (orientation, velocity, position).

Group elements are stored as a 3x3 rotation plus two 3-vectors; the canonical
5x5 embedding is

    [ R  V  X ]
    [ 0  1  0 ]
    [ 0  0  1 ]

and tangent vectors are ordered xi = (omega, nu, rho) in R^9.  All operations
are pure functions; nothing mutates its inputs.  Rotations are never silently
re-orthonormalized: call :func:`project_rotation` explicitly when needed so
that integrator drift stays visible to the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this rotation angle the trigonometric coefficient ratios switch to
# Taylor expansions to avoid catastrophic cancellation.
SMALL_ANGLE = 1e-6
# The ratios (t - sin t)/t^3 and (t^2/2 + cos t - 1)/t^4 lose ~10 digits to
# cancellation well above SMALL_ANGLE; their four-term series is exact to
# double precision below this wider threshold.
SERIES_ANGLE = 1e-2


def _ratio_c(theta: float) -> float:
    """(t - sin t) / t^3."""
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0
    return (theta - np.sin(theta)) / (theta ** 3)


def _ratio_d(theta: float) -> float:
    """(t^2/2 + cos t - 1) / t^4."""
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0 - t2 * t2 * t2 / 3628800.0
    half_sin = np.sin(0.5 * theta)
    return (0.5 * theta * theta - 2.0 * half_sin * half_sin) / (theta ** 4)


class AngleNearPi(ValueError):
    """Rotation angle too close to pi for an unambiguous logarithm."""


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 cross-product matrix: skew(v) @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _rot_coeffs(theta: float) -> tuple[float, float]:
    """(sin t / t, (1 - cos t) / t^2) with a series branch near zero.

    1 - cos t is evaluated as 2 sin^2(t/2) so the closed form stays
    cancellation-free right down to the series switch.
    """
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0
    half_sin = np.sin(0.5 * theta)
    return np.sin(theta) / theta, 2.0 * half_sin * half_sin / (theta * theta)


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues formula: exp of the cross-product matrix of ``omega``."""
    theta = float(np.linalg.norm(omega))
    a, b = _rot_coeffs(theta)
    wx = skew(omega)
    return np.eye(3) + a * wx + b * (wx @ wx)


def so3_log(rot: np.ndarray) -> np.ndarray:
    """Rotation vector of ``rot``; raises AngleNearPi within 1e-6 of pi."""
    # atan2 of the skew part magnitude against (trace-1)/2 is stable away
    # from pi, which the precondition guarantees.
    s = 0.5 * np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
    sn = float(np.linalg.norm(s))
    cs = 0.5 * (float(np.trace(rot)) - 1.0)
    theta = float(np.arctan2(sn, cs))
    if theta >= np.pi - 1e-6:
        raise AngleNearPi(f"rotation angle {theta} within 1e-6 of pi")
    if theta < SMALL_ANGLE:
        return s * (1.0 + theta * theta / 6.0)
    return s * (theta / np.sin(theta))


def left_jacobian(omega: np.ndarray) -> np.ndarray:
    """SO(3) left Jacobian N(w) = I + (1-cos t)/t^2 wx + (t-sin t)/t^3 wx^2.

    This is the matrix mapping the translational tangent components to the
    translational columns of the SE2(3) exponential; equivalently the
    integral of exp(s wx) over s in [0, 1].
    """
    theta = float(np.linalg.norm(omega))
    if theta < SMALL_ANGLE:
        b = 0.5 - theta * theta / 24.0
    else:
        half_sin = np.sin(0.5 * theta)
        b = 2.0 * half_sin * half_sin / (theta * theta)
    wx = skew(omega)
    return np.eye(3) + b * wx + _ratio_c(theta) * (wx @ wx)


def right_jacobian(omega: np.ndarray) -> np.ndarray:
    """SO(3) right Jacobian, i.e. the left Jacobian at -omega."""
    return left_jacobian(-np.asarray(omega, dtype=float))


def accel_double_integral(omega: np.ndarray) -> np.ndarray:
    """M(w) = sum_j wx^j / (j+2)! = 1/2 I + (t-sin t)/t^3 wx + (t^2/2+cos t-1)/t^4 wx^2.

    Double time-integral coefficient of a constant body-frame vector under a
    constant rotation rate: the position column of one exact integration step
    is dt^2 * M(w*dt) @ a.  Equals the (1:3, 5) block of the series
    exponential of the time-augmented generator.
    """
    theta = float(np.linalg.norm(omega))
    wx = skew(omega)
    return 0.5 * np.eye(3) + _ratio_c(theta) * wx + _ratio_d(theta) * (wx @ wx)


@dataclass
class ExtendedPose:
    """Group element (R, V, X): orientation, velocity (m/s), position (m)."""

    rot: np.ndarray
    vel: np.ndarray
    pos: np.ndarray

    def __post_init__(self):
        self.rot = np.asarray(self.rot, dtype=float).reshape(3, 3)
        self.vel = np.asarray(self.vel, dtype=float).reshape(3)
        self.pos = np.asarray(self.pos, dtype=float).reshape(3)

    @classmethod
    def identity(cls) -> "ExtendedPose":
        return cls(np.eye(3), np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "ExtendedPose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3].copy(), m[:3, 3].copy(), m[:3, 4].copy())

    def as_matrix(self) -> np.ndarray:
        """Canonical 5x5 embedding (row-major; R in 1:3, V col 4, X col 5)."""
        m = np.eye(5)
        m[:3, :3] = self.rot
        m[:3, 3] = self.vel
        m[:3, 4] = self.pos
        return m

    def copy(self) -> "ExtendedPose":
        return ExtendedPose(self.rot.copy(), self.vel.copy(), self.pos.copy())

    def rotation_defect(self) -> float:
        """Frobenius distance of rot' rot from the identity."""
        return float(np.linalg.norm(self.rot.T @ self.rot - np.eye(3)))

    def orthonormalized(self) -> "ExtendedPose":
        return ExtendedPose(project_rotation(self.rot), self.vel, self.pos)


def project_rotation(rot: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (SVD projection)."""
    u, _, vt = np.linalg.svd(rot)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def tangent(omega, nu, rho) -> np.ndarray:
    """Pack (omega, nu, rho) into a length-9 tangent vector."""
    return np.concatenate([np.asarray(omega, float).reshape(3),
                           np.asarray(nu, float).reshape(3),
                           np.asarray(rho, float).reshape(3)])


def hat(xi: np.ndarray) -> np.ndarray:
    """Lie algebra embedding: skew(omega) top-left, nu and rho in cols 4, 5."""
    xi = np.asarray(xi, dtype=float).reshape(9)
    m = np.zeros((5, 5))
    m[:3, :3] = skew(xi[:3])
    m[:3, 3] = xi[3:6]
    m[:3, 4] = xi[6:9]
    return m


def vee(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.concatenate([unskew(m[:3, :3]), m[:3, 3], m[:3, 4]])


def exp_se23(xi: np.ndarray) -> ExtendedPose:
    """Closed-form exponential: (exp(wx), N(w) nu, N(w) rho)."""
    xi = np.asarray(xi, dtype=float).reshape(9)
    n = left_jacobian(xi[:3])
    return ExtendedPose(so3_exp(xi[:3]), n @ xi[3:6], n @ xi[6:9])


def log_se23(pose: ExtendedPose) -> np.ndarray:
    """Inverse of exp_se23.

    Computes the SO(3) log first, then recovers the translational components
    by solving N(w) y = (V, X) rather than forming an explicit inverse.
    Raises AngleNearPi when the rotation angle is within 1e-6 of pi.
    """
    omega = so3_log(pose.rot)
    n = left_jacobian(omega)
    y = np.linalg.solve(n, np.column_stack([pose.vel, pose.pos]))
    return np.concatenate([omega, y[:, 0], y[:, 1]])


def compose(t1: ExtendedPose, t2: ExtendedPose) -> ExtendedPose:
    """Group product (R1 R2, R1 V2 + V1, R1 X2 + X1)."""
    return ExtendedPose(t1.rot @ t2.rot, t1.rot @ t2.vel + t1.vel, t1.rot @ t2.pos + t1.pos)


def inverse(t: ExtendedPose) -> ExtendedPose:
    rt = t.rot.T
    return ExtendedPose(rt, -(rt @ t.vel), -(rt @ t.pos))


def adjoint(t: ExtendedPose) -> np.ndarray:
    """9x9 adjoint: [[R,0,0],[skew(V)R,R,0],[skew(X)R,0,R]].

    Satisfies T exp(xi) T^-1 = exp(adjoint(T) @ xi).
    """
    ad = np.zeros((9, 9))
    ad[:3, :3] = t.rot
    ad[3:6, 3:6] = t.rot
    ad[6:9, 6:9] = t.rot
    ad[3:6, :3] = skew(t.vel) @ t.rot
    ad[6:9, :3] = skew(t.pos) @ t.rot
    return ad


def expm_series(a: np.ndarray, terms: int = 30) -> np.ndarray:
    """Truncated-series matrix exponential sum_{k<=terms} A^k / k!.

    Independent test oracle for the closed-form exponentials; not meant for
    large-norm arguments.
    """
    a = np.asarray(a, dtype=float)
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    return out
