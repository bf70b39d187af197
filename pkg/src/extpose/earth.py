"""Rotating-Earth preintegration.

The auxiliary velocity V' = V + Ox X turns the Coriolis/centrifugal model
into a group-affine system, so the same state-free delta factor as on flat
Earth composes with a state-independent Gamma triplet into the exact
reconstruction

    R_t = G_R R_0 Rd,
    X_t = G_x + G_R R_0 Xd + t G_R V'_0 + G_R X_0,
    V_t = G_v + G_R R_0 Vd + G_R V'_0 - Ox X_t,

where (G_R, G_v, G_x) solve ODEs driven only by g and Omega.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import EarthModel
from .preint import PreintDelta, upsilon_of
from .se23 import ExtendedPose, skew, so3_exp


class DurationMismatch(ValueError):
    """Factor and Gamma triplet cover different time spans."""


@dataclass
class GammaEarth:
    """State-independent gravity/Earth-rate flow over [0, t]."""

    gamma_R: np.ndarray
    gamma_v: np.ndarray
    gamma_x: np.ndarray
    t: float

    def __post_init__(self):
        self.gamma_R = np.asarray(self.gamma_R, dtype=float).reshape(3, 3)
        self.gamma_v = np.asarray(self.gamma_v, dtype=float).reshape(3)
        self.gamma_x = np.asarray(self.gamma_x, dtype=float).reshape(3)
        self.t = float(self.t)

    @classmethod
    def identity(cls) -> "GammaEarth":
        return cls(np.eye(3), np.zeros(3), np.zeros(3), 0.0)


def to_primed(t: ExtendedPose, earth: EarthModel) -> ExtendedPose:
    """Auxiliary-velocity change of variables (R, V, X) -> (R, V + Ox X, X)."""
    return ExtendedPose(t.rot, t.vel + np.cross(earth.earth_rate, t.pos), t.pos)


def from_primed(tp: ExtendedPose, earth: EarthModel) -> ExtendedPose:
    """Inverse change of variables (R, V', X) -> (R, V' - Ox X, X)."""
    return ExtendedPose(tp.rot, tp.vel - np.cross(earth.earth_rate, tp.pos), tp.pos)


def integrate_gamma(earth: EarthModel, t: float, dt: float) -> GammaEarth:
    """Integrate the Gamma triplet to time t with step dt.

    gamma_R uses its closed form exp(-Ox dt) per step; gamma_v and gamma_x
    use classical RK4 on the linear ODEs

        d/dt G_v = g - Ox G_v,     d/dt G_x = G_v - Ox G_x.

    The trailing partial step (when t is not a multiple of dt) is taken with
    the remaining duration.  No pose enters anywhere.
    """
    if t < 0.0 or dt <= 0.0:
        raise ValueError("need t >= 0 and dt > 0")
    if earth.is_flat:
        # the ODEs decouple and have the flat closed form
        return GammaEarth(np.eye(3), t * earth.gravity,
                          0.5 * t * t * earth.gravity, t)
    ox = skew(earth.earth_rate)
    g = earth.gravity

    def rhs(y):
        gv, gx = y[:3], y[3:]
        return np.concatenate([g - ox @ gv, gv - ox @ gx])

    gamma_r = np.eye(3)
    y = np.zeros(6)
    remaining = t
    while remaining > 1e-15:
        h = min(dt, remaining)
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        gamma_r = so3_exp(-earth.earth_rate * h) @ gamma_r
        remaining -= h
    return GammaEarth(gamma_r, y[:3], y[3:], t)


def apply_earth(delta: PreintDelta, gammas: GammaEarth, t0: ExtendedPose,
                earth: EarthModel) -> ExtendedPose:
    """Exact Coriolis/centrifugal reconstruction from a flat-style factor.

    The factor is integrated from body-frame samples exactly as on flat
    Earth; all Earth-rate effects live in ``gammas`` and in this composition.
    X is assembled before V because V references X.
    """
    if abs(delta.duration - gammas.t) > 1e-9:
        raise DurationMismatch(
            f"factor covers {delta.duration} s but gammas cover {gammas.t} s")
    ups = upsilon_of(delta)
    v0p = to_primed(t0, earth).vel
    g_r = gammas.gamma_R
    r_t = g_r @ t0.rot @ ups.rot
    x_t = (gammas.gamma_x + g_r @ (t0.rot @ ups.pos)
           + gammas.t * (g_r @ v0p) + g_r @ t0.pos)
    v_t = (gammas.gamma_v + g_r @ (t0.rot @ ups.vel) + g_r @ v0p
           - np.cross(earth.earth_rate, x_t))
    return ExtendedPose(r_t, v_t, x_t)


def gamma_to_dict(gammas: GammaEarth) -> dict:
    return {
        "gamma_R": gammas.gamma_R.reshape(-1).tolist(),
        "gamma_v": gammas.gamma_v.tolist(),
        "gamma_x": gammas.gamma_x.tolist(),
        "t": gammas.t,
    }


def gamma_from_dict(data: dict) -> GammaEarth:
    return GammaEarth(np.asarray(data["gamma_R"], float).reshape(3, 3),
                      np.asarray(data["gamma_v"], float),
                      np.asarray(data["gamma_x"], float),
                      float(data["t"]))
