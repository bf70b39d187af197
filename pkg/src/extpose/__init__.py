"""Extended-pose kinematics on SE2(3).

Exact IMU preintegration on flat and rotating Earth, log-linear error
propagation, concentrated-Gaussian covariance propagation and first-order
bias correction, each validated against independent brute-force oracles.
"""

from .se23 import (
    AngleNearPi,
    ExtendedPose,
    adjoint,
    compose,
    exp_se23,
    hat,
    inverse,
    log_se23,
    tangent,
    vee,
)

__version__ = "0.1.0"

__all__ = [
    "AngleNearPi",
    "ExtendedPose",
    "adjoint",
    "compose",
    "exp_se23",
    "hat",
    "inverse",
    "log_se23",
    "tangent",
    "vee",
    "__version__",
]
