"""Factor assembly: delta triplet plus covariance plus bias Jacobian."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .bias import accumulate_bias_jacobian
from .bias_types import BiasState
from .preint import NoiseDensities, PreintDelta, integrate_stream
from .uncertainty import riccati_covariance


def preintegrate_full(gyro: np.ndarray, accel: np.ndarray, dt: float,
                      mode: str = "exact_step",
                      noise: NoiseDensities | None = None,
                      ref_bias: BiasState | None = None,
                      jac: str = "refined") -> PreintDelta:
    """Preintegrate a measured stream into a complete factor.

    Measurements follow the convention measured = true - bias, so the
    reference bias is added back before integration.  ``noise`` drives the
    factor covariance; ``jac`` picks the bias-Jacobian flavor.
    """
    ref_bias = ref_bias if ref_bias is not None else BiasState.zero()
    gyro = np.asarray(gyro, dtype=float) + ref_bias.gyro
    accel = np.asarray(accel, dtype=float) + ref_bias.accel
    delta = integrate_stream(gyro, accel, dt, mode, ref_bias)
    cov = (riccati_covariance(gyro, accel, dt, noise, mode)
           if noise is not None else np.zeros((9, 9)))
    bias_jac = (accumulate_bias_jacobian(gyro, accel, dt, jac, mode)
                if jac else np.zeros((9, 6)))
    return replace(delta, cov=cov, bias_jac=bias_jac,
                   jac_flavor=jac or "refined")
