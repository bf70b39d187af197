"""First-order bias relinearization of preintegrated factors.

A bias update db changes the factor by a right-multiplied exponential
discrepancy, Upsilon(b+db) ~ Upsilon(b) exp(d), with d = J db accumulated by
the same log-linear transport as the noise:

    J_{k+1} = Ad(Upsilon_step_k^-1) F J_k + injection_k.

Two injection accumulations exist: ``simple`` uses the plain dt-scaled
identity blocks; ``refined`` is the exact first-order derivative of the
per-step factor, which makes accelerometer-only corrections exact for
arbitrary update size and leaves a purely quadratic gyro remainder.  A
third, ``classical``, reproduces the widely used additive correction as the
comparison baseline (block Jacobians accumulated additively, rotation
corrected by a right perturbation, velocity/position by plain vector
increments).
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ._purepy import _batch_skew, _batch_step_mats
from .bias_types import BiasState, BiasUpdate
from .kinematics import ImuSample
from .preint import PreintDelta, f_matrix, upsilon_of, upsilon_step
from .se23 import (
    ExtendedPose,
    accel_double_integral,
    adjoint,
    compose,
    exp_se23,
    inverse,
    left_jacobian,
    skew,
    so3_exp,
)

JAC_FLAVORS = ("simple", "refined", "classical")

# Gauss-Legendre nodes/weights on [0, 1] for the within-step transport
# integrals of the refined injection; the integrands are low-order
# trig-polynomials so ten nodes are exact to double precision.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


def d_matrix(omega: np.ndarray) -> np.ndarray:
    """Matrix D in exp((w+u)x) = exp(wx) (I + (D u)x + o(u)).

    This is the SO(3) right Jacobian, i.e. the left Jacobian at -w; the
    rotation axis is a fixed point: D(w) w = w.
    """
    return left_jacobian(-np.asarray(omega, dtype=float))


def step_injection(u: ImuSample, mode: str,
                   factor_mode: str = "exact_step") -> np.ndarray:
    """Inhomogeneous term of the bias-Jacobian recursion for one step.

    simple: dt-scaled identity blocks in the gyro and accel rows (the
    injection implied by lifting db to (db_g dt, db_a dt, 0)).

    refined: the exact derivative of the per-step factor with respect to
    the bias update, evaluated at the step's measured rate w and specific
    force f (phi = w dt, E = exp(phi_x), N/M the step coefficient
    matrices).  For exact-step factors:

        d(omega)/d(db_g) = dt D(phi)
        d(nu)/d(db_a)    = dt E' N       (= dt D(phi))
        d(rho)/d(db_a)   = dt^2 E' M
        d(nu)/d(db_g)    = -int_0^dt E_s' (s N(s w) f)x ds
        d(rho)/d(db_g)   = -int_0^dt E_s' (s^2 M(s w) f)x ds

    The two integrals transport the within-step velocity/position response
    to a rate change back through the step rotation; they are evaluated by
    fixed-order quadrature.  First-order factors have no within-step
    rotation response, so their refined injection is block-diagonal with
    dt E' and dt^2 E' / 2 in the accel rows.
    """
    dt = u.dt
    inj = np.zeros((9, 6))
    if mode == "simple":
        inj[:3, :3] = dt * np.eye(3)
        inj[3:6, 3:6] = dt * np.eye(3)
        return inj
    if mode != "refined":
        raise ValueError(f"mode must be 'simple' or 'refined', got {mode!r}")
    phi = u.gyro * dt
    dphi = d_matrix(phi)
    e_t = so3_exp(phi).T
    inj[:3, :3] = dt * dphi
    if factor_mode == "first_order":
        inj[3:6, 3:6] = dt * e_t
        inj[6:9, 3:6] = 0.5 * dt * dt * e_t
        return inj
    inj[3:6, 3:6] = dt * dphi  # E' N(phi) equals the right Jacobian
    inj[6:9, 3:6] = dt * dt * (e_t @ accel_double_integral(phi))
    s = _GL_NODES * dt
    e_s, n_s, m_s = _batch_step_mats(np.outer(s, u.gyro), True)
    vel_resp = s[:, None] * (n_s @ u.accel)
    pos_resp = (s * s)[:, None] * (m_s @ u.accel)
    w = _GL_WEIGHTS * dt
    # sum_i w_i E_i' skew(resp_i), with E' applied as transpose on the left
    inj[3:6, :3] = -np.einsum("q,qji,qjk->ik", w, e_s, _batch_skew(vel_resp))
    inj[6:9, :3] = -np.einsum("q,qji,qjk->ik", w, e_s, _batch_skew(pos_resp))
    return inj


def step_bias_jacobian(jac: np.ndarray, upsilon_k: ExtendedPose, u: ImuSample,
                       mode: str = "refined",
                       factor_mode: str = "exact_step") -> np.ndarray:
    """One recursion step: Ad(upsilon_k^-1) F jac + injection.

    ``upsilon_k`` is the per-step factor at the reference bias.
    """
    jac = np.asarray(jac, dtype=float).reshape(9, 6)
    f_k = adjoint(inverse(upsilon_k)) @ f_matrix(u.dt)
    return f_k @ jac + step_injection(u, mode, factor_mode)


def step_classical_jacobian(jac: np.ndarray, rot_before: np.ndarray,
                            u: ImuSample) -> np.ndarray:
    """Standard additive accumulation of the baseline block Jacobians.

    Rows of ``jac``: rotation right-perturbation coefficient (gyro columns
    only), then plain world-frame velocity and position derivatives.
    ``rot_before`` is the factor rotation before this step.
    """
    jac = np.asarray(jac, dtype=float).reshape(9, 6).copy()
    dt = u.dt
    phi = u.gyro * dt
    a_rot = jac[:3, :3]
    fx = skew(u.accel)
    gyro_gain = -(rot_before @ fx @ a_rot) * dt
    jac[6:9, :] += dt * jac[3:6, :]
    jac[6:9, :3] += 0.5 * dt * gyro_gain
    jac[6:9, 3:6] += 0.5 * dt * dt * rot_before
    jac[3:6, :3] += gyro_gain
    jac[3:6, 3:6] += dt * rot_before
    jac[:3, :3] = so3_exp(phi).T @ a_rot + dt * d_matrix(phi)
    return jac


def _batch_transition(e, vs, xs, dt):
    """F_k = Ad(Upsilon_step^-1) F(dt) for every step, from batch pieces."""
    n = e.shape[0]
    e_t = np.transpose(e, (0, 2, 1))
    v_inv = -(e_t @ vs[..., None])[..., 0]
    x_inv = -(e_t @ xs[..., None])[..., 0]
    ad = np.zeros((n, 9, 9))
    ad[:, :3, :3] = e_t
    ad[:, 3:6, 3:6] = e_t
    ad[:, 6:9, 6:9] = e_t
    ad[:, 3:6, :3] = _batch_skew(v_inv) @ e_t
    ad[:, 6:9, :3] = _batch_skew(x_inv) @ e_t
    out = ad.copy()
    out[:, :, 6:9] = ad[:, :, 6:9]
    out[:, :, 3:6] = ad[:, :, 3:6] + dt * ad[:, :, 6:9]
    return out


def _batch_refined_injection(gyro, accel, dt, factor_mode):
    n = gyro.shape[0]
    phi = gyro * dt
    e, nmat, mmat = _batch_step_mats(phi, True)
    e_t = np.transpose(e, (0, 2, 1))
    dmat = e_t @ nmat
    inj = np.zeros((n, 9, 6))
    inj[:, :3, :3] = dt * dmat
    if factor_mode == "first_order":
        inj[:, 3:6, 3:6] = dt * e_t
        inj[:, 6:9, 3:6] = 0.5 * dt * dt * e_t
        return inj
    inj[:, 3:6, 3:6] = dt * dmat
    inj[:, 6:9, 3:6] = dt * dt * (e_t @ mmat)
    s = _GL_NODES * dt
    psi = gyro[:, None, :] * s[None, :, None]
    e_s, n_s, m_s = _batch_step_mats(psi.reshape(-1, 3), True)
    e_s = e_s.reshape(n, -1, 3, 3)
    n_s = n_s.reshape(n, -1, 3, 3)
    m_s = m_s.reshape(n, -1, 3, 3)
    vel_resp = s[None, :, None] * (n_s @ accel[:, None, :, None])[..., 0]
    pos_resp = (s * s)[None, :, None] * (m_s @ accel[:, None, :, None])[..., 0]
    w = _GL_WEIGHTS * dt
    sk_v = _batch_skew(vel_resp.reshape(-1, 3)).reshape(n, -1, 3, 3)
    sk_x = _batch_skew(pos_resp.reshape(-1, 3)).reshape(n, -1, 3, 3)
    inj[:, 3:6, :3] = -np.einsum("q,nqji,nqjk->nik", w, e_s, sk_v)
    inj[:, 6:9, :3] = -np.einsum("q,nqji,nqjk->nik", w, e_s, sk_x)
    return inj


def accumulate_bias_jacobian(gyro: np.ndarray, accel: np.ndarray, dt: float,
                             mode: str = "refined",
                             factor_mode: str = "exact_step") -> np.ndarray:
    """Run the chosen recursion over a whole stream from J_0 = 0.

    Matrix building is batched; only the 9x9 @ 9x6 chain stays sequential.
    Equivalent to folding :func:`step_bias_jacobian` (or the classical
    stepper) sample by sample.
    """
    if mode not in JAC_FLAVORS:
        raise ValueError(f"mode must be one of {JAC_FLAVORS}, got {mode!r}")
    gyro = np.asarray(gyro, dtype=float).reshape(-1, 3)
    accel = np.asarray(accel, dtype=float).reshape(-1, 3)
    n = gyro.shape[0]
    jac = np.zeros((9, 6))
    if n == 0:
        return jac
    phi = gyro * dt
    if mode == "classical":
        e, nmat, _ = _batch_step_mats(phi, True)
        e_t = np.transpose(e, (0, 2, 1))
        dmat = e_t @ nmat
        fx = _batch_skew(accel)
        rot = np.eye(3)
        for k in range(n):
            a_rot = jac[:3, :3]
            gyro_gain = -(rot @ fx[k] @ a_rot) * dt
            jac[6:9, :] += dt * jac[3:6, :]
            jac[6:9, :3] += 0.5 * dt * gyro_gain
            jac[6:9, 3:6] += 0.5 * dt * dt * rot
            jac[3:6, :3] += gyro_gain
            jac[3:6, 3:6] += dt * rot
            jac[:3, :3] = e_t[k] @ a_rot + dt * dmat[k]
            rot = rot @ e[k]
        return jac
    exact = factor_mode == "exact_step"
    e, nmat, mmat = _batch_step_mats(phi, True)
    if exact:
        vs = (nmat @ accel[..., None])[..., 0] * dt
        xs = (mmat @ accel[..., None])[..., 0] * (dt * dt)
    else:
        vs = accel * dt
        xs = 0.5 * accel * (dt * dt)
    trans = _batch_transition(e, vs, xs, dt)
    if mode == "simple":
        inj = np.zeros((n, 9, 6))
        inj[:, :3, :3] = dt * np.eye(3)
        inj[:, 3:6, 3:6] = dt * np.eye(3)
    else:
        inj = _batch_refined_injection(gyro, accel, dt, factor_mode)
    for k in range(n):
        jac = trans[k] @ jac + inj[k]
    return jac


def bias_discrepancy(delta_at_ref: PreintDelta, db: BiasUpdate,
                     mode: str | None = None) -> np.ndarray:
    """Factor discrepancy d = J db in exponential coordinates.

    The caller applies the correction as Upsilon(b) exp(d).  ``mode``, when
    given, must match the flavor the factor's Jacobian was accumulated
    with.
    """
    if mode is not None and mode != delta_at_ref.jac_flavor:
        raise ValueError(
            f"factor carries a {delta_at_ref.jac_flavor!r} Jacobian, not {mode!r}")
    if delta_at_ref.jac_flavor == "classical":
        raise ValueError("classical factors are corrected additively; "
                         "use classical_correction")
    return delta_at_ref.bias_jac @ db.delta_bias


def exponential_correction(delta_at_ref: PreintDelta, db: BiasUpdate) -> PreintDelta:
    """Apply Upsilon(b+db) ~ Upsilon(b) exp(J db)."""
    d = bias_discrepancy(delta_at_ref, db)
    corrected = compose(upsilon_of(delta_at_ref), exp_se23(d))
    new_ref = BiasState(delta_at_ref.ref_bias.gyro + db.delta_bias[:3],
                        delta_at_ref.ref_bias.accel + db.delta_bias[3:])
    return replace(delta_at_ref, rot_d=corrected.rot, vel_d=corrected.vel,
                   pos_d=corrected.pos, ref_bias=new_ref)


def classical_correction(delta_at_ref: PreintDelta, db: BiasUpdate) -> PreintDelta:
    """Standard additive first-order correction (comparison baseline).

    Rotation gets a right perturbation exp((A db_g)x); velocity and
    position are shifted by their block Jacobians.  Requires a factor whose
    Jacobian was accumulated with the classical flavor.
    """
    if delta_at_ref.jac_flavor != "classical":
        raise ValueError("classical_correction needs a classical-flavor Jacobian")
    jac = delta_at_ref.bias_jac
    dbv = db.delta_bias
    rot = delta_at_ref.rot_d @ so3_exp(jac[:3, :3] @ dbv[:3])
    vel = delta_at_ref.vel_d + jac[3:6, :] @ dbv
    pos = delta_at_ref.pos_d + jac[6:9, :] @ dbv
    new_ref = BiasState(delta_at_ref.ref_bias.gyro + dbv[:3],
                        delta_at_ref.ref_bias.accel + dbv[3:])
    return replace(delta_at_ref, rot_d=rot, vel_d=vel, pos_d=pos, ref_bias=new_ref)


# ------------------------------------------------------------- experiment

_STREAM_BIAS_DRAWS = 4


def draw_bias(gyro_magnitude: float, accel_magnitude: float, seed: int,
              index: int) -> BiasState:
    """Fixed-magnitude bias with a uniformly random direction per sensor."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_STREAM_BIAS_DRAWS, index))
    rng = np.random.Generator(np.random.PCG64(ss))
    g = rng.standard_normal(3)
    a = rng.standard_normal(3)
    return BiasState(gyro_magnitude * g / np.linalg.norm(g),
                     accel_magnitude * a / np.linalg.norm(a))


def bias_comparison_experiment(scenario, t_list, bias_magnitude=(1.0, 100.0),
                               n_draws: int = 50, seed: int = 0,
                               mode: str = "exact_step"):
    """RMS comparison of the two first-order corrections vs re-integration.

    ``bias_magnitude`` is (gyro deg/s, accel milli-g).  For every drawn bias
    the trajectory's measurements are biased, factors of each duration in
    ``t_list`` are preintegrated from them and corrected back by the exact
    update, and the velocity/position gaps to the re-integrated (bias-free)
    factors enter the RMS over draws and factors.  Returns one row per
    (duration, method).
    """
    from .scenarios import synthesize

    log, _ = synthesize(scenario)
    dt = log.dt
    n = len(log)
    gyro_mag = float(np.deg2rad(bias_magnitude[0]))
    accel_mag = float(bias_magnitude[1]) * 9.80665e-3
    rows = []
    for t_span in t_list:
        steps = round(t_span / dt)
        if steps < 1 or abs(t_span / dt - steps) > 1e-9 or n % steps != 0:
            raise ValueError(f"duration {t_span} does not divide the trajectory")
        n_fac = n // steps
        starts = [f * steps for f in range(n_fac)]
        true_factors = [
            _integrate(log.gyro[s:s + steps], log.accel[s:s + steps], dt, mode)
            for s in starts
        ]
        sq_err = {"classical": [], "proposed": []}
        for i in range(n_draws):
            bias = draw_bias(gyro_mag, accel_mag, seed, i)
            gyro_m = log.gyro - bias.gyro
            accel_m = log.accel - bias.accel
            db = BiasUpdate(bias.as_vector())
            for s, truth in zip(starts, true_factors):
                g_slice = gyro_m[s:s + steps]
                a_slice = accel_m[s:s + steps]
                ref = _integrate(g_slice, a_slice, dt, mode)
                ref_exp = replace(ref, bias_jac=accumulate_bias_jacobian(
                    g_slice, a_slice, dt, "refined", mode), jac_flavor="refined")
                ref_cl = replace(ref, bias_jac=accumulate_bias_jacobian(
                    g_slice, a_slice, dt, "classical", mode), jac_flavor="classical")
                prop = exponential_correction(ref_exp, db)
                clas = classical_correction(ref_cl, db)
                for name, corr in (("proposed", prop), ("classical", clas)):
                    sq_err[name].append((
                        float(np.sum((corr.vel_d - truth.vel_d) ** 2)),
                        float(np.sum((corr.pos_d - truth.pos_d) ** 2)),
                    ))
        for name in ("classical", "proposed"):
            arr = np.asarray(sq_err[name])
            rows.append({
                "T_seconds": float(t_span),
                "method": name,
                "velocity_rms": float(np.sqrt(np.mean(arr[:, 0]))),
                "position_rms": float(np.sqrt(np.mean(arr[:, 1]))),
            })
    return rows


def _integrate(gyro, accel, dt, mode):
    from .preint import integrate_stream

    return integrate_stream(gyro, accel, dt, mode)
