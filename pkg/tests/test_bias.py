import numpy as np
import pytest

from extpose.bias import (
    accumulate_bias_jacobian,
    bias_comparison_experiment,
    bias_discrepancy,
    classical_correction,
    d_matrix,
    draw_bias,
    exponential_correction,
    step_bias_jacobian,
    step_injection,
)
from extpose.bias_types import BiasState, BiasUpdate
from extpose.kinematics import ImuSample
from extpose.preint import PreintDelta, integrate_stream, upsilon_of, upsilon_step
from extpose.scenarios import Scenario
from extpose.se23 import compose, inverse, log_se23, so3_exp, so3_log


def frob(a, b=0.0):
    return np.linalg.norm(np.asarray(a) - np.asarray(b))


def random_stream(rng, n, dt=0.01, gyro_scale=0.5, accel_scale=10.0):
    return (rng.uniform(-gyro_scale, gyro_scale, (n, 3)),
            rng.uniform(-accel_scale, accel_scale, (n, 3)))


def factor_with_jac(gyro, accel, dt, flavor="refined", mode="exact_step"):
    from dataclasses import replace

    delta = integrate_stream(gyro, accel, dt, mode)
    jac = accumulate_bias_jacobian(gyro, accel, dt, flavor, mode)
    return replace(delta, bias_jac=jac, jac_flavor=flavor)


def reintegrate(gyro, accel, dt, db, mode="exact_step"):
    return integrate_stream(gyro + db.delta_bias[:3], accel + db.delta_bias[3:],
                            dt, mode)


def factor_gap(a, b):
    return max(frob(a.rot_d, b.rot_d), frob(a.vel_d, b.vel_d), frob(a.pos_d, b.pos_d))


# ------------------------------------------------------------------ d_matrix


def test_d_matrix_identity_at_zero():
    assert frob(d_matrix(np.zeros(3)), np.eye(3)) == 0.0


def test_d_matrix_finite_difference_rate():
    # || log(exp(wx)^-1 exp((w+h u)x))/h - D u || -> 0 at rate O(h)
    rng = np.random.default_rng(70)
    for _ in range(10):
        omega = rng.uniform(-1.5, 1.5, 3)
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        d = d_matrix(omega)
        errs = []
        for h in (1e-4, 1e-5):
            fd = so3_log(so3_exp(omega).T @ so3_exp(omega + h * u)) / h
            errs.append(np.linalg.norm(fd - d @ u))
        assert errs[0] < 1e-3
        assert errs[1] < 0.2 * errs[0]  # shrinks roughly linearly in h


def test_d_matrix_fixes_axis():
    rng = np.random.default_rng(71)
    omega = rng.uniform(-2, 2, 3)
    np.testing.assert_allclose(d_matrix(omega) @ omega, omega, atol=1e-13)
    h = 1e-6
    fd = so3_log(so3_exp(omega).T @ so3_exp(omega * (1.0 + h))) / (h * np.linalg.norm(omega))
    np.testing.assert_allclose(fd, omega / np.linalg.norm(omega), atol=1e-6)


# ------------------------------------------------------- jacobian recursion


def test_recursion_base_is_injection():
    u = ImuSample([0.2, -0.1, 0.4], [1.0, -2.0, 9.0], 0.01)
    out = step_bias_jacobian(np.zeros((9, 6)), upsilon_step(u, "exact_step"),
                             u, "simple")
    assert frob(out, step_injection(u, "simple")) == 0.0


def test_zero_rate_diagonal_blocks_coincide():
    # With w = 0 the simple and refined gyro/accel velocity blocks agree
    # (D(0) = I); the refined injection keeps its exact position row, which
    # the dt-scaled-identity scheme has no counterpart for.
    u = ImuSample(np.zeros(3), [1.0, -2.0, 9.0], 0.01)
    simple = step_injection(u, "simple")
    refined = step_injection(u, "refined")
    assert frob(refined[:3, :3], simple[:3, :3]) < 1e-15
    assert frob(refined[3:6, 3:6], simple[3:6, 3:6]) < 1e-15


def test_refined_jacobian_matches_reintegration_oracle():
    # The accumulated 9x6 Jacobian is the derivative of the factor
    # discrepancy with respect to the bias update; central differences on
    # full re-integration are the ground truth.
    rng = np.random.default_rng(72)
    dt = 0.01
    gyro, accel = random_stream(rng, 100)
    jac = accumulate_bias_jacobian(gyro, accel, dt, "refined")
    ref = integrate_stream(gyro, accel, dt, "exact_step")
    ref_ups = upsilon_of(ref)
    h = 1e-6
    fd = np.empty((9, 6))
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        plus = reintegrate(gyro, accel, dt, BiasUpdate(e))
        minus = reintegrate(gyro, accel, dt, BiasUpdate(-e))
        dp = log_se23(compose(inverse(ref_ups), upsilon_of(plus)))
        dm = log_se23(compose(inverse(ref_ups), upsilon_of(minus)))
        fd[:, j] = (dp - dm) / (2 * h)
    assert frob(jac, fd) / np.linalg.norm(fd) < 1e-4


def test_simple_and_refined_differ_at_order_dt():
    def signal(n, dt):
        ts = (np.arange(n) + 0.5) * dt
        gyro = np.stack([0.5 * np.sin(ts), 0.4 * np.cos(2 * ts), 0.2 * np.sin(3 * ts)], 1)
        accel = np.stack([np.cos(ts), -np.sin(ts), 9.5 + 0 * ts], 1)
        return gyro, accel

    diffs = []
    for dt in (0.02, 0.01):
        n = round(1.0 / dt)
        gyro, accel = signal(n, dt)
        j_r = accumulate_bias_jacobian(gyro, accel, dt, "refined")
        j_s = accumulate_bias_jacobian(gyro, accel, dt, "simple")
        diffs.append(frob(j_r, j_s))
    ratio = diffs[0] / diffs[1]
    assert 1.5 < ratio < 2.5


# --------------------------------------------------------------- discrepancy


def test_discrepancy_zero_update():
    rng = np.random.default_rng(73)
    gyro, accel = random_stream(rng, 50)
    delta = factor_with_jac(gyro, accel, 0.01)
    d = bias_discrepancy(delta, BiasUpdate(np.zeros(6)))
    assert np.all(d == 0.0)


def test_discrepancy_is_linear():
    rng = np.random.default_rng(74)
    gyro, accel = random_stream(rng, 50)
    delta = factor_with_jac(gyro, accel, 0.01)
    db = rng.standard_normal(6) * 0.01
    d1 = bias_discrepancy(delta, BiasUpdate(db))
    # power-of-two scaling commutes exactly through the matrix product
    d2 = bias_discrepancy(delta, BiasUpdate(2.0 * db))
    np.testing.assert_array_equal(2.0 * d1, d2)
    d3 = bias_discrepancy(delta, BiasUpdate(3.0 * db))
    np.testing.assert_allclose(3.0 * d1, d3, rtol=1e-15, atol=0.0)


def test_accel_only_correction_is_exact():
    # No gyro update: the discrepancy lives in the abelian translation part
    # and the exponential correction reproduces re-integration exactly,
    # for updates as large as 10 m/s^2.
    rng = np.random.default_rng(75)
    dt = 0.01
    gyro, accel = random_stream(rng, 100)
    delta = factor_with_jac(gyro, accel, dt, "refined")
    worst = 0.0
    for mag in (0.1, 1.0, 10.0):
        dba = rng.standard_normal(3)
        dba = mag * dba / np.linalg.norm(dba)
        db = BiasUpdate.from_parts(np.zeros(3), dba)
        corrected = exponential_correction(delta, db)
        target = reintegrate(gyro, accel, dt, db)
        worst = max(worst, factor_gap(corrected, target))
    assert worst < 1e-10


def test_gyro_correction_first_order_remainder():
    # Error against re-integration scales quadratically in the gyro update.
    rng = np.random.default_rng(76)
    dt = 0.01
    gyro, accel = random_stream(rng, 100)
    delta = factor_with_jac(gyro, accel, dt, "refined")
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    mags = [1e-3, 1e-2, 1e-1]
    errs = []
    for mag in mags:
        db = BiasUpdate.from_parts(mag * direction, np.zeros(3))
        corrected = exponential_correction(delta, db)
        target = reintegrate(gyro, accel, dt, db)
        errs.append(factor_gap(corrected, target))
    slopes = np.diff(np.log10(errs)) / np.diff(np.log10(mags))
    assert np.all((slopes >= 1.7) & (slopes <= 2.3))


# ----------------------------------------------------------------- classical


def test_classical_zero_update_unchanged():
    rng = np.random.default_rng(77)
    gyro, accel = random_stream(rng, 50)
    delta = factor_with_jac(gyro, accel, 0.01, "classical")
    out = classical_correction(delta, BiasUpdate(np.zeros(6)))
    assert factor_gap(out, delta) == 0.0


def test_classical_equals_exponential_for_accel_only_no_rotation():
    # With a rotation-free stream the group is a vector space: both schemes
    # are exact and identical.
    rng = np.random.default_rng(78)
    dt = 0.01
    n = 100
    gyro = np.zeros((n, 3))
    accel = rng.uniform(-10, 10, (n, 3))
    db = BiasUpdate.from_parts(np.zeros(3), [2.0, -1.0, 0.5])
    exp_fac = exponential_correction(factor_with_jac(gyro, accel, dt, "refined"), db)
    cl_fac = classical_correction(factor_with_jac(gyro, accel, dt, "classical"), db)
    target = reintegrate(gyro, accel, dt, db)
    assert factor_gap(exp_fac, cl_fac) < 1e-10
    assert factor_gap(exp_fac, target) < 1e-10


def test_flavor_mismatch_raises():
    rng = np.random.default_rng(79)
    gyro, accel = random_stream(rng, 10)
    refined = factor_with_jac(gyro, accel, 0.01, "refined")
    classical = factor_with_jac(gyro, accel, 0.01, "classical")
    with pytest.raises(ValueError):
        classical_correction(refined, BiasUpdate(np.zeros(6)))
    with pytest.raises(ValueError):
        bias_discrepancy(classical, BiasUpdate(np.zeros(6)))
    with pytest.raises(ValueError):
        bias_discrepancy(refined, BiasUpdate(np.zeros(6)), mode="simple")


# ---------------------------------------------------------------- experiment


def test_experiment_zero_bias_gives_zero_rms():
    sc = Scenario("figure3d", {}, 4.0, 0.01, seed=5)
    rows = bias_comparison_experiment(sc, [2.0], bias_magnitude=(0.0, 0.0),
                                      n_draws=3, seed=5)
    for row in rows:
        assert row["velocity_rms"] < 1e-12
        assert row["position_rms"] < 1e-12


def test_experiment_table_shape():
    sc = Scenario("figure3d", {}, 4.0, 0.01, seed=6)
    rows = bias_comparison_experiment(sc, [1.0, 2.0], bias_magnitude=(0.5, 20.0),
                                      n_draws=2, seed=6)
    assert len(rows) == 4
    assert {r["method"] for r in rows} == {"classical", "proposed"}
    assert [r["T_seconds"] for r in rows] == [1.0, 1.0, 2.0, 2.0]
    for r in rows:
        assert r["velocity_rms"] > 0.0 and r["position_rms"] > 0.0


def test_experiment_low_cost_direction_smoke():
    # Reduced-size version of the Table-1 comparison: the exponential
    # correction should beat the classical one on velocity.
    sc = Scenario("figure3d", {}, 10.0, 0.01, seed=7)
    rows = bias_comparison_experiment(sc, [10.0], bias_magnitude=(1.0, 100.0),
                                      n_draws=8, seed=7)
    by = {r["method"]: r for r in rows}
    assert by["proposed"]["velocity_rms"] < by["classical"]["velocity_rms"]


def test_draw_bias_deterministic():
    a = draw_bias(0.02, 1.0, seed=9, index=4)
    b = draw_bias(0.02, 1.0, seed=9, index=4)
    np.testing.assert_array_equal(a.as_vector(), b.as_vector())
    assert abs(np.linalg.norm(a.gyro) - 0.02) < 1e-12
    assert abs(np.linalg.norm(a.accel) - 1.0) < 1e-12
