import numpy as np
import pytest

from extpose.earth import (
    DurationMismatch,
    GammaEarth,
    apply_earth,
    from_primed,
    gamma_from_dict,
    gamma_to_dict,
    integrate_gamma,
    to_primed,
)
from extpose.kinematics import EarthModel, ImuSample, rhs_earth, rk4_integrate
from extpose.preint import PreintDelta, apply_flat, integrate_stream
from extpose.se23 import ExtendedPose, exp_se23, so3_exp, tangent


def frob(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b))


def random_pose(rng, scale=5.0):
    t = exp_se23(tangent(rng.uniform(-1.5, 1.5, 3), np.zeros(3), np.zeros(3)))
    t.vel = rng.uniform(-scale, scale, 3)
    t.pos = rng.uniform(-scale, scale, 3)
    return t


def varied_stream(n, dt):
    ts = (np.arange(n) + 0.5) * dt
    gyro = np.stack([0.4 * np.sin(0.7 * ts), 0.3 * np.cos(1.1 * ts), 0.2 * np.sin(0.3 * ts)], axis=1)
    accel = np.stack([1.0 * np.cos(0.5 * ts), -0.8 * np.sin(0.9 * ts), 9.5 + 0.4 * np.sin(0.2 * ts)], axis=1)
    return gyro, accel


def test_to_primed_flat_is_identity():
    rng = np.random.default_rng(50)
    t = random_pose(rng)
    out = to_primed(t, EarthModel.flat())
    assert frob(out.as_matrix(), t.as_matrix()) == 0.0


def test_primed_roundtrip():
    # Position is untouched (bitwise); velocity picks up one rounding step
    # from the add/subtract pair.
    rng = np.random.default_rng(51)
    earth = EarthModel.rotating(rate=0.2)
    for _ in range(20):
        t = random_pose(rng)
        back = from_primed(to_primed(t, earth), earth)
        np.testing.assert_allclose(back.vel, t.vel, rtol=0.0, atol=1e-13)
        assert np.array_equal(back.pos, t.pos)


def test_to_primed_cross_product():
    earth = EarthModel(gravity=np.zeros(3), earth_rate=[0.0, 0.0, 2.0])
    t = ExtendedPose(np.eye(3), np.zeros(3), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(to_primed(t, earth).vel, [0.0, 2.0, 0.0])
    tp = ExtendedPose(np.eye(3), [0.0, 2.0, 0.0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(from_primed(tp, earth).vel, [0.0, 0.0, 0.0])


def test_integrate_gamma_flat_degeneration():
    earth = EarthModel.flat()
    g = integrate_gamma(earth, 3.0, 0.01)
    np.testing.assert_allclose(g.gamma_R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(g.gamma_v, 3.0 * earth.gravity, atol=1e-10)
    np.testing.assert_allclose(g.gamma_x, 4.5 * earth.gravity, atol=1e-10)


def test_integrate_gamma_homogeneous():
    earth = EarthModel(gravity=np.zeros(3), earth_rate=[0.0, 0.0, 0.1])
    g = integrate_gamma(earth, 10.0, 0.01)
    assert np.all(g.gamma_v == 0.0)
    assert np.all(g.gamma_x == 0.0)
    assert frob(g.gamma_R, so3_exp(np.array([0.0, 0.0, -1.0]))) < 1e-12


def test_integrate_gamma_step_refinement():
    earth = EarthModel.rotating()
    coarse = integrate_gamma(earth, 60.0, 0.01)
    fine = integrate_gamma(earth, 60.0, 0.001)
    scale = max(np.linalg.norm(fine.gamma_v), np.linalg.norm(fine.gamma_x))
    assert frob(coarse.gamma_v, fine.gamma_v) / scale < 1e-9
    assert frob(coarse.gamma_x, fine.gamma_x) / scale < 1e-9
    assert frob(coarse.gamma_R, fine.gamma_R) < 1e-9


def test_gamma_rotation_closed_form_invariant():
    earth = EarthModel.rotating()
    g = integrate_gamma(earth, 60.0, 0.01)
    assert frob(g.gamma_R, so3_exp(-60.0 * earth.earth_rate)) < 1e-9
    assert frob(g.gamma_R.T @ g.gamma_R, np.eye(3)) < 1e-9


def test_apply_earth_duration_mismatch():
    delta = PreintDelta.fresh()
    gammas = integrate_gamma(EarthModel.rotating(), 1.0, 0.01)
    with pytest.raises(DurationMismatch):
        apply_earth(delta, gammas, ExtendedPose.identity(), EarthModel.rotating())


def test_apply_earth_zero_time_returns_prior():
    rng = np.random.default_rng(52)
    t0 = random_pose(rng)
    out = apply_earth(PreintDelta.fresh(), GammaEarth.identity(), t0,
                      EarthModel.rotating())
    assert frob(out.as_matrix(), t0.as_matrix()) < 1e-14


def test_apply_earth_degenerates_to_flat():
    rng = np.random.default_rng(53)
    earth = EarthModel.flat()
    gyro, accel = varied_stream(100, 0.01)
    delta = integrate_stream(gyro, accel, 0.01, "exact_step")
    gammas = integrate_gamma(earth, 1.0, 0.01)
    t0 = random_pose(rng)
    flat = apply_flat(delta, t0, earth)
    viaearth = apply_earth(delta, gammas, t0, earth)
    assert frob(flat.as_matrix(), viaearth.as_matrix()) < 1e-10


def test_apply_earth_matches_rk4_oracle():
    # 60 s of varied inputs at the true Earth rate: reconstruction vs direct
    # RK4 of the Coriolis model.
    rng = np.random.default_rng(54)
    earth = EarthModel.rotating()
    dt = 0.01
    n = 6000
    gyro, accel = varied_stream(n, dt)
    delta = integrate_stream(gyro, accel, dt, "exact_step")
    gammas = integrate_gamma(earth, 60.0, dt)
    t0 = random_pose(rng)
    recon = apply_earth(delta, gammas, t0, earth)
    samples = [ImuSample(g, a, dt) for g, a in zip(gyro, accel)]
    oracle = rk4_integrate(rhs_earth, t0, samples, earth, substeps=10)
    assert np.linalg.norm(recon.pos - oracle.pos) < 1e-5
    assert np.linalg.norm(recon.vel - oracle.vel) < 1e-6


def test_reconstruction_satisfies_motion_equations():
    # Differentiate the reconstructed trajectory numerically inside sample
    # intervals; it must satisfy Xdot = V and the Coriolis acceleration law.
    earth = EarthModel.rotating()
    dt = 0.01
    n = 200
    gyro, accel = varied_stream(n, dt)
    t0 = ExtendedPose(np.eye(3), [1.0, -0.5, 0.2], [100.0, -50.0, 10.0])
    h = 1e-4

    def reconstruct(t):
        k = int(np.floor(t / dt + 1e-12))
        k = min(k, n - 1)
        frac = t - k * dt
        delta = integrate_stream(gyro[:k], accel[:k], dt) if k else PreintDelta.fresh()
        if frac > 1e-13:
            from extpose.kinematics import ImuSample
            from extpose.preint import absorb_sample
            delta = absorb_sample(delta, ImuSample(gyro[k], accel[k], frac))
        gammas = integrate_gamma(earth, k * dt + max(frac, 0.0), dt)
        return apply_earth(delta, gammas, t0, earth)

    ox = np.array([[0, -earth.earth_rate[2], earth.earth_rate[1]],
                   [earth.earth_rate[2], 0, -earth.earth_rate[0]],
                   [-earth.earth_rate[1], earth.earth_rate[0], 0]])
    rng = np.random.default_rng(55)
    for _ in range(10):
        k = rng.integers(1, n - 1)
        t = k * dt + 0.5 * dt  # midpoint keeps the stencil inside one sample
        minus, centre, plus = reconstruct(t - h), reconstruct(t), reconstruct(t + h)
        xdot = (plus.pos - minus.pos) / (2 * h)
        vdot = (plus.vel - minus.vel) / (2 * h)
        assert np.linalg.norm(xdot - centre.vel) < 1e-6
        expected = (earth.gravity + centre.rot @ accel[k]
                    - 2.0 * ox @ centre.vel - ox @ (ox @ centre.pos))
        assert np.linalg.norm(vdot - expected) < 1e-4


def test_omega_to_zero_continuity():
    # Error vs the flat reconstruction must vanish linearly with the rate.
    gyro, accel = varied_stream(1000, 0.01)
    t0 = ExtendedPose(np.eye(3), [1.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    delta = integrate_stream(gyro, accel, 0.01, "exact_step")
    flat = apply_flat(delta, t0, EarthModel.flat())
    for rate in (1e-6, 1e-8):
        earth = EarthModel.rotating(rate=rate)
        gammas = integrate_gamma(earth, 10.0, 0.01)
        out = apply_earth(delta, gammas, t0, earth)
        err = frob(out.as_matrix(), flat.as_matrix())
        # C = err/rate stays bounded: errors are dominated by terms like
        # rate * (t^2 |v| + t^3 |g|) ~ 1e4 * rate here.
        assert err <= 1e5 * rate


def test_gamma_serialization_roundtrip():
    earth = EarthModel.rotating()
    g = integrate_gamma(earth, 2.0, 0.01)
    back = gamma_from_dict(gamma_to_dict(g))
    assert frob(back.gamma_R, g.gamma_R) == 0.0
    assert np.array_equal(back.gamma_v, g.gamma_v)
    assert back.t == g.t
