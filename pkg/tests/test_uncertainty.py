import numpy as np
import pytest

import extpose.uncertainty as unc
from extpose.kinematics import EarthModel, ImuSample
from extpose.preint import (
    NoiseDensities,
    f_matrix,
    gamma_flat,
    integrate_stream,
    phi_map,
    upsilon_of,
    upsilon_step,
)
from extpose.scenarios import Scenario, synthesize
from extpose.se23 import ExtendedPose, compose, exp_se23, inverse, log_se23, tangent
from extpose.uncertainty import (
    ConcentratedGaussian,
    StepNoise,
    banana_fit,
    exact_error_product,
    monte_carlo_endpoint,
    naive_additive_propagate,
    naive_step_jacobian,
    propagate_gaussian,
    riccati_covariance,
    sample_additive_cloud,
    sample_exponential_cloud,
    step_matrix,
    total_step_matrix,
)


def frob(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b))


def random_pose(rng, scale=3.0):
    t = exp_se23(tangent(rng.uniform(-1.0, 1.0, 3), np.zeros(3), np.zeros(3)))
    t.vel = rng.uniform(-scale, scale, 3)
    t.pos = rng.uniform(-scale, scale, 3)
    return t


def random_sample(rng, dt=0.01):
    return ImuSample(rng.uniform(-1, 1, 3), rng.uniform(-10, 10, 3), dt)


def noise_free_step(t, u, earth, mode="exact_step"):
    ups = upsilon_step(u, mode)
    return compose(gamma_flat(u.dt, earth), compose(phi_map(t, u.dt), ups))


def test_step_matrix_trivial():
    assert frob(step_matrix(ExtendedPose.identity(), 0.0), np.eye(9)) == 0.0


def test_log_linear_transport_is_exact():
    # Prop-4 is an identity: transporting the perturbed state equals
    # perturbing the transported state by F_k xi.
    rng = np.random.default_rng(60)
    earth = EarthModel.flat()
    worst = 0.0
    for _ in range(1000):
        t_bar = random_pose(rng)
        xi = 0.5 * rng.standard_normal(9)
        u = random_sample(rng)
        ups = upsilon_step(u, "exact_step")
        lhs = noise_free_step(compose(t_bar, exp_se23(xi)), u, earth)
        t_next = noise_free_step(t_bar, u, earth)
        rhs = compose(t_next, exp_se23(step_matrix(ups, u.dt) @ xi))
        worst = max(worst, frob(lhs.as_matrix(), rhs.as_matrix()))
    assert worst < 1e-11


def test_step_matrix_matches_finite_differences():
    rng = np.random.default_rng(61)
    earth = EarthModel.flat()
    t_bar = random_pose(rng)
    u = random_sample(rng)
    ups = upsilon_step(u, "exact_step")
    t_next = noise_free_step(t_bar, u, earth)
    h = 1e-6
    jac = np.empty((9, 9))
    for j in range(9):
        e = np.zeros(9)
        e[j] = h
        plus = log_se23(compose(inverse(t_next),
                                noise_free_step(compose(t_bar, exp_se23(e)), u, earth)))
        minus = log_se23(compose(inverse(t_next),
                                 noise_free_step(compose(t_bar, exp_se23(-e)), u, earth)))
        jac[:, j] = (plus - minus) / (2 * h)
    assert np.max(np.abs(jac - step_matrix(ups, u.dt))) < 1e-5


def test_propagate_gaussian_zero_noise_stays_zero():
    earth = EarthModel.flat()
    state = ConcentratedGaussian.certain()
    u = ImuSample([0.1, 0.0, -0.2], [1.0, 0.0, 9.0], 0.01)
    out = propagate_gaussian(state, upsilon_step(u, "exact_step"),
                             gamma_flat(u.dt, earth), u.dt,
                             StepNoise.from_densities(NoiseDensities.zero(), u.dt))
    assert np.all(out.cov == 0.0)


def test_propagate_gaussian_single_step_is_step_noise():
    earth = EarthModel.flat()
    noise = NoiseDensities(0.01, 0.1)
    u = ImuSample([0.1, 0.0, -0.2], [1.0, 0.0, 9.0], 0.01)
    sn = StepNoise.from_densities(noise, u.dt)
    out = propagate_gaussian(ConcentratedGaussian.certain(),
                             upsilon_step(u, "exact_step"),
                             gamma_flat(u.dt, earth), u.dt, sn)
    assert frob(out.cov, sn.cov_eta) == 0.0
    # position block of the injected noise is exactly zero
    assert np.all(sn.cov_eta[6:, :] == 0.0) and np.all(sn.cov_eta[:, 6:] == 0.0)


def test_total_step_matrix_equals_product():
    rng = np.random.default_rng(62)
    dt = 0.01
    gyro = rng.uniform(-1, 1, (50, 3))
    accel = rng.uniform(-10, 10, (50, 3))
    product = np.eye(9)
    from extpose.preint import PreintDelta, absorb_sample
    delta = PreintDelta.fresh("exact_step")
    for g, a in zip(gyro, accel):
        u = ImuSample(g, a, dt)
        product = step_matrix(upsilon_step(u, "exact_step"), dt) @ product
        delta = absorb_sample(delta, u)
    assert frob(total_step_matrix(delta), product) < 1e-10


def test_exact_error_product_pure_loglinear():
    rng = np.random.default_rng(63)
    dt = 0.01
    f_seq = [step_matrix(upsilon_step(random_sample(rng, dt), "exact_step"), dt)
             for _ in range(20)]
    xi0 = 0.1 * rng.standard_normal(9)
    out = exact_error_product(xi0, [np.zeros(9)] * 20, f_seq)
    total = np.eye(9)
    for f in f_seq:
        total = f @ total
    assert frob(out, total @ xi0) < 1e-10


def test_exact_error_product_single_eta():
    eta = np.array([0.01, -0.02, 0.03, 0.1, 0.0, -0.1, 0.0, 0.0, 0.0])
    out = exact_error_product(np.zeros(9), [eta], [np.eye(9)])
    assert frob(out, eta) < 1e-14


def test_exact_error_product_matches_recursion():
    rng = np.random.default_rng(64)
    dt = 0.01
    worst = 0.0
    for _ in range(20):
        k = 50
        f_seq = []
        etas = []
        for _ in range(k):
            f_seq.append(step_matrix(upsilon_step(random_sample(rng, dt), "exact_step"), dt))
            etas.append(0.01 * rng.standard_normal(9))
        xi0 = 0.02 * rng.standard_normal(9)
        product_form = exact_error_product(xi0, etas, f_seq)
        xi = xi0.copy()
        for f, eta in zip(f_seq, etas):
            xi = log_se23(compose(exp_se23(f @ xi), exp_se23(eta)))
        worst = max(worst, np.linalg.norm(product_form - xi))
    assert worst < 1e-10


def test_automorphism_chain():
    # Psi = Ad(Upsilon^-1) o Phi distributes over group products.
    rng = np.random.default_rng(65)
    dt = 0.01
    worst = 0.0
    for _ in range(100):
        ups = upsilon_step(random_sample(rng, dt), "exact_step")
        inv_ups = inverse(ups)

        def psi(t):
            return compose(inv_ups, compose(phi_map(t, dt), ups))

        a, b = random_pose(rng, 1.0), random_pose(rng, 1.0)
        lhs = psi(compose(a, b))
        rhs = compose(psi(a), psi(b))
        worst = max(worst, frob(lhs.as_matrix(), rhs.as_matrix()))
    assert worst < 1e-11


def test_riccati_matches_exact_product_covariance():
    # Sample eta sequences, push them through the exact product formula and
    # compare the sample covariance against the Riccati recursion.
    rng = np.random.default_rng(66)
    dt = 0.01
    k = 20
    noise = NoiseDensities(0.005, 0.02)
    samples = [random_sample(rng, dt) for _ in range(k)]
    f_seq = [step_matrix(upsilon_step(u, "exact_step"), dt) for u in samples]
    gyro = np.stack([u.gyro for u in samples])
    accel = np.stack([u.accel for u in samples])
    sigma = riccati_covariance(gyro, accel, dt, noise)
    draws = 4000
    xis = np.empty((draws, 9))
    std9 = np.concatenate([noise.gyro_std * dt, noise.accel_std * dt, np.zeros(3)])
    for i in range(draws):
        etas = std9 * rng.standard_normal((k, 9))
        xis[i] = exact_error_product(np.zeros(9), list(etas), f_seq)
    sample_cov = np.cov(xis.T)
    assert frob(sample_cov, sigma) / np.linalg.norm(sigma) < 0.10


def test_monte_carlo_zero_noise_gives_zero_errors():
    sc = Scenario("straight", {"speed": 1.0}, 0.5, 0.01, seed=3)
    cloud = monte_carlo_endpoint(sc, NoiseDensities.zero(), 5, seed=3)
    assert np.max(np.abs(cloud.xis)) < 1e-10


def test_monte_carlo_deterministic_and_chunk_independent(monkeypatch):
    sc = Scenario("straight", {"speed": 1.0}, 0.3, 0.01, seed=11)
    noise = NoiseDensities(0.05, 0.05)
    a = monte_carlo_endpoint(sc, noise, 50, seed=11)
    b = monte_carlo_endpoint(sc, noise, 50, seed=11)
    np.testing.assert_array_equal(a.poss, b.poss)
    monkeypatch.setattr(unc, "_MC_CHUNK", 7)
    c = monte_carlo_endpoint(sc, noise, 50, seed=11)
    np.testing.assert_array_equal(a.poss, c.poss)
    np.testing.assert_array_equal(a.rots, c.rots)


def test_monte_carlo_banana_curves_downward():
    # Straight-and-level flight with gyro-dominant noise: the endpoint cloud
    # sags toward -z and the sag grows with |lateral|.
    sc = Scenario("straight", {"speed": 1.0}, 1.0, 0.01, seed=21)
    noise = NoiseDensities(0.1, 0.0005)
    cloud = monte_carlo_endpoint(sc, noise, 4000, seed=21)
    fit = banana_fit(cloud.poss, along=[1.0, 0.0, 0.0], out=[0.0, 0.0, 1.0])
    assert fit["curvature"] < 0.0
    mean_sag = float(np.mean(cloud.poss[:, 2] - cloud.nominal.pos[2]))
    assert mean_sag < 0.0


def test_sampled_clouds_reproduce_their_gaussians():
    rng = np.random.default_rng(67)
    cov = np.diag([1e-4] * 3 + [1e-2] * 3 + [1e-2] * 3)
    gauss = ConcentratedGaussian(random_pose(rng), cov)
    cloud = sample_exponential_cloud(gauss, 20000, seed=5)
    assert frob(np.cov(cloud.xis.T), cov) / np.linalg.norm(cov) < 0.05
    mean2, cov2 = random_pose(rng), np.diag([1e-4] * 3 + [4e-2] * 6)
    cloud2 = sample_additive_cloud(mean2, cov2, 20000, seed=6)
    dp = cloud2.poss - mean2.pos
    assert frob(np.cov(dp.T), cov2[6:, 6:]) / np.linalg.norm(cov2[6:, 6:]) < 0.05


def test_naive_zero_noise_keeps_zero_cov():
    sc = Scenario("straight", {"speed": 1.0}, 0.5, 0.01, seed=1)
    log, truth = synthesize(sc)
    samples = [ImuSample(g, a, log.dt) for g, a in zip(log.gyro, log.accel)]
    mean, cov = naive_additive_propagate(truth.pose(0), np.zeros((9, 9)),
                                         samples, NoiseDensities.zero())
    assert np.all(cov == 0.0)
    assert frob(mean.as_matrix(), truth.final_pose().as_matrix()) < 1e-10


def test_naive_jacobian_matches_finite_differences():
    rng = np.random.default_rng(68)
    from extpose.se23 import so3_exp, so3_log

    earth = EarthModel.flat()
    t_bar = random_pose(rng)
    u = random_sample(rng)

    def step(t):
        return noise_free_step(t, u, earth)

    t_next = step(t_bar)
    h = 1e-6
    jac = np.empty((9, 9))
    for j in range(9):
        e = np.zeros(9)
        e[j] = h

        def perturbed(sign):
            d = sign * e
            t = ExtendedPose(t_bar.rot @ so3_exp(d[:3]), t_bar.vel + d[3:6],
                             t_bar.pos + d[6:9])
            out = step(t)
            return np.concatenate([so3_log(t_next.rot.T @ out.rot),
                                   out.vel - t_next.vel, out.pos - t_next.pos])

        jac[:, j] = (perturbed(1.0) - perturbed(-1.0)) / (2 * h)
    assert np.max(np.abs(jac - naive_step_jacobian(t_bar.rot, u))) < 1e-5


def test_naive_dispersion_stays_planar():
    # Straight-and-level with gyro-only noise: the naive model predicts no
    # vertical position uncertainty at all.
    sc = Scenario("straight", {"speed": 1.0}, 1.0, 0.01, seed=9)
    log, truth = synthesize(sc)
    samples = [ImuSample(g, a, log.dt) for g, a in zip(log.gyro, log.accel)]
    _, cov = naive_additive_propagate(truth.pose(0), np.zeros((9, 9)), samples,
                                      NoiseDensities(0.1, 0.0))
    assert cov[8, 8] < 1e-18
    assert cov[6, 6] > 1e-7  # in-plane spread is present


def test_mc_sample_mean_is_small():
    sc = Scenario("straight", {"speed": 1.0}, 1.0, 0.01, seed=13)
    noise = NoiseDensities(0.05, 0.05)
    n = 20000
    cloud = monte_carlo_endpoint(sc, noise, n, seed=13)
    se = np.std(cloud.xis, axis=0) / np.sqrt(n)
    assert np.all(np.abs(np.mean(cloud.xis, axis=0)) <= 5.0 * se)
