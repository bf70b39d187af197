"""Built-in oracle suites behind `extpose validate` and the acceptance tests.

Each check pins one acceptance criterion at its stated tolerance and
reports a measured figure of merit, so a failure names the number that
broke.  The checks rebuild their oracles from scratch (series exponentials,
RK4, re-integration, Monte Carlo) rather than trusting the code under test.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bias import accumulate_bias_jacobian, bias_comparison_experiment, exponential_correction
from .bias_types import BiasUpdate
from .kinematics import (
    EarthModel,
    ImuSample,
    matrices_WUf,
    group_affine_residual,
    rhs_earth,
    rk4_integrate,
)
from .earth import apply_earth, integrate_gamma
from .preint import (
    NoiseDensities,
    apply_flat,
    gamma_flat,
    integrate_stream,
    phi_map,
    propagate_state_stream,
    upsilon_of,
    upsilon_step,
)
from .scenarios import Scenario, synthesize
from .se23 import (
    ExtendedPose,
    adjoint,
    compose,
    exp_se23,
    expm_series,
    hat,
    inverse,
    log_se23,
    tangent,
)
from .uncertainty import (
    ConcentratedGaussian,
    banana_fit,
    exact_error_product,
    monte_carlo_endpoint,
    naive_additive_propagate,
    riccati_covariance,
    sample_additive_cloud,
    sample_exponential_cloud,
    step_matrix,
)

# The two documented operating points (see configs/): the spec's small-noise
# point backs the Riccati/Mahalanobis criterion, the gyro-dominant point
# makes the banana visible against the naive baseline.
CONSISTENCY_NOISE = NoiseDensities(0.05, 0.05)
BANANA_NOISE = NoiseDensities(0.1, 0.0005)
MC_SAMPLES = 20000
MC_SEED = 20200526


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _result(name, passed, detail):
    return CheckResult(name, bool(passed), detail)


def _random_tangent(rng, max_angle=3.0, scale=2.0):
    omega = rng.uniform(-1.0, 1.0, 3)
    omega *= rng.uniform(0.0, max_angle) / max(np.linalg.norm(omega), 1e-12)
    return tangent(omega, rng.uniform(-scale, scale, 3), rng.uniform(-scale, scale, 3))


def _random_pose(rng, scale=5.0):
    t = exp_se23(_random_tangent(rng, 1.5, 0.0))
    t.vel = rng.uniform(-scale, scale, 3)
    t.pos = rng.uniform(-scale, scale, 3)
    return t


# ------------------------------------------------------------------- suites


def check_lie_core_oracle() -> CheckResult:
    rng = np.random.default_rng(100)
    worst_series = 0.0
    for _ in range(1000):
        xi = rng.standard_normal(9)
        xi *= 5.0 * rng.uniform(0.0, 1.0) / np.linalg.norm(xi)
        worst_series = max(worst_series, np.linalg.norm(
            exp_se23(xi).as_matrix() - expm_series(hat(xi), 30)))
    worst_round = 0.0
    for _ in range(1000):
        xi = _random_tangent(rng)
        worst_round = max(worst_round, np.max(np.abs(log_se23(exp_se23(xi)) - xi)))
    worst_adj = 0.0
    for _ in range(200):
        t = _random_pose(rng, 2.0)
        xi = _random_tangent(rng, 1.0)
        lhs = compose(t, compose(exp_se23(xi), inverse(t)))
        rhs = exp_se23(adjoint(t) @ xi)
        worst_adj = max(worst_adj, np.linalg.norm(lhs.as_matrix() - rhs.as_matrix()))
    ok = worst_series < 1e-12 and worst_round < 1e-10 and worst_adj < 1e-10
    return _result("lie-core-oracle", ok,
                   f"series {worst_series:.2e} (<1e-12), roundtrip "
                   f"{worst_round:.2e} (<1e-10), adjoint {worst_adj:.2e} (<1e-10)")


def check_group_affine(primed: bool) -> CheckResult:
    rng = np.random.default_rng(101 + primed)
    earth = (EarthModel.rotating() if primed else EarthModel.flat())
    u = ImuSample(rng.uniform(-1, 1, 3), rng.uniform(-10, 10, 3), 0.01)
    w, umat, f_eval = matrices_WUf(u, earth, primed=primed)

    def g_eval(m):
        return w @ m + f_eval(m) + m @ umat

    worst = 0.0
    for _ in range(100):
        t1, t2 = _random_pose(rng, 10.0), _random_pose(rng, 10.0)
        worst = max(worst, group_affine_residual(g_eval, t1, t2))
    name = "group-affine-primed" if primed else "group-affine-flat"
    return _result(name, worst < 1e-12, f"residual {worst:.2e} (<1e-12)")


def check_prop2_exactness() -> CheckResult:
    rng = np.random.default_rng(102)
    earth = EarthModel.flat()
    worst = 0.0
    for _ in range(100):
        gyro = rng.uniform(-1, 1, (100, 3))
        accel = rng.uniform(-5, 5, (100, 3))
        t0 = _random_pose(rng)
        delta = integrate_stream(gyro, accel, 0.01, "exact_step")
        direct = propagate_state_stream(t0, gyro, accel, 0.01, earth)
        via = apply_flat(delta, t0, earth)
        worst = max(worst, np.linalg.norm(via.as_matrix() - direct.as_matrix()))
    return _result("prop2-exactness", worst < 1e-10, f"gap {worst:.2e} (<1e-10)")


def check_prop3_earth() -> CheckResult:
    earth = EarthModel.rotating()
    dt = 0.01
    n = 6000
    ts = (np.arange(n) + 0.5) * dt
    gyro = np.stack([0.4 * np.sin(0.7 * ts), 0.3 * np.cos(1.1 * ts),
                     0.2 * np.sin(0.3 * ts)], axis=1)
    accel = np.stack([np.cos(0.5 * ts), -0.8 * np.sin(0.9 * ts),
                      9.5 + 0.4 * np.sin(0.2 * ts)], axis=1)
    rng = np.random.default_rng(103)
    t0 = _random_pose(rng)
    delta = integrate_stream(gyro, accel, dt, "exact_step")
    gammas = integrate_gamma(earth, 60.0, dt)
    recon = apply_earth(delta, gammas, t0, earth)
    samples = [ImuSample(g, a, dt) for g, a in zip(gyro, accel)]
    oracle = rk4_integrate(rhs_earth, t0, samples, earth, substeps=10)
    pos_gap = float(np.linalg.norm(recon.pos - oracle.pos))
    vel_gap = float(np.linalg.norm(recon.vel - oracle.vel))
    flat = apply_flat(delta, t0, EarthModel.flat())
    gam0 = integrate_gamma(EarthModel.flat(), 60.0, dt)
    degen = apply_earth(delta, gam0, t0, EarthModel.flat())
    degen_gap = float(np.linalg.norm(degen.as_matrix() - flat.as_matrix()))
    ok = pos_gap < 1e-5 and vel_gap < 1e-6 and degen_gap < 1e-10
    return _result("prop3-coriolis", ok,
                   f"pos {pos_gap:.2e} (<1e-5), vel {vel_gap:.2e} (<1e-6), "
                   f"flat degeneration {degen_gap:.2e} (<1e-10)")


def check_prop4_loglinearity() -> CheckResult:
    rng = np.random.default_rng(104)
    earth = EarthModel.flat()
    worst = 0.0
    for _ in range(1000):
        t_bar = _random_pose(rng, 3.0)
        xi = 0.5 * rng.standard_normal(9)
        u = ImuSample(rng.uniform(-1, 1, 3), rng.uniform(-10, 10, 3), 0.01)
        ups = upsilon_step(u, "exact_step")
        gam = gamma_flat(u.dt, earth)
        lhs = compose(gam, compose(phi_map(compose(t_bar, exp_se23(xi)), u.dt), ups))
        t_next = compose(gam, compose(phi_map(t_bar, u.dt), ups))
        rhs = compose(t_next, exp_se23(step_matrix(ups, u.dt) @ xi))
        worst = max(worst, np.linalg.norm(lhs.as_matrix() - rhs.as_matrix()))
    return _result("prop4-loglinear", worst < 1e-11, f"gap {worst:.2e} (<1e-11)")


def check_prop5_product() -> CheckResult:
    rng = np.random.default_rng(105)
    dt = 0.01
    worst = 0.0
    for _ in range(100):
        f_seq = []
        etas = []
        for _ in range(50):
            u = ImuSample(rng.uniform(-1, 1, 3), rng.uniform(-10, 10, 3), dt)
            f_seq.append(step_matrix(upsilon_step(u, "exact_step"), dt))
            etas.append(0.01 * rng.standard_normal(9))
        xi0 = 0.02 * rng.standard_normal(9)
        product = exact_error_product(xi0, etas, f_seq)
        xi = xi0
        for f, eta in zip(f_seq, etas):
            xi = log_se23(compose(exp_se23(f @ xi), exp_se23(eta)))
        worst = max(worst, np.linalg.norm(product - xi))
    return _result("prop5-product", worst < 1e-10, f"gap {worst:.2e} (<1e-10)")


def _consistency_setup(noise):
    scenario = Scenario("straight", {"speed": 1.0}, 1.0, 0.01, seed=MC_SEED)
    cloud = monte_carlo_endpoint(scenario, noise, MC_SAMPLES, MC_SEED)
    log, _ = synthesize(scenario)
    cov = riccati_covariance(log.gyro, log.accel, log.dt, noise)
    return scenario, log, cloud, cov


def check_riccati_consistency() -> CheckResult:
    _, _, cloud, cov = _consistency_setup(CONSISTENCY_NOISE)
    sample_cov = np.cov(cloud.xis.T)
    rel = float(np.linalg.norm(sample_cov - cov) / np.linalg.norm(cov))
    maha = float(np.mean(np.einsum("ij,jk,ik->i", cloud.xis,
                                   np.linalg.inv(cov), cloud.xis)))
    ok = rel < 0.15 and 8.0 <= maha <= 10.0
    return _result("riccati-consistency", ok,
                   f"rel frobenius {rel:.3f} (<0.15), mahalanobis {maha:.2f} "
                   f"(in [8,10])")


def check_banana() -> CheckResult:
    scenario, log, cloud, cov = _consistency_setup(BANANA_NOISE)
    truth_poses = cloud.poss
    se23_cloud = sample_exponential_cloud(
        ConcentratedGaussian(cloud.nominal, cov), MC_SAMPLES, MC_SEED)
    samples = [ImuSample(g, a, log.dt) for g, a in zip(log.gyro, log.accel)]
    _, truth = synthesize(scenario)
    nmean, ncov = naive_additive_propagate(truth.pose(0), np.zeros((9, 9)),
                                           samples, BANANA_NOISE, scenario.earth)
    naive_cloud = sample_additive_cloud(nmean, ncov, MC_SAMPLES, MC_SEED)
    along = np.array([1.0, 0.0, 0.0])
    out = np.array([0.0, 0.0, 1.0])
    fit_truth = banana_fit(truth_poses, along, out)
    fit_se23 = banana_fit(se23_cloud.poss, along, out)
    fit_naive = banana_fit(naive_cloud.poss, along, out)
    sag_truth = float(np.mean(truth_poses @ out) - cloud.nominal.pos @ out)
    sag_se23 = float(np.mean(se23_cloud.poss @ out) - cloud.nominal.pos @ out)
    sign_ok = np.sign(fit_truth["curvature"]) == np.sign(fit_se23["curvature"])
    sag_rel = abs(sag_se23 - sag_truth) / abs(sag_truth)
    ratio = fit_naive["out_of_plane_std"] / fit_truth["out_of_plane_std"]
    ok = sign_ok and sag_rel < 0.25 and ratio < 0.5
    return _result("banana-dispersion", ok,
                   f"curvature sign {'match' if sign_ok else 'MISMATCH'} "
                   f"(truth {fit_truth['curvature']:+.3f}, model "
                   f"{fit_se23['curvature']:+.3f}), sag rel {sag_rel:.3f} "
                   f"(<0.25), naive/truth out-of-plane {ratio:.3f} (<0.5)")


def check_bias_accel_exact() -> CheckResult:
    rng = np.random.default_rng(106)
    dt = 0.01
    gyro = rng.uniform(-0.5, 0.5, (100, 3))
    accel = rng.uniform(-10, 10, (100, 3))
    delta = integrate_stream(gyro, accel, dt, "exact_step")
    delta = replace(delta, bias_jac=accumulate_bias_jacobian(gyro, accel, dt,
                                                             "refined"),
                    jac_flavor="refined")
    worst = 0.0
    for mag in (0.1, 1.0, 10.0):
        dba = rng.standard_normal(3)
        dba *= mag / np.linalg.norm(dba)
        db = BiasUpdate.from_parts(np.zeros(3), dba)
        corrected = exponential_correction(delta, db)
        target = integrate_stream(gyro, accel + dba, dt, "exact_step")
        worst = max(worst,
                    np.linalg.norm(upsilon_of(corrected).as_matrix()
                                   - upsilon_of(target).as_matrix()))
    return _result("bias-accel-exact", worst < 1e-10, f"gap {worst:.2e} (<1e-10)")


def check_bias_gyro_slope() -> CheckResult:
    rng = np.random.default_rng(107)
    dt = 0.01
    gyro = rng.uniform(-0.5, 0.5, (100, 3))
    accel = rng.uniform(-10, 10, (100, 3))
    delta = integrate_stream(gyro, accel, dt, "exact_step")
    delta = replace(delta, bias_jac=accumulate_bias_jacobian(gyro, accel, dt,
                                                             "refined"),
                    jac_flavor="refined")
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    mags = [1e-3, 1e-2, 1e-1]
    errs = []
    for mag in mags:
        db = BiasUpdate.from_parts(mag * direction, np.zeros(3))
        corrected = exponential_correction(delta, db)
        target = integrate_stream(gyro + mag * direction, accel, dt, "exact_step")
        errs.append(np.linalg.norm(upsilon_of(corrected).as_matrix()
                                   - upsilon_of(target).as_matrix()))
    slopes = np.diff(np.log10(errs)) / np.diff(np.log10(mags))
    ok = np.all((slopes >= 1.7) & (slopes <= 2.3))
    return _result("bias-gyro-slope", ok,
                   f"log-log slopes {np.round(slopes, 2).tolist()} (in [1.7, 2.3])")


def check_table1_direction() -> CheckResult:
    scenario = Scenario("figure3d", {}, 60.0, 0.01, seed=MC_SEED)
    rows = bias_comparison_experiment(scenario, [10.0, 60.0],
                                      bias_magnitude=(1.0, 100.0),
                                      n_draws=50, seed=MC_SEED)
    by = {(r["T_seconds"], r["method"]): r["velocity_rms"] for r in rows}
    ok10 = by[(10.0, "proposed")] < by[(10.0, "classical")]
    ok60 = by[(60.0, "proposed")] < by[(60.0, "classical")]
    return _result("table1-direction", ok10 and ok60,
                   f"velocity RMS T=10: {by[(10.0, 'proposed')]:.3g} vs "
                   f"{by[(10.0, 'classical')]:.3g} classical; T=60: "
                   f"{by[(60.0, 'proposed')]:.3g} vs {by[(60.0, 'classical')]:.3g}")


_SUITES = {
    "core": (check_lie_core_oracle,),
    "preint": (lambda: check_group_affine(False), check_prop2_exactness),
    "earth": (lambda: check_group_affine(True), check_prop3_earth),
    "uncertainty": (check_prop4_loglinearity, check_prop5_product,
                    check_riccati_consistency, check_banana),
    "bias": (check_bias_accel_exact, check_bias_gyro_slope,
             check_table1_direction),
}


def run_suite(name: str = "all"):
    names = list(_SUITES) if name == "all" else [name]
    results = []
    for suite in names:
        for check in _SUITES[suite]:
            results.append(check())
    return results
