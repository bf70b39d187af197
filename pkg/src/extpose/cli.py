"""Command-line harness: scenario synthesis, preintegration runs and
experiments, all driven by a single strict JSON config.

Exit codes: 0 success, 1 validation failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io
from .bias import bias_comparison_experiment
from .bias_types import BiasState
from .earth import gamma_to_dict, integrate_gamma
from .factors import preintegrate_full
from .io import BadInput
from .kinematics import EarthModel
from .preint import (
    NoiseDensities,
    apply_flat,
    delta_from_dict,
    delta_to_dict,
)
from .scenarios import Scenario, ScenarioError, synthesize
from .se23 import compose, exp_se23
from .uncertainty import banana_experiment, total_step_matrix

_SCENARIO_KEYS = {"kind", "params", "duration", "dt", "gravity", "earth_rate",
                  "noise", "bias", "seed"}
_NOISE_KEYS = {"gyro_std", "accel_std"}
_BIAS_KEYS = {"gyro", "accel"}
_MC_KEYS = {"n_samples"}
_BC_KEYS = {"durations", "gyro_mag_deg_s", "accel_mag_mg", "n_draws"}
_TOP_KEYS = {"scenario", "montecarlo", "bias_compare", "ref_bias"}

_STREAM_SIMULATE = 5


def _reject_unknown(data: dict, allowed: set, where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise BadInput(f"unknown config keys in {where}: {sorted(unknown)}")


def parse_config(data: dict) -> dict:
    """Validate the config document; unknown keys are a hard error."""
    if not isinstance(data, dict):
        raise BadInput("config must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "top level")
    if "scenario" not in data:
        raise BadInput("config needs a 'scenario' section")
    sc = data["scenario"]
    _reject_unknown(sc, _SCENARIO_KEYS, "scenario")
    noise_doc = sc.get("noise", {})
    _reject_unknown(noise_doc, _NOISE_KEYS, "scenario.noise")
    bias_doc = sc.get("bias", {})
    _reject_unknown(bias_doc, _BIAS_KEYS, "scenario.bias")
    try:
        earth = EarthModel(np.asarray(sc.get("gravity", [0.0, 0.0, -9.81]), float),
                           np.asarray(sc.get("earth_rate", [0.0, 0.0, 0.0]), float))
        noise = NoiseDensities(noise_doc.get("gyro_std", 0.0),
                               noise_doc.get("accel_std", 0.0))
        bias = BiasState(bias_doc.get("gyro", np.zeros(3)),
                         bias_doc.get("accel", np.zeros(3)))
        scenario = Scenario(sc.get("kind", "straight"), sc.get("params", {}),
                            float(sc["duration"]), float(sc["dt"]),
                            earth, noise, bias, sc.get("seed", 0))
    except (KeyError, ScenarioError, ValueError, TypeError) as exc:
        raise BadInput(f"bad scenario: {exc}") from exc
    out = {"scenario": scenario}
    mc = data.get("montecarlo", {})
    _reject_unknown(mc, _MC_KEYS, "montecarlo")
    out["n_samples"] = int(mc.get("n_samples", 20000))
    bc = data.get("bias_compare", {})
    _reject_unknown(bc, _BC_KEYS, "bias_compare")
    out["bias_compare"] = {
        "durations": [float(t) for t in bc.get("durations", [1.0, 10.0, 60.0])],
        "magnitude": (float(bc.get("gyro_mag_deg_s", 1.0)),
                      float(bc.get("accel_mag_mg", 100.0))),
        "n_draws": int(bc.get("n_draws", 50)),
    }
    rb = data.get("ref_bias", {})
    _reject_unknown(rb, _BIAS_KEYS, "ref_bias")
    out["ref_bias"] = BiasState(rb.get("gyro", np.zeros(3)),
                                rb.get("accel", np.zeros(3)))
    return out


def _load_config(path) -> dict:
    return parse_config(io.read_json(path))


def _corrupt_log(log, noise, bias, seed):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_STREAM_SIMULATE, 0))
    rng = np.random.Generator(np.random.PCG64(ss))
    eta = rng.standard_normal((len(log), 6))
    gyro = log.gyro - bias.gyro - noise.gyro_std * eta[:, :3]
    accel = log.accel - bias.accel - noise.accel_std * eta[:, 3:]
    from .scenarios import ImuLog

    return ImuLog(log.t, gyro, accel, log.dt)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    sc = cfg["scenario"]
    log, truth = synthesize(sc)
    measured = _corrupt_log(log, sc.noise, sc.bias, sc.seed)
    io.write_imu_csv(args.imu_out, measured)
    io.write_truth_csv(args.truth_out, truth)
    print(f"wrote {len(measured)} samples to {args.imu_out} "
          f"and {len(truth.t)} poses to {args.truth_out}")
    return 0


def cmd_preintegrate(args) -> int:
    cfg = _load_config(args.config)
    sc = cfg["scenario"]
    log = io.read_imu_csv(args.imu)
    delta = preintegrate_full(log.gyro, log.accel, log.dt, mode=args.mode,
                              noise=sc.noise, ref_bias=cfg["ref_bias"])
    io.write_json(args.out, delta_to_dict(delta))
    msgs = [f"wrote factor ({delta.duration:g} s, mode {args.mode}) to {args.out}"]
    if args.earth:
        gammas = integrate_gamma(sc.earth, delta.duration, log.dt)
        gamma_path = args.gamma_out or (str(args.out) + ".gamma.json")
        io.write_json(gamma_path, gamma_to_dict(gammas))
        msgs.append(f"wrote Earth-rate flow to {gamma_path}")
    print("; ".join(msgs))
    return 0


def cmd_propagate(args) -> int:
    cfg = _load_config(args.config)
    sc = cfg["scenario"]
    if not sc.earth.is_flat:
        raise BadInput("propagate handles the flat model; Earth-rate "
                       "reconstruction goes through apply_earth with the "
                       "gamma sidecar")
    delta = delta_from_dict(io.read_json(args.delta))
    mean0, cov0 = io.gaussian_from_dict(io.read_json(args.prior))
    mean = apply_flat(delta, mean0, sc.earth)
    f_tot = total_step_matrix(delta)
    cov = f_tot @ cov0 @ f_tot.T + delta.cov
    io.write_json(args.out, io.gaussian_to_dict(mean, 0.5 * (cov + cov.T)))
    print(f"wrote propagated gaussian to {args.out}")
    return 0


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args.config)
    sc = cfg["scenario"]
    if np.any(sc.bias.as_vector() != 0.0):
        raise BadInput("montecarlo assumes zero bias in the scenario")
    if not sc.earth.is_flat:
        raise BadInput("montecarlo runs on the flat model")
    clouds = banana_experiment(sc, sc.noise, cfg["n_samples"], sc.seed)
    io.write_cloud_csv(args.out, clouds)
    print(f"wrote {3 * cfg['n_samples']} rows to {args.out}")
    return 0


def cmd_bias_compare(args) -> int:
    cfg = _load_config(args.config)
    sc = cfg["scenario"]
    bc = cfg["bias_compare"]
    rows = bias_comparison_experiment(sc, bc["durations"], bc["magnitude"],
                                      bc["n_draws"], sc.seed)
    io.write_rms_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_validate(args) -> int:
    from . import checks

    results = checks.run_suite(args.suite)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:<{width}}  {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extpose",
        description="Extended-pose kinematics harness: simulation, "
                    "preintegration and validation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="scenario -> imu.csv + truth.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--imu-out", required=True)
    p.add_argument("--truth-out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preintegrate", help="imu.csv -> delta.json")
    p.add_argument("--config", required=True)
    p.add_argument("--imu", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["first_order", "exact_step"],
                   default="exact_step")
    p.add_argument("--earth", action="store_true",
                   help="also integrate and write the Earth-rate flow")
    p.add_argument("--gamma-out", default=None)
    p.set_defaults(func=cmd_preintegrate)

    p = sub.add_parser("propagate", help="delta.json + prior -> gaussian.json")
    p.add_argument("--config", required=True)
    p.add_argument("--delta", required=True)
    p.add_argument("--prior", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("montecarlo", help="config -> cloud.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("bias-compare", help="config -> rms.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bias_compare)

    p = sub.add_parser("validate", help="run a built-in oracle suite")
    p.add_argument("--suite", default="all",
                   choices=["core", "preint", "earth", "uncertainty", "bias", "all"])
    p.set_defaults(func=cmd_validate)
    return parser


def run_subcommand(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (BadInput, ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_subcommand(sys.argv[1:]))
