"""File formats of the harness: CSV streams and JSON documents.

All floats are printed with 17 significant digits so that identical runs
produce byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .scenarios import ImuLog, ScenarioError, TruthLog

IMU_HEADER = "t,wx,wy,wz,ax,ay,az"
TRUTH_HEADER = ("t,r11,r12,r13,r21,r22,r23,r31,r32,r33,vx,vy,vz,px,py,pz")
CLOUD_HEADER = "run_id,model,px,py,pz,xi1,xi2,xi3,xi4,xi5,xi6,xi7,xi8,xi9"
RMS_HEADER = "T_seconds,method,velocity_rms,position_rms"


class BadInput(ValueError):
    """Malformed file or config content."""


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(path, header: str, rows) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_imu_csv(path, log: ImuLog) -> None:
    rows = ([fmt(t)] + [fmt(v) for v in g] + [fmt(v) for v in a]
            for t, g, a in zip(log.t, log.gyro, log.accel))
    _write_rows(path, IMU_HEADER, rows)


def read_imu_csv(path) -> ImuLog:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != IMU_HEADER:
            raise BadInput(f"bad imu.csv header: {header!r}")
        try:
            data = np.array([[float(x) for x in line.split(",")]
                             for line in fh if line.strip()])
        except ValueError as exc:
            raise BadInput(f"bad imu.csv row: {exc}") from exc
    if data.size == 0:
        raise BadInput("imu.csv has no samples")
    if data.shape[1] != 7:
        raise BadInput(f"imu.csv rows need 7 columns, got {data.shape[1]}")
    t = data[:, 0]
    dt = t[1] - t[0] if len(t) > 1 else 0.01
    try:
        return ImuLog(t, data[:, 1:4], data[:, 4:7], dt)
    except ScenarioError as exc:
        raise BadInput(str(exc)) from exc


def write_truth_csv(path, truth: TruthLog) -> None:
    rows = ([fmt(t)] + [fmt(v) for v in r.reshape(-1)]
            + [fmt(v) for v in vel] + [fmt(v) for v in pos]
            for t, r, vel, pos in zip(truth.t, truth.rots, truth.vels, truth.poss))
    _write_rows(path, TRUTH_HEADER, rows)


def read_truth_csv(path) -> TruthLog:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != TRUTH_HEADER:
            raise BadInput(f"bad truth.csv header: {header!r}")
        try:
            data = np.array([[float(x) for x in line.split(",")]
                             for line in fh if line.strip()])
        except ValueError as exc:
            raise BadInput(f"bad truth.csv row: {exc}") from exc
    if data.size == 0 or data.shape[1] != 16:
        raise BadInput("truth.csv needs 16 columns and at least one row")
    return TruthLog(data[:, 0], data[:, 1:10].reshape(-1, 3, 3),
                    data[:, 10:13], data[:, 13:16])


def write_cloud_csv(path, clouds: dict) -> None:
    """``clouds`` maps model name -> EndpointCloud, written in given order."""

    def rows():
        for model, cloud in clouds.items():
            for i in range(len(cloud.poss)):
                yield ([str(i), model] + [fmt(v) for v in cloud.poss[i]]
                       + [fmt(v) for v in cloud.xis[i]])

    _write_rows(path, CLOUD_HEADER, rows())


def write_rms_csv(path, rows) -> None:
    _write_rows(path, RMS_HEADER,
                ([fmt(r["T_seconds"]), r["method"], fmt(r["velocity_rms"]),
                  fmt(r["position_rms"])] for r in rows))


def write_json(path, data: dict) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path, "r", encoding="ascii") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadInput(f"bad JSON in {path}: {exc}") from exc


def gaussian_to_dict(mean, cov) -> dict:
    return {
        "mean": {"rot": mean.rot.reshape(-1).tolist(),
                 "vel": mean.vel.tolist(), "pos": mean.pos.tolist()},
        "cov": np.asarray(cov, float).reshape(-1).tolist(),
    }


def gaussian_from_dict(data: dict):
    from .se23 import ExtendedPose

    try:
        mean = data["mean"]
        pose = ExtendedPose(np.asarray(mean["rot"], float).reshape(3, 3),
                            np.asarray(mean["vel"], float),
                            np.asarray(mean["pos"], float))
        cov = np.asarray(data["cov"], float).reshape(9, 9)
    except (KeyError, ValueError) as exc:
        raise BadInput(f"bad gaussian document: {exc}") from exc
    return pose, cov
