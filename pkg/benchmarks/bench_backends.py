"""Benchmark the compiled kernels against the numpy fallback.

Runs the Monte-Carlo-shaped workload (many streams, per-step group updates)
on both backends and reports throughput plus the worst output deviation.

    python benchmarks/bench_backends.py [--samples 4000] [--steps 100]
"""

import argparse
import time

import numpy as np

import extpose._purepy as purepy


def workload(n_samples, n_steps, seed=0):
    rng = np.random.default_rng(seed)
    gyro = rng.uniform(-0.5, 0.5, (n_samples, n_steps, 3))
    accel = rng.uniform(-10.0, 10.0, (n_samples, n_steps, 3))
    return gyro, accel


def run(impl, gyro, accel, dt, gravity):
    t0 = time.perf_counter()
    out = impl.propagate_batch(np.eye(3), np.zeros(3), np.zeros(3),
                               gyro, accel, dt, gravity, True)
    return out, time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=4000)
    parser.add_argument("--steps", type=int, default=100)
    args = parser.parse_args()

    impls = {"python": purepy}
    try:
        import extpose._native as native
        impls["cython"] = native
    except ImportError:
        print("compiled backend not available; benchmarking fallback only")

    gyro, accel = workload(args.samples, args.steps)
    gravity = np.array([0.0, 0.0, -9.81])
    n_updates = args.samples * args.steps
    outputs = {}
    for name, impl in impls.items():
        run(impl, gyro[:64], accel[:64], 0.01, gravity)  # warm-up / JIT caches
        out, elapsed = run(impl, gyro, accel, 0.01, gravity)
        outputs[name] = out
        print(f"{name:>7}: {elapsed:8.3f} s  "
              f"({n_updates / elapsed / 1e6:6.2f} M step-updates/s)")

    if len(outputs) == 2:
        worst = max(np.max(np.abs(a - b))
                    for a, b in zip(outputs["python"], outputs["cython"]))
        print(f"max |python - cython| deviation: {worst:.3e}")


if __name__ == "__main__":
    main()
