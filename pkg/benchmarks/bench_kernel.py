"""Rounds per second of the compiled and pure-Python round loops.

Usage: python3 benchmarks/bench_kernel.py [--rounds N] [--n N]
"""

import argparse
import time

import numpy as np

from timing_sim import _backend
from timing_sim.latency import ExplicitMatrix
from timing_sim.protocol import ProtocolParams
from timing_sim.rewards import RewardParams
from timing_sim.simulator import SimConfig, run_replication
from timing_sim.strategies import StrategyProfile


def bench(cfg, run_chunk, rounds):
    t0 = time.perf_counter()
    run_replication(cfg, 0, rounds=rounds, run_chunk=run_chunk)
    return rounds / (time.perf_counter() - t0)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rounds", type=int, default=20_000)
    p.add_argument("--n", type=int, default=100)
    args = p.parse_args()
    n = args.n
    c = -(-2 * n // 3)
    tau = 2500.0
    # fixed latencies isolate the round loop; lognormal adds the sampling cost both backends share
    for dist in ("fixed", "lognormal"):
        cfg = SimConfig(
            ProtocolParams(n, c, c, tau),
            RewardParams.linear(6e-6, 0.005, 1.5, tau),
            ExplicitMatrix(np.full((n, n), 50.0), dist, 0.8),
            StrategyProfile.honest(n),
            rounds=args.rounds,
            replications=1,
        )
        py = bench(cfg, _backend.python_run_chunk, max(1, args.rounds // 10))
        line = f"n={n} {dist:9s} python {py:12,.0f} rounds/s"
        if _backend.compiled_run_chunk is not None:
            comp = bench(cfg, _backend.compiled_run_chunk, args.rounds)
            line += f"  compiled {comp:12,.0f} rounds/s ({comp / py:.1f}x)"
        print(line)


if __name__ == "__main__":
    main()
