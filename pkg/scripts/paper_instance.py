"""Spectra and schedule verdicts on the hard-coded 4x4 instance."""
import argparse

import numpy as np

from rgmp.engine import EngineParams, Schedule, run
from rgmp.geometry import sparse_from_matrix
from rgmp.graph import build_graph
from rgmp.paper_instance import CONVERGENT_TIMES, DIVERGENT_TIMES, SNR_DB, load_paper_instance
from rgmp.spectral import analyze, expected_operator, spectral_radius


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rgmp-seeds", type=int, default=100)
    args = parser.parse_args()

    h, y = load_paper_instance()
    sparse = sparse_from_matrix(h, SNR_DB)
    graph = build_graph(sparse)
    ops = analyze(graph, sparse, y)
    omega = ops.omega
    print(f"rho(Omega)          = {spectral_radius(omega):.4f}")
    print(f"rho(Lambda, M=2)    = {spectral_radius(0.75 * omega + 0.25 * omega @ omega):.4f}")
    serial = expected_operator(ops, "serial", "exact", inverse=False)
    print(f"rho(Lambda, serial) = {spectral_radius(serial.lam):.4f}")

    schedules = {
        "synchronous": Schedule.synchronous(),
        "times " + str(CONVERGENT_TIMES): Schedule.from_times(CONVERGENT_TIMES),
        "times " + str(DIVERGENT_TIMES): Schedule.from_times(DIVERGENT_TIMES),
    }
    for name, sched in schedules.items():
        trace = run(graph, sparse, y, sched, EngineParams())
        print(f"{name:<36s} {trace.verdict:<10s} after {trace.iterations} iterations")
    its = [run(graph, sparse, y, Schedule.randomized(s)) for s in range(args.rgmp_seeds)]
    ok = [t.iterations for t in its if t.verdict == "converged"]
    print(f"rgmp: {len(ok)}/{len(its)} converged, median {np.median(ok):.0f} iterations")


if __name__ == "__main__":
    main()
