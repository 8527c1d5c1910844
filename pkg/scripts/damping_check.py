"""Compare damped-GMP verdicts with the spectral predictor on random networks."""
import argparse
import dataclasses
import warnings

from rgmp.engine import EngineParams, Schedule, run
from rgmp.geometry import NetworkConfig, make_instance
from rgmp.graph import build_graph
from rgmp.spectral import analyze, damping_predictor


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--etas", type=float, nargs="+", default=[0.3, 0.6, 0.9])
    parser.add_argument("--n-rrh", type=int, default=20)
    parser.add_argument("--n-users", type=int, default=15)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    base = dataclasses.replace(NetworkConfig.for_rrh_count(args.n_rrh), n_rrh=args.n_rrh, n_users=args.n_users)
    print("trial  eta   rho      verdict")
    for t in range(args.trials):
        inst = make_instance(dataclasses.replace(base, seed=args.seed + t))
        graph = build_graph(inst.sparse)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ops = analyze(graph, inst.sparse, inst.y)
            for eta in args.etas:
                trace = run(graph, inst.sparse, inst.y, Schedule.synchronous(),
                            EngineParams(max_iterations=5000, damping=eta))
                print(f"{t:5d}  {eta:.2f}  {damping_predictor(ops, eta):.4f}  {trace.verdict}")


if __name__ == "__main__":
    main()
