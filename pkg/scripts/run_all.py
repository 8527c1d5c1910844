"""Run every experiment config in a directory, optionally with a reduced trial count."""
import argparse
import dataclasses
import time
from pathlib import Path

from rgmp.config import load_config
from rgmp.experiments import run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--configs", type=Path, default=Path(__file__).resolve().parent.parent / "configs")
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument("--trials", type=int, help="override every config's trial count")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--only", nargs="*", help="experiment names to run")
    args = parser.parse_args()

    for path in sorted(args.configs.glob("*.yaml")):
        cfg = load_config(path)
        if args.only and cfg.experiment not in args.only:
            continue
        changes = {"output": str(args.out / cfg.experiment)}
        if args.trials:
            changes["trials"] = args.trials
        cfg = dataclasses.replace(cfg, **changes)
        start = time.perf_counter()
        paths = run_experiment(cfg, threads=args.threads, gnuplot=True)
        print(f"{cfg.experiment:<20s} {time.perf_counter() - start:7.1f}s  -> {paths[0].parent}")


if __name__ == "__main__":
    main()
