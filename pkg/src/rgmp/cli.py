"""Command-line entry point: ``rgmp <experiment> [--config FILE] [overrides]``.

Errors are reported as a single JSON line on stderr with a nonzero exit code.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, default_config, load_config
from .experiments import network_for_size, run_experiment
from .geometry import NetworkConfig, make_instance
from .graph import build_graph
from .io import write_channel, write_edges, write_placement


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config; defaults are used for missing keys")
    p.add_argument("--seed", type=int, help="root seed override")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--trials", type=int, help="trial count override")
    p.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgmp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _add_run_flags(sub.add_parser(name, help=f"run the {name} experiment"))

    inst = sub.add_parser("instance", help="dump one random network as CSV")
    inst.add_argument("--config", type=Path, help="YAML config whose network section is used")
    inst.add_argument("--seed", type=int, default=0)
    inst.add_argument("--n-rrh", type=int, help="size the disc to hold this many RRHs")
    inst.add_argument("--out", default="instance")

    cfg = sub.add_parser("config", help="print the default config of an experiment")
    cfg.add_argument("experiment", choices=EXPERIMENTS)
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else default_config(args.command)
    if cfg.experiment != args.command:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {args.command!r}")
    overrides = {}
    if args.seed is not None:
        overrides["root_seed"] = args.seed
    if args.out is not None:
        overrides["output"] = args.out
    if args.trials is not None:
        overrides["trials"] = args.trials
    return dataclasses.replace(cfg, **overrides)


def _dump_instance(args) -> list[Path]:
    network = load_config(args.config).network if args.config else NetworkConfig()
    if args.n_rrh is not None:
        network = network_for_size(network, args.n_rrh)
    inst = make_instance(dataclasses.replace(network, seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return [
        write_placement(out / "placement.csv", inst.placement),
        write_channel(out / "channel.csv", inst.channel),
        write_edges(out / "edges.csv", build_graph(inst.sparse)),
    ]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "config":
            sys.stdout.write(default_config(args.experiment).to_yaml())
            return 0
        if args.command == "instance":
            paths = _dump_instance(args)
        else:
            if args.threads < 1:
                raise ValueError("--threads must be >= 1")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                paths = run_experiment(_resolve(args), threads=args.threads, gnuplot=args.gnuplot)
    except ConfigError as err:
        print(json.dumps({"error": "config", "message": str(err), "line": err.line}), file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
