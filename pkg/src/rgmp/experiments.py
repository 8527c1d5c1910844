"""Seeded batch experiments writing plot-ready CSV files.

Each trial's seed is derived from ``(root_seed, point, trial)`` with a
``SeedSequence``, so any row can be replayed alone. Trials may run in a
process pool; rows are always written in trial order.
"""
from __future__ import annotations

import dataclasses
import functools
import math
import subprocess
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, Method, parse_method
from .detectors import cg_detect, disjoint_cluster_detect, mse
from .engine import EngineParams, Residual, run
from .geometry import Instance, NetworkConfig, make_instance, sparse_from_matrix, sparsify_threshold
from .graph import build_graph
from .io import write_rows
from .paper_instance import SNR_DB, load_paper_instance
from .spectral import analyze, damping_predictor, expected_operator, spectral_radius


@functools.lru_cache(maxsize=1)
def build_tag() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def trial_seed(root_seed: int, point: int, trial: int) -> int:
    return int(np.random.SeedSequence([root_seed, point, trial]).generate_state(1, np.uint64)[0])


def network_for_size(base: NetworkConfig, n_rrh: int) -> NetworkConfig:
    radius = math.sqrt(n_rrh / (base.rrh_density_per_km2 * math.pi))
    return dataclasses.replace(base, area_radius_km=radius, n_rrh=None, n_users=None)


def _map(fn, tasks, threads: int):
    if threads <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


@dataclasses.dataclass(frozen=True)
class MethodOutcome:
    verdict: str
    iterations: int
    deltas: list[float]
    estimates: np.ndarray


def run_method(method: Method, graph, sparse, y, params: EngineParams, seed: int,
               full_channel=None) -> MethodOutcome:
    if method.is_cg:
        res = cg_detect(sparse, y, tol=min(params.tolerance, 1e-10), keep_history=True)
        residual = Residual(sparse, y, full_channel, params.residual_matrix)
        deltas = [residual(x) for x in res.history]
        return MethodOutcome("converged", res.solve_iterations, deltas, res.estimates)
    schedule = dataclasses.replace(method.schedule, seed=seed)
    engine = dataclasses.replace(params, damping=method.damping)
    trace = run(graph, sparse, y, schedule, engine, full_channel)
    return MethodOutcome(trace.verdict, trace.iterations, trace.deltas, trace.estimates)


def _trial_instance(network: NetworkConfig, seed: int) -> Instance:
    return make_instance(dataclasses.replace(network, seed=seed))


# -- per-experiment trial functions (module level so they pickle) -----------------

def _paper_trial(task):
    cfg, trial = task
    seed = trial_seed(cfg.root_seed, 0, trial)
    h, y = load_paper_instance()
    sparse = sparse_from_matrix(h, cfg.network.snr_db)
    graph = build_graph(sparse)
    trace_rows, summary_rows = [], []
    for method in cfg.method_objects():
        out = run_method(method, graph, sparse, y, cfg.engine, seed, full_channel=h)
        for it, delta in enumerate(out.deltas, start=1):
            trace_rows.append({"trial": trial, "trial_seed": seed, "method": method.label,
                               "iteration": it, "delta": delta, "verdict": out.verdict})
        summary_rows.append({"trial": trial, "trial_seed": seed, "method": method.label,
                             "verdict": out.verdict, "iterations": out.iterations,
                             "final_delta": out.deltas[-1] if out.deltas else math.nan})
    return trace_rows, summary_rows


def _error_curve_trial(task):
    cfg, trial = task
    seed = trial_seed(cfg.root_seed, 0, trial)
    inst = _trial_instance(cfg.network, seed)
    graph = build_graph(inst.sparse)
    rows = []
    for method in cfg.method_objects():
        out = run_method(method, graph, inst.sparse, inst.y, cfg.engine, seed, inst.channel.entries)
        for it, delta in enumerate(out.deltas, start=1):
            rows.append({"N": graph.N, "K": graph.K, "E": graph.E, "trial": trial, "trial_seed": seed,
                         "method": method.label, "iteration": it, "delta": delta})
    return rows


def _verdict_trial(task):
    """One instance at one network size, every configured method."""
    cfg, point, n_rrh, trial = task
    seed = trial_seed(cfg.root_seed, point, trial)
    inst = _trial_instance(network_for_size(cfg.network, n_rrh), seed)
    graph = build_graph(inst.sparse)
    rows = []
    for method in cfg.method_objects():
        out = run_method(method, graph, inst.sparse, inst.y, cfg.engine, seed, inst.channel.entries)
        rows.append({"N": graph.N, "K": graph.K, "E": graph.E, "trial": trial, "trial_seed": seed,
                     "method": method.label, "verdict": out.verdict, "iterations": out.iterations})
    return rows


def _spectral_trial(task):
    cfg, trial = task
    seed = trial_seed(cfg.root_seed, 0, trial)
    inst = _trial_instance(cfg.network, seed)
    graph = build_graph(inst.sparse)
    ops = analyze(graph, inst.sparse, inst.y)
    omega = ops.omega
    row = {"N": graph.N, "K": graph.K, "E": graph.E, "trial": trial, "trial_seed": seed,
           "rho_omega": spectral_radius(omega),
           "rho_lambda_m2": spectral_radius(0.75 * omega + 0.25 * omega @ omega)}
    if cfg.mc_samples > 0:
        serial = expected_operator(ops, "serial", "monte_carlo", samples=cfg.mc_samples, seed=seed, inverse=False)
        m10 = expected_operator(ops, "blockwise", "monte_carlo", blocks=10, samples=cfg.mc_samples,
                                seed=seed, inverse=False)
        row["rho_lambda_serial"] = spectral_radius(serial.lam)
        row["rho_lambda_m10"] = spectral_radius(m10.lam)
    for eta in cfg.etas:
        row[f"rho_damped_{eta:g}"] = damping_predictor(ops, eta)
    return [row]


def _mse_trial(task):
    cfg, trial = task
    seed = trial_seed(cfg.root_seed, 0, trial)
    inst = _trial_instance(cfg.network, seed)
    rows = []
    for d0 in cfg.thresholds_m:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sparse = sparsify_threshold(inst.channel, d0, inst.config.power, inst.config.noise)
        graph = build_graph(sparse)
        base = {"trial": trial, "trial_seed": seed, "d0_m": d0, "E": graph.E, "setting": "scaled"}
        for method in cfg.method_objects():
            out = run_method(method, graph, sparse, inst.y, cfg.engine, seed, inst.channel.entries)
            rows.append({**base, "method": method.label, "verdict": out.verdict,
                         "mse": mse(inst.x, out.estimates)})
        for area in cfg.cluster_areas_km2:
            res = disjoint_cluster_detect(inst.placement, inst.channel, inst.y, area, d0,
                                          sparse.power, sparse.effective_noise)
            rows.append({**base, "method": f"cluster:{area:g}", "verdict": "direct",
                         "mse": mse(inst.x, res.estimates)})
    return rows


def _damping_trial(task):
    cfg, trial = task
    seed = trial_seed(cfg.root_seed, 0, trial)
    inst = _trial_instance(cfg.network, seed)
    graph = build_graph(inst.sparse)
    ops = analyze(graph, inst.sparse, inst.y)
    rows = []
    for eta in cfg.etas:
        out = run_method(parse_method(f"damped:{eta}"), graph, inst.sparse, inst.y, cfg.engine, seed)
        rows.append({"trial": trial, "trial_seed": seed, "E": graph.E, "eta": eta,
                     "predicted_rho": damping_predictor(ops, eta),
                     "verdict": out.verdict, "iterations": out.iterations})
    return rows


# -- drivers ------------------------------------------------------------------------

def _stamp(rows, cfg):
    tag = build_tag()
    for r in rows:
        r["root_seed"] = cfg.root_seed
        r["build"] = tag
    return rows


def _flatten(chunks):
    return [row for chunk in chunks for row in chunk]


def _frac(values, target="converged"):
    return sum(v == target for v in values) / len(values) if values else math.nan


def _paper_instance(cfg, out, threads):
    results = _map(_paper_trial, [(cfg, t) for t in range(cfg.trials)], threads)
    traces = _flatten(r[0] for r in results)
    summary = _flatten(r[1] for r in results)
    h, y = load_paper_instance()
    sparse = sparse_from_matrix(h, SNR_DB)
    graph = build_graph(sparse)
    ops = analyze(graph, sparse, y)
    serial = expected_operator(ops, "serial", "exact", inverse=False)
    spectra = {"rho_omega": spectral_radius(ops.omega),
               "rho_lambda_m2": spectral_radius(0.75 * ops.omega + 0.25 * ops.omega @ ops.omega),
               "rho_lambda_serial": spectral_radius(serial.lam)}
    return [
        write_rows(out / "paper_instance.csv", _stamp(traces, cfg)),
        write_rows(out / "paper_instance_summary.csv", _stamp(summary, cfg)),
        write_rows(out / "paper_instance_spectra.csv", _stamp([spectra], cfg)),
    ]


def _error_curve(cfg, out, threads):
    rows = _flatten(_map(_error_curve_trial, [(cfg, t) for t in range(cfg.trials)], threads))
    return [write_rows(out / "error_curve.csv", _stamp(rows, cfg))]


def _size_sweep_rows(cfg, threads):
    tasks = [(cfg, p, n, t) for p, n in enumerate(cfg.sizes) for t in range(cfg.trials)]
    return _flatten(_map(_verdict_trial, tasks, threads))


def _convergence_prob(cfg, out, threads):
    rows = _size_sweep_rows(cfg, threads)
    methods = cfg.method_objects()
    summary = []
    for n in cfg.sizes:
        at_n = [r for r in rows if r["N"] == n]
        entry = {"N": n, "trials": cfg.trials, "mean_K": float(np.mean([r["K"] for r in at_n]))}
        for m in methods:
            entry[f"{m.tag}_frac"] = _frac([r["verdict"] for r in at_n if r["method"] == m.label])
        summary.append(entry)
    return [
        write_rows(out / "convergence_prob_trials.csv", _stamp(rows, cfg)),
        write_rows(out / "convergence_prob.csv", _stamp(summary, cfg)),
    ]


def _iterations_vs_size(cfg, out, threads):
    rows = _size_sweep_rows(cfg, threads)
    summary = []
    for n in cfg.sizes:
        for m in cfg.method_objects():
            sel = [r for r in rows if r["N"] == n and r["method"] == m.label]
            done = [r["iterations"] for r in sel if r["verdict"] == "converged"]
            summary.append({"N": n, "method": m.label, "trials": len(sel),
                            "converged_frac": _frac([r["verdict"] for r in sel]),
                            "median_iterations": float(np.median(done)) if done else math.nan,
                            "mean_E": float(np.mean([r["E"] for r in sel]))})
    return [
        write_rows(out / "iterations_vs_size_trials.csv", _stamp(rows, cfg)),
        write_rows(out / "iterations_vs_size.csv", _stamp(summary, cfg)),
    ]


def _spectral_cdf(cfg, out, threads):
    rows = _flatten(_map(_spectral_trial, [(cfg, t) for t in range(cfg.trials)], threads))
    columns = [c for c in rows[0] if c.startswith("rho_")]
    grid = np.round(np.arange(0.0, 2.0001, 0.01), 2)
    cdf = []
    for g in grid:
        entry = {"rho": float(g)}
        for c in columns:
            entry[f"cdf_{c[4:]}"] = float(np.mean([r[c] <= g for r in rows]))
        cdf.append(entry)
    return [
        write_rows(out / "spectral_cdf_trials.csv", _stamp(rows, cfg)),
        write_rows(out / "spectral_cdf.csv", _stamp(cdf, cfg)),
    ]


def _mse_vs_threshold(cfg, out, threads):
    rows = _flatten(_map(_mse_trial, [(cfg, t) for t in range(cfg.trials)], threads))
    summary = []
    for d0 in cfg.thresholds_m:
        for method in dict.fromkeys(r["method"] for r in rows):
            vals = [r["mse"] for r in rows if r["d0_m"] == d0 and r["method"] == method]
            summary.append({"d0_m": d0, "method": method, "trials": len(vals),
                            "mean_mse": float(np.mean(vals)),
                            "stderr": float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0,
                            "setting": "scaled"})
    return [
        write_rows(out / "mse_vs_threshold_trials.csv", _stamp(rows, cfg)),
        write_rows(out / "mse_vs_threshold.csv", _stamp(summary, cfg)),
    ]


def _damping_sweep(cfg, out, threads):
    rows = _flatten(_map(_damping_trial, [(cfg, t) for t in range(cfg.trials)], threads))
    return [write_rows(out / "damping_sweep.csv", _stamp(rows, cfg))]


RUNNERS = {
    "paper_instance": _paper_instance,
    "error_curve": _error_curve,
    "convergence_prob": _convergence_prob,
    "spectral_cdf": _spectral_cdf,
    "iterations_vs_size": _iterations_vs_size,
    "mse_vs_threshold": _mse_vs_threshold,
    "damping_sweep": _damping_sweep,
}

GNUPLOT = {
    "paper_instance": ("paper_instance.csv", "set logscale y\nset xlabel 'iteration'\nset ylabel 'relative error'\n"
                       "plot for [m in METHODS] FILE using 'iteration':(strcol('method') eq m ? column('delta') : 1/0) "
                       "with lines title m\n"),
    "error_curve": ("error_curve.csv", "set logscale y\nset xlabel 'iteration'\nset ylabel 'relative error'\n"
                    "plot for [m in METHODS] FILE using 'iteration':(strcol('method') eq m ? column('delta') : 1/0) "
                    "with lines title m\n"),
    "spectral_cdf": ("spectral_cdf.csv", "set xlabel 'spectral radius'\nset ylabel 'CDF'\n"
                     "plot for [i=2:COLS] FILE using 1:i with steps title columnhead(i)\n"),
    "convergence_prob": ("convergence_prob.csv", "set xlabel 'N'\nset ylabel 'P(converge)'\n"
                         "plot for [i=4:COLS] FILE using 1:i with linespoints title columnhead(i)\n"),
    "iterations_vs_size": ("iterations_vs_size.csv", "set xlabel 'N'\nset ylabel 'median iterations'\n"
                           "plot for [m in METHODS] FILE using 'N':(strcol('method') eq m ? column('median_iterations') : 1/0) "
                           "with linespoints title m\n"),
    "mse_vs_threshold": ("mse_vs_threshold.csv", "set xlabel 'd0 (m)'\nset ylabel 'MSE'\n"
                         "plot for [m in METHODS] FILE using 'd0_m':(strcol('method') eq m ? column('mean_mse') : 1/0) "
                         "with linespoints title m\n"),
    "damping_sweep": ("damping_sweep.csv", "set xlabel 'predicted rho'\nset ylabel 'iterations'\n"
                      "plot FILE using 'predicted_rho':'iterations' with points notitle\n"),
}


def write_gnuplot(cfg: ExperimentConfig, out: Path) -> Path:
    csv_name, body = GNUPLOT[cfg.experiment]
    methods = list(cfg.methods)
    if cfg.experiment == "mse_vs_threshold":
        methods += [f"cluster:{a:g}" for a in cfg.cluster_areas_km2]
    n_cols = 2 + 2 * len(cfg.etas) + 4
    header = (f"set datafile separator ','\nset key autotitle columnhead\nFILE = '{csv_name}'\n"
              f"METHODS = \"{' '.join(methods)}\"\nCOLS = {n_cols}\n")
    path = out / f"{cfg.experiment}.gp"
    path.write_text(header + body)
    return path


def run_experiment(cfg: ExperimentConfig, threads: int = 1, gnuplot: bool = False) -> list[Path]:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    paths = RUNNERS[cfg.experiment](cfg, out, threads)
    config_path = out / f"{cfg.experiment}.config.yaml"
    config_path.write_text(cfg.to_yaml())
    paths.append(config_path)
    if gnuplot:
        paths.append(write_gnuplot(cfg, out))
    return paths
