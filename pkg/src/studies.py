"""
Study orchestration: resource validation, system validation, convergence
robustness and scalability.

Each study solves the harmonic power flow, optionally runs the time-domain
engine for comparison, and writes CSV tables and SVG charts to its output
directory.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .cider_resources import FOLLOWING, HarmonicResponse, harmonic_response
from .config import StudyConfig, thread_count
from .exceptions import ModelError, NonConvergenceError, SolverError
from .harmonic_core import SpectralParams
from .hpf_solver import RANDOM, HarmonicPowerFlow, HpfSolution, SolverConfig, spectra_frame
from .network_model import LoadSpec, NetworkSpec, build_hybrid_port_model
from .simulator import SimulationResults, simulate
from .spectral_analysis import compute_kpis, kpi_table
from .visualization import SpectrumPlotter

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"


@dataclass
class StudyResult:
    """Files written by a study and the figures reported in its summary."""
    study: str
    output_dir: str
    files: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)


def write_frame(frame: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def build_responses(net: NetworkSpec, sp: SpectralParams) -> Dict[str, HarmonicResponse]:
    return {r.node: harmonic_response(r.cider, sp) for r in net.resources}


def run_hpf(net: NetworkSpec, sp: SpectralParams, solver: SolverConfig,
            x0: Optional[np.ndarray] = None) -> HpfSolution:
    """Reduce the grid, lift the resources and solve."""
    model = build_hybrid_port_model(net, sp)
    problem = HarmonicPowerFlow(model, build_responses(net, sp), solver, net.base)
    return problem.solve(x0)


def time_hpf(net: NetworkSpec, sp: SpectralParams, solver: SolverConfig,
             repeats: int) -> Tuple[HpfSolution, np.ndarray]:
    """Repeat the full HPF pipeline; returns the last solution and the wall times."""
    times = np.empty(repeats)
    solution = None
    for k in range(repeats):
        start = time.perf_counter()
        solution = run_hpf(net, sp, solver)
        times[k] = time.perf_counter() - start
    return solution, times


def write_diagnostics(path: str, study: str, reason: str,
                      solution: Optional[HpfSolution] = None) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"Study: {study}\n")
        f.write("=" * 50 + "\n\n")
        f.write(f"Failure: {reason}\n")
        if solution is not None:
            f.write(f"Iterations: {solution.iterations}\n")
            f.write(f"Final residual (p.u.): {solution.final_residual:.6e}\n\n")
            f.write("Residual history:\n")
            f.write("-" * 20 + "\n")
            for k, (norm, step) in enumerate(zip(solution.residual_history, solution.steps)):
                f.write(f"{k:4d}  {norm:.6e}  step {step:.4g}\n")
    logger.error("Diagnostics written to %s", path)
    return path


def _check_converged(solution: HpfSolution, out_dir: str, study: str, result: StudyResult) -> None:
    result.files.append(write_frame(solution.residuals_frame(), os.path.join(out_dir, "residuals.csv")))
    if not solution.converged:
        result.files.append(write_diagnostics(os.path.join(out_dir, "diagnostics.txt"), study,
                                              "Newton iteration did not reach the tolerance", solution))
        raise NonConvergenceError(
            f"{study}: no convergence after {solution.iterations} iterations "
            f"(|r|_inf = {solution.final_residual:.3e} p.u.)", solution.residual_history)


def _solve_checked(net: NetworkSpec, cfg: StudyConfig, out_dir: str,
                   result: StudyResult) -> Tuple[HpfSolution, np.ndarray]:
    try:
        solution, times = time_hpf(net, cfg.spectral, cfg.solver, cfg.repeats)
    except SolverError as exc:
        result.files.append(write_diagnostics(os.path.join(out_dir, "diagnostics.txt"), cfg.study, str(exc)))
        raise
    _check_converged(solution, out_dir, cfg.study, result)
    return solution, times


def oracle_comparison(solution: HpfSolution, tds: SimulationResults, net: NetworkSpec,
                      sp: SpectralParams, window: int) -> Tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    """KPI table plus time-domain voltage and current spectra tables."""
    base = solution.base
    tds_v = tds.node_spectra(sp, window)
    tds_i = tds.current_spectra(sp, window)
    reports = [compute_kpis(solution.node_voltages[n], tds_v[n], base.voltage_scale, "voltage", n)
               for n in net.nodes]
    reports += [compute_kpis(solution.currents[n], tds_i[n], base.current_scale, "current", n)
                for n in tds_i]
    return (kpi_table(reports), spectra_frame(tds_v, base.voltage_scale),
            spectra_frame(tds_i, base.current_scale))


def validation_study(cfg: StudyConfig, net: NetworkSpec) -> StudyResult:
    """HPF on a network, with the time-domain comparison when enabled."""
    out_dir = cfg.output_dir
    result = StudyResult(cfg.study, out_dir)
    sp = cfg.spectral
    solution, times = _solve_checked(net, cfg, out_dir, result)

    hpf_v = solution.to_frame("voltage")
    hpf_i = solution.to_frame("current")
    result.files.append(write_frame(hpf_v, os.path.join(out_dir, "spectra_hpf.csv")))
    result.files.append(write_frame(hpf_i, os.path.join(out_dir, "currents_hpf.csv")))
    sequences = solution.sequence_ratios()
    result.files.append(write_frame(sequences, os.path.join(out_dir, "sequences.csv")))

    timing = [{"method": "hpf", "mean_s": times.mean(), "std_s": times.std(), "runs": len(times)}]
    result.summary.update(iterations=solution.iterations, final_residual_pu=solution.final_residual,
                          hpf_mean_s=float(times.mean()), hpf_std_s=float(times.std()))

    plotter = SpectrumPlotter(out_dir)
    tds_v = tds_i = None
    if cfg.with_oracle:
        tds = simulate(net, sp, cfg.tds)
        kpi, tds_v, tds_i = oracle_comparison(solution, tds, net, sp, cfg.tds.steady_state_window)
        result.files.append(write_frame(tds_v, os.path.join(out_dir, "spectra_tds.csv")))
        result.files.append(write_frame(tds_i, os.path.join(out_dir, "currents_tds.csv")))
        result.files.append(write_frame(kpi, os.path.join(out_dir, "kpi.csv")))
        tds_time = tds.window_wall_time + tds.dft_wall_time
        timing.append({"method": "tds", "mean_s": tds_time, "std_s": 0.0, "runs": 1})
        for quantity in ("voltage", "current"):
            rows = kpi[kpi.quantity == quantity]
            if len(rows):
                result.summary[f"{quantity}_e_abs_max_pu"] = float(rows.e_abs_pu.max())
                result.summary[f"{quantity}_e_arg_max_deg"] = float(rows.e_arg_deg.max())
                result.files.append(plotter.plot_errors(kpi, quantity, f"{quantity} errors",
                                                        os.path.join(out_dir, f"errors_{quantity}.svg")))
        result.summary.update(tds_steady_state=tds.steady_state, tds_window_s=tds_time)

    result.files.append(write_frame(pd.DataFrame(timing), os.path.join(out_dir, "timing.csv")))
    for node in solution.port_nodes:
        result.files.append(plotter.plot_spectrum(hpf_v, tds_v, node, "voltage", f"voltage spectrum {node}",
                                                  os.path.join(out_dir, f"spectrum_V_{node}.svg")))
        result.files.append(plotter.plot_spectrum(hpf_i, tds_i, node, "current", f"current spectrum {node}",
                                                  os.path.join(out_dir, f"spectrum_I_{node}.svg")))
    return result


def robustness_runs(net: NetworkSpec, cfg: StudyConfig,
                    threads: int = 1) -> List[Tuple[int, HpfSolution]]:
    """Solve from random initial points, one seed per run."""
    seeds = [cfg.seed + k for k in range(cfg.robustness_runs)]

    def solve_seed(seed: int) -> Tuple[int, HpfSolution]:
        solver = replace(cfg.solver, init=RANDOM, seed=seed)
        return seed, run_hpf(net, cfg.spectral, solver)

    if threads <= 1:
        return [solve_seed(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(solve_seed, seeds))


def robustness_study(cfg: StudyConfig, net: NetworkSpec) -> StudyResult:
    """
    Random initialisations must all converge to the same operating point.

    Raises:
        NonConvergenceError: If any run fails to converge
    """
    out_dir = cfg.output_dir
    result = StudyResult(cfg.study, out_dir)
    runs = robustness_runs(net, cfg, thread_count())

    reference = next((s.x for _, s in runs if s.converged), None)
    rows = []
    for k, (seed, solution) in enumerate(runs):
        run_dir = os.path.join(out_dir, f"run_{k:03d}")
        write_frame(solution.residuals_frame(), os.path.join(run_dir, "residuals.csv"))
        diff = np.nan if reference is None or not solution.converged \
            else float(np.max(np.abs(solution.x - reference), initial=0.0))
        rows.append({"run": k, "seed": seed, "converged": solution.converged,
                     "iterations": solution.iterations, "final_residual_pu": solution.final_residual,
                     "max_diff_pu": diff})
    table = pd.DataFrame(rows)
    result.files.append(write_frame(table, os.path.join(out_dir, "robustness.csv")))
    result.summary.update(runs=len(rows), converged=int(table.converged.sum()),
                          max_diff_pu=float(table.max_diff_pu.max()))

    failed = table[~table.converged]
    if len(failed):
        first = runs[int(failed.run.iloc[0])][1]
        result.files.append(write_diagnostics(os.path.join(out_dir, "diagnostics.txt"), cfg.study,
                                              f"{len(failed)} of {len(rows)} random starts did not converge",
                                              first))
        raise NonConvergenceError(f"robustness: {len(failed)} runs did not converge",
                                  first.residual_history)
    return result


def replace_with_loads(net: NetworkSpec, nodes: Sequence[str]) -> NetworkSpec:
    """Swap the following resources at ``nodes`` for balanced loads of the same apparent power."""
    loads = list(net.loads)
    resources = []
    for r in net.resources:
        if r.node not in nodes:
            resources.append(r)
            continue
        if r.cider.kind != FOLLOWING:
            raise ModelError(f"only following resources can be replaced, {r.node} is {r.cider.kind}")
        P, Q = r.cider.setpoint.P_sigma, r.cider.setpoint.Q_sigma
        S = float(np.hypot(P, Q))
        if not P > 0:
            raise ModelError(f"resource at {r.node} has no active power to convert into a load")
        loads.append(LoadSpec(node=r.node, S=S, pf=P / S, name=f"replaced_{r.node}"))
    return replace(net, loads=tuple(loads), resources=tuple(resources))


def scalability_study(cfg: StudyConfig, net: NetworkSpec) -> StudyResult:
    """HPF timing over h_max and over the number of following resources."""
    out_dir = cfg.output_dir
    result = StudyResult(cfg.study, out_dir)
    rows = []
    replaced = list(cfg.scalability_replace)
    for n_replaced in range(len(replaced) + 1):
        variant = replace_with_loads(net, replaced[:n_replaced])
        n_following = len(variant.following)
        for h_max in cfg.scalability_orders:
            sp = SpectralParams(cfg.spectral.f1, h_max)
            solution, times = time_hpf(variant, sp, cfg.solver, cfg.repeats)
            if not solution.converged:
                result.files.append(write_diagnostics(os.path.join(out_dir, "diagnostics.txt"), cfg.study,
                                                      f"no convergence at h_max = {h_max}", solution))
                raise NonConvergenceError(f"scalability: no convergence at h_max = {h_max}",
                                          solution.residual_history)
            rows.append({"following": n_following, "h_max": h_max, "mean_s": times.mean(),
                         "std_s": times.std(), "runs": len(times), "iterations": solution.iterations})
            logger.info("following=%d h_max=%d: %.4f s +/- %.4f s", n_following, h_max,
                        times.mean(), times.std())
        means = [row["mean_s"] for row in rows if row["following"] == n_following]
        if any(b < a for a, b in zip(means, means[1:])):
            logger.warning("Execution time is not monotonic in h_max with %d following resources",
                           n_following)

    timing = pd.DataFrame(rows)
    result.files.append(write_frame(timing, os.path.join(out_dir, "timing.csv")))
    result.files.append(SpectrumPlotter(out_dir).plot_timing(
        timing, "h_max", "following", "HPF execution time", os.path.join(out_dir, "timing.svg")))
    result.summary.update(points=len(rows), slowest_s=float(timing.mean_s.max()))
    return result


STUDY_RUNNERS: Dict[str, Callable[[StudyConfig, NetworkSpec], StudyResult]] = {
    "resource_forming": validation_study,
    "resource_following": validation_study,
    "system": validation_study,
    "robustness": robustness_study,
    "scalability": scalability_study,
}


def run_study(cfg: StudyConfig) -> StudyResult:
    """
    Run the configured study and write its artefacts.

    Raises:
        ConfigError: If the network file is invalid
        NonConvergenceError: After writing residuals.csv and diagnostics.txt
    """
    net = cfg.network()
    logger.info("Running study '%s' on '%s' (h_max = %d) into %s", cfg.study, net.name,
                cfg.spectral.h_max, cfg.output_dir)
    os.makedirs(cfg.output_dir, exist_ok=True)
    return STUDY_RUNNERS[cfg.study](cfg, net)
