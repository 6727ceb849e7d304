# Copyright 2021 The Chemoflow Authors.

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from chemoflow.cli.config import RunConfig, load_config
from chemoflow.diagnostics import (
    classical_estimates,
    decay_step_check,
    discrete_rate,
    explicit_constants,
    fit_decay_rate,
    gradient_control_check,
    lyapunov_step_check,
    reference_rate,
    representation_check,
)
from chemoflow.domain import truncation_check, validate_params
from chemoflow.entropy import lq_norm
from chemoflow.errors import ChemoflowError, ConfigError
from chemoflow.jko import TRAJECTORY_COLUMNS, run_trajectory
from chemoflow.kernels import run_kernel_suite
from chemoflow.stationary import EL_RESIDUAL_TOL, solve_stationary, verify_stationary_bounds

__all__ = [
    "EXIT_OK",
    "EXIT_CHECK_FAILED",
    "EXIT_CONFIG_ERROR",
    "EXIT_SOLVER_ERROR",
    "SimulationSummary",
    "write_csv",
    "write_json",
    "run_simulation",
    "cmd_simulate",
    "cmd_stationary",
    "cmd_kernels_verify",
    "cmd_sweep",
]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_ERROR = 3

FIT_WINDOW_START = 0.5


def write_csv(path: str, columns: Dict[str, Sequence[float]]):
    """Header row, comma separated, 17 significant digits"""
    table = np.column_stack([np.asarray(values, dtype=np.float64) for values in columns.values()])
    np.savetxt(path, table, delimiter=",", header=",".join(columns), comments="", fmt="%.17g")


def _jsonable(value):
    if isinstance(value, dict):
        return {key: _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path: str, data: dict):
    with open(path, "w") as f:
        json.dump(_jsonable(data), f, indent=2, sort_keys=True)
        f.write("\n")


def _fit(traj, quantity: str, p, t_end: float) -> dict:
    try:
        return fit_decay_rate(traj, quantity, (min(FIT_WINDOW_START, t_end), t_end), p).to_dict()
    except ValueError as e:
        return {"quantity": quantity, "error": str(e)}


def _finite_max(values) -> Optional[float]:
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    return float(values.max()) if values.size else None


@dataclass
class SimulationSummary:
    value: Optional[float]
    directory: str
    rate: float
    max_energy_increase: float
    el_residual: float
    passed: bool

    def row(self) -> List[float]:
        return [
            math.nan if self.value is None else self.value,
            self.rate,
            self.max_energy_increase,
            self.el_residual,
        ]


def run_simulation(
    cfg: RunConfig, directory: str, progress: bool = False, value: Optional[float] = None
) -> SimulationSummary:
    """
    Run one trajectory and write ``trajectory.csv``, ``final_state.csv`` and ``report.json``.

    Returns:
        SimulationSummary: fitted rate of ``L``, largest energy increase and pass flag
    """
    os.makedirs(directory, exist_ok=True)
    grid = cfg.build_grid()
    p = cfg.model_params()

    assumptions = validate_params(p, grid)
    if not assumptions.passed:
        failed = [c.name for c in assumptions.checks if c.required and not c.passed]
        raise ConfigError("params", f"standing assumptions violated: {', '.join(failed)}")

    stationary = solve_stationary(p, grid, tol=cfg.solver.stationary_tol)
    initial = cfg.initial_state(grid)
    traj = run_trajectory(initial, p, cfg.jko_config(), cfg.n_steps, stationary.state, progress)

    columns = traj.columns()
    k = cfg.output.every_k_steps
    rows = sorted(set(range(0, len(traj), k)) | {len(traj) - 1})
    write_csv(
        os.path.join(directory, "trajectory.csv"),
        {name: columns[name][rows] for name in TRAJECTORY_COLUMNS},
    )

    final = traj.final
    write_csv(
        os.path.join(directory, "final_state.csv"),
        {"x": grid.centers, "u": final.u.values, "v": final.v.values},
    )

    t_end = traj.t[-1]
    constants = explicit_constants(p, lq_norm(initial.v.values, grid.h, 1.2))
    estimates = classical_estimates(traj)
    lyapunov_steps = lyapunov_step_check(traj)
    gradient = gradient_control_check(traj, constants, p.epsilon)
    fits = {quantity: _fit(traj, quantity, p, t_end) for quantity in ("L", "L_u", "L_v", "H-Hinf")}
    truncation = truncation_check(final)

    report = {
        "config": cfg.to_dict(),
        "n_steps": cfg.n_steps,
        "decay_fits": fits,
        "reference_rate": reference_rate(p),
        "discrete_reference_rate": discrete_rate(2.0 * reference_rate(p), cfg.stepping.tau),
        "constants": constants.to_dict(),
        "gradient_control": gradient.to_dict(),
        "assumptions": assumptions.to_dict(),
        "convexity_unverified": assumptions.convexity_unverified,
        "stationary": stationary.to_dict(),
        "classical_estimates": estimates.to_dict(),
        "lyapunov_steps": [check.to_dict() for check in lyapunov_steps],
        "regularity_ratio_max": _finite_max(traj.reg_ratio),
        "lyapunov_by_entropy_max": _finite_max(traj.lyapunov_by_entropy),
        "representation": representation_check(traj, p).to_dict(),
        "truncation": {
            "half_width": truncation.half_width,
            "u_boundary": truncation.u_boundary,
            "v_boundary": truncation.v_boundary,
            "tol": truncation.tol,
            "policy": truncation.policy,
            "passed": truncation.passed,
        },
        "max_sweeps_used": int(max(traj.sweeps)),
    }
    if p.epsilon == 0:
        report["decay_steps"] = decay_step_check(traj, p).to_dict()
    write_json(os.path.join(directory, "report.json"), report)
    logger.info(f"wrote trajectory.csv, final_state.csv and report.json to {directory}")

    H = np.asarray(traj.H)
    return SimulationSummary(
        value=value,
        directory=directory,
        rate=fits["L"].get("rate", math.nan),
        max_energy_increase=float(np.max(np.diff(H))) if H.size > 1 else 0.0,
        el_residual=stationary.el_residual,
        passed=estimates.passed,
    )


def cmd_simulate(config_path: str, progress: bool = False) -> int:
    cfg = load_config(config_path)
    summary = run_simulation(cfg, cfg.output_directory, progress)
    return EXIT_OK if summary.passed else EXIT_CHECK_FAILED


def cmd_stationary(config_path: str, workers: int = 1) -> int:
    cfg = load_config(config_path)
    directory = cfg.output_directory
    os.makedirs(directory, exist_ok=True)
    grid = cfg.build_grid()
    p = cfg.model_params()

    assumptions = validate_params(p, grid)
    result = solve_stationary(p, grid, tol=cfg.solver.stationary_tol)
    bounds = verify_stationary_bounds(result, p, workers=workers)
    truncation = truncation_check(result.state)

    state = result.state
    write_csv(
        os.path.join(directory, "stationary.csv"),
        {"x": grid.centers, "u": state.u.values, "v": state.v.values},
    )
    report = dict(result.to_dict())
    report.update(
        {
            "epsilon": p.epsilon,
            "bounds": bounds.to_dict(),
            "assumptions": assumptions.to_dict(),
            "convexity_unverified": assumptions.convexity_unverified or not result.convexity_verified,
            "truncation_passed": truncation.passed,
        }
    )
    write_json(os.path.join(directory, "stationary_report.json"), report)
    logger.info(f"wrote stationary.csv and stationary_report.json to {directory}")

    ok = bounds.passed and result.el_residual <= EL_RESIDUAL_TOL
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_kernels_verify(output: Optional[str] = None, seed: int = 42) -> int:
    rows = [row.to_dict() for row in run_kernel_suite(seed)]
    text = json.dumps(_jsonable(rows), indent=2)
    if output:
        with open(output, "w") as f:
            f.write(text + "\n")
        logger.info(f"wrote {len(rows)} kernel checks to {output}")
    else:
        print(text)
    return EXIT_OK if all(row["pass"] for row in rows) else EXIT_CHECK_FAILED


def _sweep_job(args):
    cfg, directory, value = args
    try:
        return run_simulation(cfg, directory, value=value)
    except (ChemoflowError, ValueError) as e:
        logger.error(f"sweep run {value:g} failed: {e}")
        return SimulationSummary(value, directory, math.nan, math.nan, math.nan, False)


def cmd_sweep(
    config_path: str,
    param: str,
    values: Sequence[float],
    workers: int = 1,
    progress: bool = False,
) -> int:
    """
    One simulation per value of ``param`` plus ``sweep_summary.csv``.

    Runs write to ``<output>/<param>_<value>``; a failing run is recorded with NaNs and the
    sweep goes on.
    """
    if not values:
        raise ConfigError("sweep.values", "must not be empty")

    base = load_config(config_path)
    root = base.output_directory
    os.makedirs(root, exist_ok=True)
    jobs = [
        (base.with_value(param, value), os.path.join(root, f"{param}_{value:g}"), float(value))
        for value in values
    ]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(tqdm(pool.map(_sweep_job, jobs), total=len(jobs), disable=not progress))
    else:
        summaries = [_sweep_job(job) for job in tqdm(jobs, disable=not progress)]

    table = np.array([summary.row() for summary in summaries])
    write_csv(
        os.path.join(root, "sweep_summary.csv"),
        {
            "value": table[:, 0],
            "fitted_rate": table[:, 1],
            "max_energy_increase": table[:, 2],
            "stationary_el_residual": table[:, 3],
        },
    )
    logger.info(f"wrote sweep_summary.csv for {len(values)} values of {param} to {root}")
    return EXIT_OK if all(summary.passed for summary in summaries) else EXIT_CHECK_FAILED
