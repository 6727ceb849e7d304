# Copyright 2021 The Chemoflow Authors.

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from chemoflow.domain import ModelParams, SystemState, face_gradient, neumann_laplacian
from chemoflow.entropy import (
    boltzmann_E,
    dirichlet_F,
    dissipation_Du,
    dissipation_Dv,
    entropy_H,
    grad_norm_lq,
    l2_norm,
    lyapunov,
    w12_norm,
)
from chemoflow.errors import SolverError
from chemoflow.jko.blocks import solve_u_block, v_block
from chemoflow.jko.config import JkoConfig
from chemoflow.stationary import solve_stationary
from chemoflow.transport import compound_dist, l2_distance, w2, w2_squared

__all__ = [
    "TRAJECTORY_COLUMNS",
    "StepInfo",
    "TrajectoryRecord",
    "jko_step",
    "jko_step_info",
    "penalized_entropy",
    "regularity_ratio",
    "run_trajectory",
]

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = (
    "t",
    "H",
    "L_u",
    "L_v",
    "L_star",
    "W2_step",
    "dv_L2_step",
    "D_u",
    "D_v",
    "W2_to_stat",
    "u_L2_diff",
    "v_W12_diff",
    "grad_v_L65",
)


@dataclass
class StepInfo:
    state: SystemState
    sweeps: int
    last_change: float
    u_method: str


def penalized_entropy(s: SystemState, prev: SystemState, p: ModelParams, tau: float) -> float:
    """``dist((u, v), prev)^2 / (2 tau) + H(u, v)``"""
    h = s.grid.h
    dv = s.v.values - prev.v.values
    penalty = w2_squared(s.u, prev.u) + h * float(np.sum(dv * dv))
    return penalty / (2.0 * tau) + entropy_H(s, p).total


def jko_step_info(
    prev: SystemState,
    p: ModelParams,
    cfg: JkoConfig,
    stationary: Optional[SystemState] = None,
) -> StepInfo:
    """
    One minimizing-movement step by alternating block minimization.

    Each sweep minimizes the penalized entropy in ``u`` with ``v`` fixed, then in ``v`` with
    ``u`` fixed. Sweeps stop once the compound distance between consecutive iterates drops
    below ``inner_tol * (1 + dist(iterate, prev))``. The proposal family the u-block picks in
    the first sweep is reused in later sweeps.

    Args:
        prev (SystemState): state at the previous time
        p (ModelParams): coefficients
        cfg (JkoConfig): stepper settings
        stationary (SystemState): optional warm start, used when its penalized entropy is
            below ``H(prev)``

    Returns:
        StepInfo: new state, sweep count, final change and the u-proposal family

    Raises:
        SolverError: when the sweeps do not settle within ``cfg.max_sweeps``
    """
    tau = cfg.tau
    start = prev
    if stationary is not None:
        prev.grid.check_same(stationary.grid, "state and stationary state")
        if penalized_entropy(stationary, prev, p, tau) < entropy_H(prev, p).total:
            start = stationary

    u, v = start.u, start.v
    method = None
    change = math.inf
    for sweep in range(1, cfg.max_sweeps + 1):
        result = solve_u_block(prev.u, v, p, tau, current=u, method=method, m=cfg.quantile_m)
        if sweep == 1 and result.method != "kept":
            method = result.method

        v_new = v_block(prev.v, result.u, p, tau, v0=v)

        h = prev.grid.h
        change = math.hypot(w2(result.u, u), l2_distance(v_new.values, v.values, h))
        u, v = result.u, v_new

        logger.debug(f"sweep {sweep}: change {change:.3e}, u from {result.method}")
        if change < cfg.inner_tol * (1.0 + compound_dist(SystemState(u, v), prev).total):
            state = SystemState(u, v)
            v.check_nonnegative(cfg.tol_neg, where="after a step")
            return StepInfo(state, sweep, change, method or "kept")

    raise SolverError(
        "jko_step",
        f"alternating sweeps did not settle in {cfg.max_sweeps} sweeps",
        change,
    )


def jko_step(
    prev: SystemState,
    p: ModelParams,
    cfg: JkoConfig,
    stationary: Optional[SystemState] = None,
) -> SystemState:
    return jko_step_info(prev, p, cfg, stationary).state


def regularity_ratio(s: SystemState, prev: SystemState, p: ModelParams, tau: float) -> float:
    """
    Left side over the bracket of the additional-regularity estimate of one step::

        (||Du||^2 + ||Delta v - kappa v||^2)
            / (||u||^2 + ||v||_W12^2 + max|W''| + (E(u_prev) - E(u) + F(v_prev) - F(v)) / tau)

    The constant of that estimate is not explicit; the ratio is reported, never asserted.
    """
    grid = s.grid
    h = grid.h
    u, v = s.u.values, s.v.values

    du = face_gradient(u, h)
    flow = neumann_laplacian(v, h) - p.kappa * v
    numerator = h * float(np.sum(du * du)) + h * float(np.sum(flow * flow))

    curvature = float(np.max(np.abs(p.potential.d2W(grid.centers))))
    entropy_drop = (
        boltzmann_E(prev.u) - boltzmann_E(s.u) + dirichlet_F(prev.v, p.kappa) - dirichlet_F(s.v, p.kappa)
    )
    denominator = l2_norm(u, h) ** 2 + w12_norm(v, h) ** 2 + curvature + entropy_drop / tau
    return numerator / denominator if denominator > 0 else math.nan


@dataclass
class TrajectoryRecord:
    """
    Discrete solution and its per-step diagnostics.

    Row 0 is the initial state, with zero increments and zero sweeps.
    """

    tau: float
    stationary: SystemState
    H_inf: float
    t: List[float] = field(default_factory=list)
    states: List[SystemState] = field(default_factory=list)
    H: List[float] = field(default_factory=list)
    L_u: List[float] = field(default_factory=list)
    L_v: List[float] = field(default_factory=list)
    L_star: List[float] = field(default_factory=list)
    W2_step: List[float] = field(default_factory=list)
    dv_L2_step: List[float] = field(default_factory=list)
    D_u: List[float] = field(default_factory=list)
    D_v: List[float] = field(default_factory=list)
    W2_to_stat: List[float] = field(default_factory=list)
    u_L2_diff: List[float] = field(default_factory=list)
    v_W12_diff: List[float] = field(default_factory=list)
    grad_v_L65: List[float] = field(default_factory=list)
    sweeps: List[int] = field(default_factory=list)
    reg_ratio: List[float] = field(default_factory=list)
    lyapunov_by_entropy: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    @property
    def final(self) -> SystemState:
        return self.states[-1]

    def series(self, name: str) -> np.ndarray:
        if name == "L":
            return np.asarray(self.L_u) + np.asarray(self.L_v)
        if name == "H-Hinf":
            return np.asarray(self.H) - self.H_inf
        return np.asarray(getattr(self, name), dtype=np.float64)

    def columns(self) -> Dict[str, np.ndarray]:
        return {name: self.series(name) for name in TRAJECTORY_COLUMNS}

    def append(
        self,
        p: ModelParams,
        state: SystemState,
        prev: Optional[SystemState] = None,
        sweeps: int = 0,
    ):
        h = state.grid.h
        stat = self.stationary
        H = entropy_H(state, p).total
        parts = lyapunov(state, stat, p)
        gap = H - self.H_inf

        self.t.append(len(self.t) * self.tau)
        self.states.append(state)
        self.H.append(H)
        self.L_u.append(parts.L_u)
        self.L_v.append(parts.L_v)
        self.L_star.append(parts.L_star)
        self.W2_step.append(0.0 if prev is None else w2(state.u, prev.u))
        self.dv_L2_step.append(0.0 if prev is None else l2_distance(state.v.values, prev.v.values, h))
        self.D_u.append(dissipation_Du(state, stat, p))
        self.D_v.append(dissipation_Dv(state, stat, p))
        self.W2_to_stat.append(w2(state.u, stat.u))
        self.u_L2_diff.append(l2_distance(state.u.values, stat.u.values, h))
        self.v_W12_diff.append(w12_norm(state.v.values - stat.v.values, h))
        self.grad_v_L65.append(grad_norm_lq(state.v.values, h, 1.2))
        self.sweeps.append(sweeps)
        self.reg_ratio.append(math.nan if prev is None else regularity_ratio(state, prev, p, self.tau))
        self.lyapunov_by_entropy.append(parts.principal / gap if gap > 1e-14 else math.nan)


def run_trajectory(
    initial: SystemState,
    p: ModelParams,
    cfg: JkoConfig,
    n_steps: int,
    stationary: Optional[SystemState] = None,
    progress: bool = False,
) -> TrajectoryRecord:
    """
    Advance ``initial`` by ``n_steps`` minimizing-movement steps.

    Args:
        initial (SystemState): initial data
        p (ModelParams): coefficients
        cfg (JkoConfig): stepper settings
        n_steps (int): number of steps
        stationary (SystemState): stationary pair; solved for when omitted
        progress (bool): show a progress bar

    Returns:
        TrajectoryRecord: ``n_steps + 1`` rows, the first one for ``initial``
    """
    if n_steps < 0:
        raise ValueError(f"param ``n_steps`` must be >= 0. but yours is {n_steps}.")

    if stationary is None:
        stationary = solve_stationary(p, initial.grid).state

    record = TrajectoryRecord(
        tau=cfg.tau,
        stationary=stationary,
        H_inf=entropy_H(stationary, p).total,
    )
    record.append(p, initial)

    state = initial
    for step in tqdm(range(1, n_steps + 1), desc="jko", disable=not progress):
        try:
            info = jko_step_info(state, p, cfg)
        except SolverError as e:
            raise SolverError(e.stage, f"step {step}: {e.message}", e.last_change) from e
        record.append(p, info.state, prev=state, sweeps=info.sweeps)
        state = info.state

    logger.info(
        f"trajectory finished: {n_steps} steps of tau={cfg.tau:g}, "
        f"H {record.H[0]:.10g} -> {record.H[-1]:.10g} (H_inf {record.H_inf:.10g})"
    )
    return record
