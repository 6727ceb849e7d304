# Copyright 2021 The Chemoflow Authors.

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from chemoflow.domain import ConcentrationField, Grid1D, ModelParams
from chemoflow.entropy import dirichlet_energy
from chemoflow.kernels import neumann_kernel_matrix
from chemoflow.transport import l2_distance, w2

__all__ = [
    "ENERGY_TOL",
    "InequalityCheck",
    "ClassicalEstimates",
    "StepInequalities",
    "RepresentationReport",
    "classical_estimates",
    "lyapunov_step_check",
    "decay_step_check",
    "evi_check",
    "semidiscrete_v",
    "representation_check",
]

logger = logging.getLogger(__name__)

ENERGY_TOL = 1e-10


@dataclass
class InequalityCheck:
    """``lhs <= rhs + tol``; ``witness`` locates the worst case"""

    name: str
    lhs: float
    rhs: float
    tol: float
    witness: Optional[str] = None

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs + self.tol)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "tol": self.tol,
            "witness": self.witness,
            "pass": self.passed,
        }


@dataclass
class ClassicalEstimates:
    checks: List[InequalityCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def __getitem__(self, name: str) -> InequalityCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [check.to_dict() for check in self.checks]}


def _sample_pairs(n: int, n_pairs: int, rng: np.random.Generator):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if len(pairs) <= n_pairs:
        return pairs
    chosen = rng.choice(len(pairs), size=n_pairs, replace=False)
    return [pairs[k] for k in sorted(chosen)]


def classical_estimates(
    traj,
    H_inf: Optional[float] = None,
    tol: float = 1e-8,
    n_pairs: int = 200,
    seed: int = 42,
) -> ClassicalEstimates:
    """
    Energy and time-regularity estimates of a discrete solution.

    * ``H`` is non-increasing within ``ENERGY_TOL`` per step.
    * ``sum W2(u^n, u^(n-1))^2`` and ``sum ||v^n - v^(n-1)||^2`` are at most ``2 tau (H_0 - H_inf)``.
    * ``W2(u(s), u(t))`` and ``||v(s) - v(t)||`` are at most
      ``sqrt(2 (H_0 - H_inf) max(tau, |t - s|))`` on sampled pairs of recorded times.

    Args:
        traj (TrajectoryRecord): trajectory
        H_inf (float): entropy of the stationary state, the trajectory's when omitted
        tol (float): absolute tolerance of the summed and Hölder bounds
        n_pairs (int): number of sampled time pairs
        seed (int): seed of the pair sampling

    Returns:
        ClassicalEstimates: one check per estimate
    """
    H_inf = traj.H_inf if H_inf is None else H_inf
    tau = traj.tau
    H = np.asarray(traj.H)
    gap = max(float(H[0] - H_inf), 0.0)
    budget = 2.0 * tau * gap

    report = ClassicalEstimates()
    increases = np.diff(H)
    worst = int(np.argmax(increases)) + 1 if increases.size else 0
    report.checks.append(
        InequalityCheck(
            "energy_monotone",
            float(increases.max()) if increases.size else 0.0,
            0.0,
            ENERGY_TOL,
            f"step {worst}",
        )
    )
    report.checks.append(
        InequalityCheck("sum_W2_squared", float(np.sum(np.square(traj.W2_step))), budget, tol)
    )
    report.checks.append(
        InequalityCheck("sum_dv_squared", float(np.sum(np.square(traj.dv_L2_step))), budget, tol)
    )

    rng = np.random.default_rng(seed)
    worst_u = (-math.inf, None)
    worst_v = (-math.inf, None)
    for i, j in _sample_pairs(len(traj), n_pairs, rng):
        a, b = traj.states[i], traj.states[j]
        bound = math.sqrt(2.0 * gap * max(tau, abs(traj.t[j] - traj.t[i])))
        slack_u = w2(a.u, b.u) - bound
        slack_v = l2_distance(a.v.values, b.v.values, a.grid.h) - bound
        if slack_u > worst_u[0]:
            worst_u = (slack_u, (i, j, bound))
        if slack_v > worst_v[0]:
            worst_v = (slack_v, (i, j, bound))

    for name, (slack, where) in (("holder_u_W2", worst_u), ("holder_v_L2", worst_v)):
        if where is None:
            continue
        i, j, bound = where
        report.checks.append(InequalityCheck(name, bound + slack, bound, tol, f"steps {i} and {j}"))

    for check in report.checks:
        if not check.passed:
            logger.warning(f"classical estimate {check.name} fails: {check.lhs:.6e} > {check.rhs:.6e}")
    return report


@dataclass
class StepInequalities:
    """Per-step slacks ``lhs - rhs`` of a one-step inequality; nonpositive means it holds"""

    name: str
    slack: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s <= 0.0 for s in self.slack)

    @property
    def worst(self) -> float:
        return max(self.slack) if self.slack else 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "steps": len(self.slack), "worst_slack": self.worst, "pass": self.passed}


def lyapunov_step_check(traj, grid_tol_factor: float = 1e-3) -> List[StepInequalities]:
    """
    One-step dissipation inequalities ``L(u^n) + tau D(u^n, v^n) <= L(u^(n-1)) + grid_tol``
    for the u and v components, with ``grid_tol = grid_tol_factor * tau * (1 + |D|)``.
    """
    tau = traj.tau
    reports = []
    for name, L, D in (("lyapunov_u", traj.L_u, traj.D_u), ("lyapunov_v", traj.L_v, traj.D_v)):
        report = StepInequalities(name)
        for n in range(1, len(L)):
            grid_tol = grid_tol_factor * tau * (1.0 + abs(D[n]))
            report.slack.append(float(L[n] + tau * D[n] - L[n - 1] - grid_tol))
        if not report.passed:
            logger.warning(f"{name}: one-step inequality fails by {report.worst:.3e}")
        reports.append(report)
    return reports


def decay_step_check(traj, p: ModelParams, grid_tol: float = 1e-3) -> StepInequalities:
    """
    ``L^n (1 + 2 Lambda tau) <= L^(n-1) (1 + grid_tol)`` with ``Lambda = min(kappa, lambda0)``.

    Only the uncoupled system has this contraction with an explicit rate.
    """
    if p.epsilon != 0:
        raise ValueError(f"param ``p.epsilon`` must be 0. but yours is {p.epsilon}.")
    rate = min(p.kappa, p.lambda0)
    L = traj.series("L")
    report = StepInequalities("decay_step")
    for n in range(1, L.size):
        report.slack.append(float(L[n] * (1.0 + 2.0 * rate * traj.tau) - L[n - 1] * (1.0 + grid_tol)))
    if not report.passed:
        logger.warning(f"decay step inequality fails by {report.worst:.3e}")
    return report


def evi_check(
    v_series: Sequence[ConcentrationField],
    w: ConcentrationField,
    kappa: float,
    tau: float,
    grid: Grid1D,
    tol: float = 1e-10,
) -> StepInequalities:
    """
    Evolution variational inequality of the linear v-flow in implicit Euler form::

        (||v^n - w||^2 - ||v^(n-1) - w||^2) / (2 tau) + kappa/2 ||v^n - w||^2 + F(v^n) <= F(w)

    ``tol`` is relative to ``1 + |F(w)|``.
    """
    h = grid.h
    values = [np.asarray(v.values if isinstance(v, ConcentrationField) else v) for v in v_series]
    target = w.values
    F_w = dirichlet_energy(target, kappa, h)

    report = StepInequalities("evi")
    for n in range(1, len(values)):
        now = l2_distance(values[n], target, h) ** 2
        before = l2_distance(values[n - 1], target, h) ** 2
        lhs = (now - before) / (2.0 * tau) + 0.5 * kappa * now + dirichlet_energy(values[n], kappa, h)
        report.slack.append(float(lhs - F_w - tol * (1.0 + abs(F_w))))
    return report


def semidiscrete_v(
    v0,
    sources: Optional[Sequence[np.ndarray]],
    tau: float,
    kappa: float,
    grid: Grid1D,
    n_steps: Optional[int] = None,
) -> np.ndarray:
    """
    Kernel-sum representation of the implicit Euler steps of ``v_t = v_xx - kappa v + f``::

        v^n = c^n K^n v0 + tau sum_(k=1..n) c^(n-k+1) K^(n-k+1) f_k

    with ``c = 1 / (1 + kappa tau)`` and ``K`` the lattice kernel of ``(I - sigma Delta_h)^(-1)``,
    ``sigma = tau / (1 + kappa tau)``.

    Args:
        v0 (np.ndarray or ConcentrationField): initial concentration
        sources (Sequence[np.ndarray]): ``f_1 ... f_n``; zero sources when None
        tau (float): time step
        kappa (float): decay rate
        grid (Grid1D): grid
        n_steps (int): number of steps when ``sources`` is None

    Returns:
        np.ndarray: rows ``v^0 ... v^n``
    """
    v0 = np.asarray(v0.values if isinstance(v0, ConcentrationField) else v0, dtype=np.float64)
    if sources is None:
        if n_steps is None:
            raise ValueError("param ``n_steps`` is required when ``sources`` is None.")
        sources = [np.zeros(grid.n_cells)] * n_steps
    n = len(sources)

    c = 1.0 / (1.0 + kappa * tau)
    propagator = c * neumann_kernel_matrix(grid, tau * c)
    powers = [np.eye(grid.n_cells)]
    for _ in range(n):
        powers.append(propagator @ powers[-1])

    rows = [v0]
    for m in range(1, n + 1):
        value = powers[m] @ v0
        for k in range(1, m + 1):
            value = value + tau * (powers[m - k + 1] @ np.asarray(sources[k - 1], dtype=np.float64))
        rows.append(value)
    return np.array(rows)


@dataclass
class RepresentationReport:
    steps: int
    max_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def to_dict(self) -> dict:
        return {"steps": self.steps, "max_error": self.max_error, "tol": self.tol, "pass": self.passed}


def representation_check(traj, p: ModelParams, max_steps: int = 20, tol: float = 1e-8) -> RepresentationReport:
    """
    Compare the first ``max_steps`` concentrations of a trajectory with :func:`semidiscrete_v`.

    The sources are ``-epsilon u^k phi'(v^k)`` read from the trajectory, zero when uncoupled.
    """
    n = min(max_steps, len(traj) - 1)
    grid = traj.states[0].grid
    sources = []
    for state in traj.states[1 : n + 1]:
        if p.epsilon > 0:
            sources.append(-p.epsilon * state.u.values * p.phi.dphi(state.v.values))
        else:
            sources.append(np.zeros(grid.n_cells))

    rows = semidiscrete_v(traj.states[0].v, sources, traj.tau, p.kappa, grid)
    error = 0.0
    for m in range(1, n + 1):
        error = max(error, float(np.max(np.abs(rows[m] - traj.states[m].v.values))))
    return RepresentationReport(steps=n, max_error=error, tol=tol)
