# Copyright 2021 The Chemoflow Authors.

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from chemoflow.domain import (
    ConcentrationField,
    Grid1D,
    ModelParams,
    ProbabilityDensity,
    SystemState,
    convexity_threshold,
    face_gradient,
    neumann_laplacian,
)
from chemoflow.entropy import el_residual
from chemoflow.errors import SolverError
from chemoflow.kernels import semilinear_resolvent_solve
from chemoflow.transport import l2_distance, w2

__all__ = [
    "EL_RESIDUAL_TOL",
    "StationaryResult",
    "StationaryBoundsReport",
    "EpsSweepRow",
    "normalization_bisect",
    "stationary_profile",
    "solve_stationary",
    "verify_stationary_bounds",
    "stationary_eps_sweep",
]

logger = logging.getLogger(__name__)

EL_RESIDUAL_TOL = 1e-8


def _mass(U: float, base: np.ndarray, h: float) -> float:
    return h * float(np.sum(np.maximum(U - base, 0.0)))


def normalization_bisect(v: ConcentrationField, p: ModelParams) -> float:
    """
    The level ``U`` at which ``[U - W - epsilon phi(v)]_+`` has unit mass.

    The mass is continuous, nondecreasing and unbounded in ``U``, so a root is bracketed
    between ``min(W + epsilon phi(v))`` and that value plus ``10 (1 + R^2 max(lambda0, 1))``.
    The bracket is widened once when too small. The root from :func:`scipy.optimize.brentq`
    is polished on its active set, where the mass is affine in ``U``.

    Args:
        v (ConcentrationField): concentration entering the potential
        p (ModelParams): coefficients

    Returns:
        float: the normalization level

    Raises:
        SolverError: when no bracket is found
    """
    grid = v.grid
    h = grid.h
    base = p.effective_potential(v.values, grid)

    lower = float(base.min())
    width = 10.0 * (1.0 + grid.half_width ** 2 * max(p.lambda0, 1.0))
    upper = lower + width
    if _mass(upper, base, h) < 1.0:
        upper = lower + 10.0 * width + 1.0 / (h * base.size)
        if _mass(upper, base, h) < 1.0:
            raise SolverError(
                "normalization",
                f"no level in [{lower:.6g}, {upper:.6g}] gives unit mass",
            )

    U = brentq(
        lambda level: _mass(level, base, h) - 1.0,
        lower,
        upper,
        xtol=1e-15,
        rtol=4.0 * np.finfo(float).eps,
    )

    for _ in range(5):
        active = base < U
        polished = (1.0 / h + float(np.sum(base[active]))) / int(active.sum())
        if np.array_equal(base < polished, active):
            return float(polished)
        U = polished
    return float(U)


def stationary_profile(U: float, v: ConcentrationField, p: ModelParams) -> np.ndarray:
    """``[U - W - epsilon phi(v)]_+`` at the cell centres"""
    return np.maximum(U - p.effective_potential(v.values, v.grid), 0.0)


@dataclass
class StationaryResult:
    """
    Solution of the Euler-Lagrange system.

    ``u`` is rebuilt from ``(U, v)`` by the positive-part formula, so that relation is exact.
    """

    state: SystemState
    U: float
    el_residual: float
    mass_error: float
    iterations: int
    V: float
    convexity_verified: bool = True

    def to_dict(self) -> dict:
        return {
            "U_eps": self.U,
            "el_residual": self.el_residual,
            "mass_error": self.mass_error,
            "iterations": self.iterations,
            "V": self.V,
            "convexity_unverified": not self.convexity_verified,
        }


def _solve_v(grid: Grid1D, u: np.ndarray, p: ModelParams, v0: np.ndarray) -> np.ndarray:
    return semilinear_resolvent_solve(
        grid,
        p.kappa,
        weight=p.epsilon * u,
        phi=p.phi,
        v0=v0,
        tol=1e-11,
        stage="stationary",
    ).values


def solve_stationary(
    p: ModelParams,
    grid: Grid1D,
    tol: float = 1e-10,
    max_iter: int = 500,
    initial: Optional[SystemState] = None,
    omega: Optional[float] = None,
) -> StationaryResult:
    """
    Damped fixed-point iteration on the Euler-Lagrange system.

    Given ``u``, solve ``(-Delta_h + kappa) v = -epsilon u phi'(v)`` by Newton; given ``v``,
    take ``[U - W - epsilon phi(v)]_+`` with :func:`normalization_bisect` and move ``u`` a
    fraction ``omega`` towards it. The iteration stops when the compound distance between
    consecutive iterates is at most ``tol``.

    Args:
        p (ModelParams): coefficients
        grid (Grid1D): grid
        tol (float): stopping change
        max_iter (int): outer iteration cap
        initial (SystemState): starting pair, the uncoupled profile with ``v = 0`` when omitted
        omega (float): damping of the u-updates, 0.5 (1 for ``epsilon <= 0.01``) when omitted

    Returns:
        StationaryResult: the stationary pair with its residuals

    Raises:
        SolverError: when the iteration does not settle in ``max_iter`` steps
    """
    if omega is None:
        omega = 1.0 if p.epsilon <= 0.01 else 0.5
    if not 0.0 < omega <= 1.0:
        raise ValueError(f"param ``omega`` must be in (0, 1]. but yours is {omega}.")

    convex = convexity_threshold(p).satisfied
    if not convex:
        logger.warning(
            f"epsilon^2 phi'(0)^2 >= kappa for epsilon={p.epsilon:g}: uniqueness of the "
            f"stationary state is not guaranteed"
        )

    if initial is None:
        v = np.zeros(grid.n_cells)
        zero = ConcentrationField(v, grid)
        u = stationary_profile(normalization_bisect(zero, p), zero, p)
    else:
        grid.check_same(initial.grid, "initial state")
        u, v = np.array(initial.u.values), np.array(initial.v.values)

    change = math.inf
    for iteration in range(1, max_iter + 1):
        v_new = ConcentrationField(_solve_v(grid, u, p, v), grid)
        target = stationary_profile(normalization_bisect(v_new, p), v_new, p)
        u_new = (1.0 - omega) * u + omega * target

        change = math.hypot(
            w2(ProbabilityDensity(u_new, grid), ProbabilityDensity(u, grid)),
            l2_distance(v_new.values, v, grid.h),
        )
        u, v = u_new, v_new.values
        logger.debug(f"stationary iteration {iteration}: change {change:.3e}")
        if change <= tol:
            break
    else:
        raise SolverError(
            "stationary",
            f"fixed point did not settle in {max_iter} iterations; reduce epsilon or omega",
            change,
        )

    v_inf = ConcentrationField(_solve_v(grid, u, p, v), grid)
    U = normalization_bisect(v_inf, p)
    u_inf = stationary_profile(U, v_inf, p)

    result = StationaryResult(
        state=SystemState(ProbabilityDensity(u_inf, grid), v_inf),
        U=U,
        el_residual=el_residual(u_inf, v_inf.values, p, grid),
        mass_error=abs(grid.integrate(u_inf) - 1.0),
        iterations=iteration,
        V=float(v_inf.values.max()),
        convexity_verified=convex,
    )
    if result.el_residual > EL_RESIDUAL_TOL:
        logger.warning(
            f"stationary Euler-Lagrange residual {result.el_residual:.2e} above {EL_RESIDUAL_TOL:g}"
        )
    logger.info(
        f"stationary state for epsilon={p.epsilon:g}: U={U:.10g}, {iteration} iterations, "
        f"residual {result.el_residual:.2e}"
    )
    return result


@dataclass
class EpsSweepRow:
    epsilon: float
    gradient_ratio: float
    hessian_ratio: float

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "gradient_ratio": self.gradient_ratio,
            "hessian_ratio": self.hessian_ratio,
        }


def _sweep_row(args) -> EpsSweepRow:
    p, grid = args
    v = solve_stationary(p, grid).state.v.values
    return EpsSweepRow(
        epsilon=p.epsilon,
        gradient_ratio=float(np.max(np.abs(face_gradient(v, grid.h)))) / p.epsilon,
        hessian_ratio=float(np.max(np.abs(neumann_laplacian(v, grid.h)))) / p.epsilon,
    )


def stationary_eps_sweep(
    p: ModelParams, grid: Grid1D, eps_values: Sequence[float], workers: int = 1
) -> List[EpsSweepRow]:
    """
    ``||Dv_inf||_inf / epsilon`` and ``||D^2 v_inf||_inf / epsilon`` along a coupling sweep.

    The Hessian ratio is reported only; no bound on it is asserted anywhere.

    Args:
        p (ModelParams): coefficients; ``epsilon`` is replaced by each swept value
        grid (Grid1D): grid
        eps_values (Sequence[float]): positive coupling strengths
        workers (int): processes for independent solves

    Returns:
        List[EpsSweepRow]: one row per value, in the given order
    """
    if any(eps <= 0 for eps in eps_values):
        raise ValueError(f"param ``eps_values`` must be positive. but yours is {list(eps_values)}.")

    jobs = [(p.with_epsilon(eps), grid) for eps in eps_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(job) for job in jobs]


@dataclass
class StationaryBoundsReport:
    U0: float
    max_u: float
    bound_a: float
    a_passed: bool
    gradient_ratios: List[EpsSweepRow] = field(default_factory=list)
    b_passed: bool = True

    @property
    def passed(self) -> bool:
        return self.a_passed and self.b_passed

    def to_dict(self) -> dict:
        return {
            "U0": self.U0,
            "max_u": self.max_u,
            "bound_a": self.bound_a,
            "a_passed": self.a_passed,
            "eps_sweep": [row.to_dict() for row in self.gradient_ratios],
            "b_passed": self.b_passed,
            "passed": self.passed,
        }


def verify_stationary_bounds(
    r: StationaryResult,
    p: ModelParams,
    sweep: Optional[List[EpsSweepRow]] = None,
    workers: int = 1,
) -> StationaryBoundsReport:
    """
    Check the pointwise and gradient bounds of the stationary state.

    (a) ``max u_inf <= U_0 - epsilon V phi'(0)`` with ``U_0`` the uncoupled level and ``V`` the
    computed ``sup v_inf``. (b) along ``epsilon, epsilon/2, epsilon/4`` the ratios
    ``||Dv_inf||_inf / epsilon`` stay within twice the ratio at the smallest coupling.

    Args:
        r (StationaryResult): solved stationary state
        p (ModelParams): its coefficients
        sweep (List[EpsSweepRow]): precomputed sweep rows; computed when omitted and
            ``epsilon > 0``
        workers (int): processes for the sweep

    Returns:
        StationaryBoundsReport: values and pass flags; failed bounds are logged, never raised
    """
    grid = r.state.grid
    U0 = normalization_bisect(ConcentrationField.zeros(grid), p.with_epsilon(0.0))
    max_u = float(r.state.u.values.max())
    bound_a = U0 - p.epsilon * r.V * p.phi.dphi0
    report = StationaryBoundsReport(
        U0=U0,
        max_u=max_u,
        bound_a=bound_a,
        a_passed=max_u <= bound_a + 1e-12 * (1.0 + abs(bound_a)),
    )

    if sweep is None and p.epsilon > 0:
        eps = p.epsilon
        sweep = stationary_eps_sweep(p, grid, [eps, eps / 2.0, eps / 4.0], workers=workers)
    if sweep:
        smallest = min(sweep, key=lambda row: row.epsilon)
        report.gradient_ratios = list(sweep)
        report.b_passed = all(row.gradient_ratio <= 2.0 * smallest.gradient_ratio for row in sweep)

    if not report.passed:
        logger.warning(f"stationary bounds failed: {report.to_dict()}")
    return report
