# Copyright 2021 The Chemoflow Authors.

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded, solveh_banded

from chemoflow.domain import (
    ConcentrationField,
    Grid1D,
    ModelParams,
    ProbabilityDensity,
    density_from_quantiles,
)
from chemoflow.entropy import dirichlet_energy
from chemoflow.kernels import semilinear_resolvent_solve
from chemoflow.transport import w2_squared

__all__ = [
    "MIXTURE_LEVELS",
    "UBlockResult",
    "v_block",
    "v_block_objective",
    "yoshida_u",
    "lagrangian_proposal",
    "upwind_proposal",
    "solve_u_block",
    "u_block",
]

logger = logging.getLogger(__name__)

MIXTURE_LEVELS = tuple(0.5 ** k for k in range(1, 7))


def v_block(
    v_prev: ConcentrationField,
    u: ProbabilityDensity,
    p: ModelParams,
    tau: float,
    v0: Optional[ConcentrationField] = None,
    tol: float = 1e-10,
) -> ConcentrationField:
    """
    Minimize ``|v - v_prev|^2 / (2 tau) + F(v) + epsilon int u phi(v)`` over ``v``.

    The first-order condition is the implicit Euler step
    ``(v - v_prev) / tau = Delta_h v - kappa v - epsilon u phi'(v)``, solved by damped Newton
    to a max-norm residual of ``tol``. With ``epsilon = 0`` it is one tridiagonal solve.

    Args:
        v_prev (ConcentrationField): concentration at the previous time step
        u (ProbabilityDensity): density held fixed
        p (ModelParams): coefficients
        tau (float): time step
        v0 (ConcentrationField): initial guess, ``v_prev`` when omitted
        tol (float): residual tolerance

    Returns:
        ConcentrationField: the minimizer
    """
    v_prev.grid.check_same(u.grid, "v and u")
    start = v_prev if v0 is None else v0
    solution = semilinear_resolvent_solve(
        v_prev.grid,
        p.kappa,
        weight=p.epsilon * u.values,
        phi=p.phi,
        rhs=v_prev.values / tau,
        shift=1.0 / tau,
        v0=start.values,
        tol=tol,
        stage="v_block",
    )
    logger.debug(f"v_block: {solution.iterations} Newton iterations, residual {solution.residual:.2e}")
    return ConcentrationField(solution.values, v_prev.grid)


def v_block_objective(
    v: np.ndarray, v_prev: np.ndarray, u: np.ndarray, p: ModelParams, tau: float, grid: Grid1D
) -> float:
    """Full objective of the v-block, used to compare iterates"""
    h = grid.h
    diff = v - v_prev
    value = h * float(np.sum(diff * diff)) / (2.0 * tau) + dirichlet_energy(v, p.kappa, h)
    if p.epsilon > 0:
        value += p.epsilon * h * float(np.sum(u * p.phi.phi(v)))
    return value


def yoshida_u(u: ProbabilityDensity, anchor: ProbabilityDensity, V: np.ndarray, tau: float) -> float:
    """``W2(u, anchor)^2 / (2 tau) + int (u^2 / 2 + u V)``, the u-part of the penalized entropy"""
    h = u.grid.h
    values = u.values
    return w2_squared(u, anchor) / (2.0 * tau) + h * float(np.sum(0.5 * values * values + values * V))


@dataclass
class UBlockResult:
    u: ProbabilityDensity
    method: str
    value: float
    damping: float = 1.0


class _PotentialAlongParticles(object):
    """``W(X) + epsilon phi(v(X))`` with ``v`` interpolated linearly between cell centres"""

    def __init__(self, v: np.ndarray, p: ModelParams, grid: Grid1D):
        self.v = v
        self.p = p
        self.centers = grid.centers
        self.h = grid.h

    def _interp(self, X):
        values = np.interp(X, self.centers, self.v)
        upper = np.clip(np.searchsorted(self.centers, X), 1, self.centers.size - 1)
        slope = (self.v[upper] - self.v[upper - 1]) / self.h
        inside = (X > self.centers[0]) & (X < self.centers[-1])
        return values, np.where(inside, slope, 0.0)

    def value(self, X):
        W = np.asarray(self.p.potential.W(X), dtype=np.float64)
        if self.p.epsilon == 0:
            return W
        return W + self.p.epsilon * self.p.phi.phi(self._interp(X)[0])

    def derivatives(self, X):
        """First derivative and a nonnegative Gauss-Newton second derivative"""
        dW = np.asarray(self.p.potential.dW(X), dtype=np.float64)
        d2W = np.asarray(self.p.potential.d2W(X), dtype=np.float64)
        if self.p.epsilon == 0:
            return dW, np.maximum(d2W, 0.0)
        values, slope = self._interp(X)
        eps, phi = self.p.epsilon, self.p.phi
        first = dW + eps * phi.dphi(values) * slope
        second = d2W + eps * phi.d2phi(values) * slope * slope
        return first, np.maximum(second, 0.0)


def lagrangian_proposal(
    anchor: ProbabilityDensity,
    start: ProbabilityDensity,
    v: ConcentrationField,
    p: ModelParams,
    tau: float,
    m: Optional[int] = None,
    max_iter: int = 60,
) -> Optional[ProbabilityDensity]:
    """
    Newton in quantile variables for the penalized u-problem.

    Minimizes over increasing ``X`` (``m`` particles of mass ``1/m``)::

        J(X) = sum (X_j - Xa_j)^2 / (2 tau m) + sum_gaps 1 / (2 m^2 dX) + sum V(X_j) / m

    where ``Xa`` are the quantiles of ``anchor``. The Hessian is tridiagonal; step lengths
    are halved until the particles stay ordered and ``J`` decreases.

    Returns:
        ProbabilityDensity or None: the grid density of the minimizer, None if Newton stalls
        at the start
    """
    grid = anchor.grid
    m = grid.n_cells if m is None else int(m)
    target = anchor.quantiles(m)
    X = np.array(start.quantiles(m), dtype=np.float64)
    if np.any(np.diff(X) <= 0.0):
        X = np.array(target, dtype=np.float64)
    if np.any(np.diff(X) <= 0.0):
        return None

    potential = _PotentialAlongParticles(v.values, p, grid)
    mm = float(m * m)

    def energy(Y):
        gaps = np.diff(Y)
        diff = Y - target
        return (
            float(np.sum(diff * diff)) / (2.0 * tau * m)
            + float(np.sum(1.0 / (2.0 * mm * gaps)))
            + float(np.sum(potential.value(Y))) / m
        )

    current = energy(X)
    for iteration in range(max_iter):
        gaps = np.diff(X)
        inv2 = 1.0 / (gaps * gaps)
        first, second = potential.derivatives(X)

        grad = (X - target) / (tau * m) + first / m
        grad[:-1] += inv2 / (2.0 * mm)
        grad[1:] -= inv2 / (2.0 * mm)

        curvature = 1.0 / (mm * gaps ** 3)
        banded = np.zeros((2, m))
        banded[0, 1:] = -curvature
        banded[1] = 1.0 / (tau * m) + second / m
        banded[1, :-1] += curvature
        banded[1, 1:] += curvature
        step = solveh_banded(banded, -grad)

        decrement = -float(np.dot(grad, step))
        if decrement <= 1e-22 * (1.0 + abs(current)):
            break

        t = 1.0
        while t > 1e-12:
            trial = X + t * step
            if np.all(np.diff(trial) > 0.0):
                trial_energy = energy(trial)
                if trial_energy <= current - 1e-4 * t * decrement:
                    break
            t *= 0.5
        else:
            logger.debug(f"lagrangian proposal: line search stalled at iteration {iteration}")
            break

        X, current = trial, trial_energy

    return density_from_quantiles(X, grid)


def _upwind_residual(u, anchor, V, ratio):
    a = -np.diff(u + V) * ratio[1]
    upwind = np.where(a > 0.0, u[:-1], u[1:])
    flux = np.concatenate([[0.0], a * upwind, [0.0]])
    return u - anchor + ratio[0] * np.diff(flux), a, upwind


def upwind_proposal(
    anchor: ProbabilityDensity,
    V: np.ndarray,
    tau: float,
    tol: float = 1e-13,
    max_iter: int = 40,
) -> Optional[ProbabilityDensity]:
    """
    Implicit upwind finite-volume step of ``u_t = (u (u + V)_x)_x`` from ``anchor``.

    Face fluxes ``a+ u_i + a- u_(i+1)`` with velocity ``a = -D_h(u + V)`` vanish at both ends.
    The nonlinear system is solved by damped Newton with the tridiagonal Jacobian, clipping
    negative values.

    Returns:
        ProbabilityDensity or None: the new density, None when Newton does not converge
    """
    grid = anchor.grid
    h = grid.h
    ratio = (tau / h, 1.0 / h)
    base = anchor.values
    u = np.array(base, dtype=np.float64)
    n = u.size

    r, a, upwind = _upwind_residual(u, base, V, ratio)
    norm = float(np.max(np.abs(r)))
    for _ in range(max_iter):
        if norm <= tol:
            break

        left = np.where(a > 0.0, a, 0.0) + upwind / h
        right = np.where(a < 0.0, a, 0.0) - upwind / h

        banded = np.zeros((3, n))
        banded[1] = 1.0
        banded[1, :-1] += ratio[0] * left
        banded[1, 1:] -= ratio[0] * right
        banded[0, 1:] = ratio[0] * right
        banded[2, :-1] = -ratio[0] * left
        step = solve_banded((1, 1), banded, -r)

        t = 1.0
        while t > 1e-10:
            trial = np.maximum(u + t * step, 0.0)
            trial_r, trial_a, trial_up = _upwind_residual(trial, base, V, ratio)
            trial_norm = float(np.max(np.abs(trial_r)))
            if trial_norm < norm:
                break
            t *= 0.5
        else:
            return None

        u, r, a, upwind, norm = trial, trial_r, trial_a, trial_up, trial_norm

    if norm > tol:
        logger.debug(f"upwind proposal: Newton stopped at residual {norm:.2e}")
        return None

    mass = h * float(np.sum(u))
    if abs(mass - 1.0) > 1e-8:
        return None
    return ProbabilityDensity(u / mass, grid)


def solve_u_block(
    anchor: ProbabilityDensity,
    v: ConcentrationField,
    p: ModelParams,
    tau: float,
    current: Optional[ProbabilityDensity] = None,
    method: Optional[str] = None,
    m: Optional[int] = None,
) -> UBlockResult:
    """
    Minimize the u-part of the penalized entropy, scored exactly on the grid.

    Two proposals are built, a Lagrangian Newton minimizer in quantile variables and an
    implicit upwind step from ``anchor``. The one with the lower grid value of
    :func:`yoshida_u` is accepted only if it beats ``current``; otherwise its mixtures with
    ``current`` at ``theta = 1/2 ... 1/64`` are tried, and failing that ``current`` is kept.
    The penalized entropy therefore never increases.

    Args:
        anchor (ProbabilityDensity): density at the previous time step
        v (ConcentrationField): concentration held fixed
        p (ModelParams): coefficients
        tau (float): time step
        current (ProbabilityDensity): current iterate, ``anchor`` when omitted
        method (str): restrict to 'lagrangian' or 'upwind'; both when None
        m (int): quantile nodes of the Lagrangian proposal

    Returns:
        UBlockResult: accepted density, the proposal family it came from and its value
    """
    anchor.grid.check_same(v.grid, "u and v")
    current = anchor if current is None else current
    V = p.effective_potential(v.values, anchor.grid)
    base = yoshida_u(current, anchor, V, tau)

    proposals = []
    if method in (None, "lagrangian"):
        proposals.append(("lagrangian", lagrangian_proposal(anchor, current, v, p, tau, m)))
    if method in (None, "upwind"):
        proposals.append(("upwind", upwind_proposal(anchor, V, tau)))

    scored = [(yoshida_u(u, anchor, V, tau), name, u) for name, u in proposals if u is not None]
    if not scored:
        return UBlockResult(current, "kept", base, 0.0)

    value, name, best = min(scored, key=lambda item: item[0])
    if value < base:
        return UBlockResult(best, name, value)

    for theta in MIXTURE_LEVELS:
        mixed = ProbabilityDensity.mixture(current, best, theta)
        mixed_value = yoshida_u(mixed, anchor, V, tau)
        if mixed_value < base:
            return UBlockResult(mixed, name, mixed_value, theta)

    if value - base > 1e-8 * (1.0 + abs(base)):
        logger.warning(
            f"u-block: every proposal and damping level raised the penalized entropy "
            f"(best {value:.12g} vs current {base:.12g}); keeping the current density"
        )
    else:
        logger.debug(f"u-block: proposals within {value - base:.1e} of the current value; kept")
    return UBlockResult(current, "kept", base, 0.0)


def u_block(
    anchor: ProbabilityDensity,
    v: ConcentrationField,
    p: ModelParams,
    tau: float,
    current: Optional[ProbabilityDensity] = None,
    m: Optional[int] = None,
) -> ProbabilityDensity:
    """Density returned by :func:`solve_u_block`"""
    return solve_u_block(anchor, v, p, tau, current=current, m=m).u
