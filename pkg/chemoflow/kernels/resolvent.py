# Copyright 2021 The Chemoflow Authors.

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solveh_banded
from scipy.sparse.linalg import factorized

from chemoflow.domain import (
    ConcentrationField,
    Grid1D,
    face_gradient,
    neumann_laplacian,
    neumann_laplacian_matrix,
)
from chemoflow.errors import SolverError

__all__ = [
    "P2_REGULARITY_CONSTANT",
    "ResolventSolver1D",
    "RegularityCheck",
    "resolvent_1d_kernel",
    "lattice_green",
    "resolvent_1d_lattice",
    "neumann_kernel_matrix",
    "solve_resolvent_1d",
    "regularity_p2",
    "SemilinearSolution",
    "semilinear_resolvent_solve",
]

P2_REGULARITY_CONSTANT = 2.5


def resolvent_1d_kernel(kappa: float, x):
    """
    Green's function ``exp(-sqrt(kappa) |x|) / (2 sqrt(kappa))`` of ``-d^2/dx^2 + kappa`` on R.

    Examples:
        >>> resolvent_1d_kernel(1.0, 0.0)
        0.5
    """
    if kappa <= 0:
        raise ValueError(f"param ``kappa`` must be > 0. but yours is {kappa}.")
    a = math.sqrt(kappa)
    value = np.exp(-a * np.abs(np.asarray(x, dtype=np.float64))) / (2.0 * a)
    return float(value) if np.ndim(value) == 0 else value


def lattice_green(sigma: float, h: float, offsets) -> np.ndarray:
    """
    Green's function of ``I - sigma Delta_h`` on the infinite lattice of spacing ``h``.

    ``G_i = A rho^|i|`` with ``beta = sigma / h^2``,
    ``rho = ((1 + 2 beta) - sqrt(1 + 4 beta)) / (2 beta)`` and ``A = 1 / (h sqrt(1 + 4 beta))``,
    normalized so that ``h sum_i G_i = 1``.
    """
    if sigma <= 0 or h <= 0:
        raise ValueError(f"params ``sigma`` and ``h`` must be > 0. but yours are {sigma}, {h}.")
    beta = sigma / (h * h)
    root = math.sqrt(1.0 + 4.0 * beta)
    rho = ((1.0 + 2.0 * beta) - root) / (2.0 * beta)
    return np.power(rho, np.abs(np.asarray(offsets))) / (h * root)


def resolvent_1d_lattice(kappa: float, h: float, offsets) -> np.ndarray:
    """Lattice Green's function of ``-Delta_h + kappa``; tends to :func:`resolvent_1d_kernel` as h -> 0"""
    if kappa <= 0:
        raise ValueError(f"param ``kappa`` must be > 0. but yours is {kappa}.")
    return lattice_green(1.0 / kappa, h, offsets) / kappa


def neumann_kernel_matrix(grid: Grid1D, sigma: float, tol: float = 1e-18) -> np.ndarray:
    """
    Matrix of ``(I - sigma Delta_h)^(-1)`` with the Neumann closure, built by images.

    Mirroring cell ``j`` across the left edge gives the ghost index ``-1 - j``; the image
    sum has period ``2n``. Entries are ``h G``, so ``K @ f`` is the discrete convolution.
    """
    n = grid.n_cells
    beta = sigma / (grid.h * grid.h)
    rho = ((1.0 + 2.0 * beta) - math.sqrt(1.0 + 4.0 * beta)) / (2.0 * beta)
    reach = int(math.ceil(math.log(tol) / math.log(rho))) if rho > 0 else 0
    periods = reach // (2 * n) + 1

    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    kernel = np.zeros((n, n))
    for m in range(-periods, periods + 1):
        kernel += lattice_green(sigma, grid.h, i - j + 2 * m * n)
        kernel += lattice_green(sigma, grid.h, i + j + 1 + 2 * m * n)
    return grid.h * kernel


class ResolventSolver1D(object):
    """
    Factorized ``-Delta_h + kappa`` with the homogeneous Neumann closure.

    Args:
        grid (Grid1D): grid of the unknowns
        kappa (float): shift, > 0

    Notes:
        The matrix is tridiagonal, symmetric and positive definite. It is factorized once
        and the solver is immutable afterwards, so it can be shared between steps.

    Examples:
        >>> solver = ResolventSolver1D(build_grid(4.0, 400), kappa=1.0)
        >>> h = solver.solve(np.ones(400))  # == 1 / kappa
    """

    def __init__(self, grid: Grid1D, kappa: float):
        if not np.isfinite(kappa) or kappa <= 0:
            raise ValueError(f"param ``kappa`` must be > 0. but yours is {kappa}.")
        self.grid = grid
        self.kappa = float(kappa)
        self.matrix = (
            self.kappa * sp.identity(grid.n_cells, format="csc")
            - neumann_laplacian_matrix(grid.n_cells, grid.h)
        ).tocsc()
        self._solve = factorized(self.matrix)

    def __repr__(self):
        return f"ResolventSolver1D(grid={self.grid!r}, kappa={self.kappa!r})"

    def solve(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.grid.n_cells,):
            raise ValueError(
                f"param ``f`` must have shape ({self.grid.n_cells},). but yours is {f.shape}."
            )
        return self._solve(f)

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return self.kappa * values - neumann_laplacian(values, self.grid.h)


def solve_resolvent_1d(
    f, kappa: float, solver: Optional[ResolventSolver1D] = None, grid: Optional[Grid1D] = None
) -> np.ndarray:
    """
    Solve ``(-Delta_h + kappa) h = f`` on the grid.

    Args:
        f (np.ndarray or ConcentrationField): right-hand side
        kappa (float): shift
        solver (ResolventSolver1D): prefactorized solver; built on demand when omitted
        grid (Grid1D): grid of ``f`` when it is a plain array and no solver is given

    Returns:
        np.ndarray: the solution
    """
    if isinstance(f, ConcentrationField):
        grid = f.grid if grid is None else grid
        f.grid.check_same(grid, "right-hand side")
        f = f.values

    if solver is None:
        if grid is None:
            raise ValueError("param ``grid`` is required when no ``solver`` is given.")
        solver = ResolventSolver1D(grid, kappa)
    elif solver.kappa != kappa:
        raise ValueError(f"solver was factorized for kappa={solver.kappa}, not {kappa}.")
    elif grid is not None:
        solver.grid.check_same(grid, "right-hand side and solver")

    return solver.solve(f)


@dataclass(frozen=True)
class RegularityCheck:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-12)


def regularity_p2(f: np.ndarray, solver: ResolventSolver1D) -> RegularityCheck:
    """``kappa ||h|| + sqrt(kappa) ||Dh|| + ||D^2 h|| <= 5/2 ||f||`` for ``h`` the resolvent of ``f``"""
    h_grid = solver.grid.h
    kappa = solver.kappa
    sol = solver.solve(f)

    def norm(values):
        return math.sqrt(h_grid * float(np.sum(values * values)))

    lhs = (
        kappa * norm(sol)
        + math.sqrt(kappa) * norm(face_gradient(sol, h_grid))
        + norm(neumann_laplacian(sol, h_grid))
    )
    return RegularityCheck(lhs=lhs, rhs=P2_REGULARITY_CONSTANT * norm(np.asarray(f)))


@dataclass(frozen=True)
class SemilinearSolution:
    values: np.ndarray
    residual: float
    iterations: int


def semilinear_resolvent_solve(
    grid: Grid1D,
    kappa: float,
    weight: np.ndarray,
    phi,
    rhs: Optional[np.ndarray] = None,
    shift: float = 0.0,
    v0: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    stage: str = "v_block",
) -> SemilinearSolution:
    """
    Damped Newton for ``(-Delta_h + kappa + shift) v + weight * phi'(v) = rhs``.

    Args:
        grid (Grid1D): grid of the unknowns
        kappa (float): decay rate
        weight (np.ndarray): nonnegative cell weights, ``epsilon * u``
        phi (ResponseFunction): convex response function
        rhs (np.ndarray): right-hand side, zero when omitted
        shift (float): extra diagonal, ``1 / tau`` for an implicit Euler step
        v0 (np.ndarray): initial guess
        tol (float): max-norm tolerance of the residual
        max_iter (int): Newton iteration cap
        stage (str): stage name reported on failure

    Returns:
        SemilinearSolution: solution, final residual and iteration count

    Notes:
        The equation is the first-order condition of the strictly convex map
        ``F_h(v) + shift h/2 |v|^2 + h sum(weight phi(v)) - h rhs . v``. Its Jacobian
        ``(kappa + shift) I - Delta_h + diag(weight phi''(v))`` is tridiagonal and symmetric
        positive definite; steps are backtracked on that objective.
    """
    n, h = grid.n_cells, grid.h
    weight = np.asarray(weight, dtype=np.float64)
    rhs = np.zeros(n) if rhs is None else np.asarray(rhs, dtype=np.float64)
    v = np.zeros(n) if v0 is None else np.array(v0, dtype=np.float64)
    diagonal = kappa + shift

    def residual_of(values):
        return (
            diagonal * values
            - neumann_laplacian(values, h)
            + weight * phi.dphi(values)
            - rhs
        )

    def objective(values):
        grad = face_gradient(values, h)
        return h * (
            0.5 * float(np.sum(grad * grad))
            + 0.5 * diagonal * float(np.sum(values * values))
            + float(np.sum(weight * phi.phi(values)))
            - float(np.sum(rhs * values))
        )

    off = np.full(n - 1, -1.0 / (h * h))
    base = np.full(n, 2.0 / (h * h))
    base[0] = base[-1] = 1.0 / (h * h)
    base += diagonal

    r = residual_of(v)
    norm = float(np.max(np.abs(r)))
    for iteration in range(1, max_iter + 1):
        if norm <= tol:
            return SemilinearSolution(v, norm, iteration - 1)

        banded = np.zeros((2, n))
        banded[0, 1:] = off
        banded[1] = base + weight * phi.d2phi(v)
        step = solveh_banded(banded, -r)

        current = objective(v)
        slope = h * float(np.dot(r, step))
        t = 1.0
        while True:
            trial = v + t * step
            trial_r = residual_of(trial)
            trial_norm = float(np.max(np.abs(trial_r)))
            if objective(trial) <= current + 1e-4 * t * slope or trial_norm < norm:
                break
            t *= 0.5
            if t < 1e-12:
                raise SolverError(stage, "Newton step does not decrease the objective", norm)

        v, r, norm = trial, trial_r, trial_norm

    if norm <= tol:
        return SemilinearSolution(v, norm, max_iter)
    raise SolverError(
        stage,
        f"Newton did not reach residual {tol:g} in {max_iter} iterations; "
        f"decrease tau or epsilon",
        norm,
    )
