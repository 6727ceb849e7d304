# Copyright 2021 The Chemoflow Authors.

import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.integrate import quad

from chemoflow.domain import build_grid
from chemoflow.kernels.radial import (
    RadialKernel,
    grad_iterate_Lq,
    heat_gradient_norm,
    heat_kernel3d,
    iterate_decay_factor,
    radial_convolve,
    radial_mass,
    yukawa_constant,
    yukawa_derivatives,
    yukawa_derivatives_autograd,
    yukawa_G,
    yukawa_iterate,
    yukawa_iterate_closed,
)
from chemoflow.kernels.resolvent import (
    P2_REGULARITY_CONSTANT,
    ResolventSolver1D,
    regularity_p2,
    resolvent_1d_kernel,
    resolvent_1d_lattice,
)

__all__ = ["KernelCheck", "run_kernel_suite", "yukawa_pde_residual"]

logger = logging.getLogger(__name__)

BOUND_SIGMAS = (0.5, 1.0, 2.0)
BOUND_STEPS = (1, 2, 4)
BOUND_EXPONENTS = (1.0, 1.2, 1.4)


@dataclass
class KernelCheck:
    """
    One row of the kernel verification table.

    ``relation`` is 'eq' (``|lhs - rhs| <= tol``) or 'le' (``lhs <= rhs + tol``).
    """

    check: str
    lhs: float
    rhs: float
    tol: float
    relation: str = "eq"

    @property
    def passed(self) -> bool:
        if not (np.isfinite(self.lhs) and np.isfinite(self.rhs)):
            return False
        if self.relation == "le":
            return self.lhs <= self.rhs + self.tol
        return abs(self.lhs - self.rhs) <= self.tol

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "tol": self.tol,
            "pass": self.passed,
        }


def yukawa_pde_residual(kappa: float = 1.0, radii=(0.5, 1.0, 1.5), step: float = 5e-3) -> float:
    """
    Largest ``|-Delta u + kappa u - f|`` at ``radii`` for ``u = G_kappa * f``, ``f = exp(-r^2)``.

    The radial Laplacian ``u'' + 2 u' / r`` is taken by central differences.
    """
    kernel = RadialKernel.yukawa3d(kappa)

    def f(s):
        return math.exp(-s * s)

    worst = 0.0
    for r in radii:
        u_minus, u_mid, u_plus = (radial_convolve(f, kernel, r + d) for d in (-step, 0.0, step))
        laplacian = (u_plus - 2.0 * u_mid + u_minus) / step ** 2 + (u_plus - u_minus) / (step * r)
        worst = max(worst, abs(-laplacian + kappa * u_mid - f(r)))
    return worst


def _finite_difference_gradient(kappa: float, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        grad[i] = (yukawa_G(kappa, np.linalg.norm(x + e)) - yukawa_G(kappa, np.linalg.norm(x - e))) / (
            2.0 * step
        )
    return grad


def _derivative_rows(rng: np.random.Generator) -> List[KernelCheck]:
    rows = [
        KernelCheck(
            "yukawa_gradient_x100_k1",
            float(yukawa_derivatives(1.0, [1.0, 0.0, 0.0])[0][0]),
            -2.0 * math.exp(-1.0) / (4.0 * math.pi),
            1e-15,
        )
    ]

    fd_error = trace_error = autograd_error = 0.0
    for _ in range(20):
        x = rng.uniform(-2.0, 2.0, size=3)
        x *= max(1.0, 0.3 / np.linalg.norm(x))
        grad, hess, third = yukawa_derivatives(1.0, x)
        fd_error = max(fd_error, float(np.max(np.abs(grad - _finite_difference_gradient(1.0, x)))))
        trace_error = max(trace_error, abs(np.trace(hess) - yukawa_G(1.0, np.linalg.norm(x))))
        auto = yukawa_derivatives_autograd(1.0, x)
        for closed, oracle in zip((grad, hess, third), auto):
            autograd_error = max(autograd_error, float(np.max(np.abs(closed - oracle))))

    rows += [
        KernelCheck("yukawa_gradient_finite_difference", fd_error, 0.0, 1e-6),
        KernelCheck("yukawa_hessian_trace", trace_error, 0.0, 1e-8),
        KernelCheck("yukawa_derivatives_autograd", autograd_error, 0.0, 1e-10),
    ]
    return rows


def _heat_rows() -> List[KernelCheck]:
    return [
        KernelCheck("heat_value_t1_r0", heat_kernel3d(1.0, 0.0), (4.0 * math.pi) ** -1.5, 1e-15),
        KernelCheck("heat_mass_t1", radial_mass(RadialKernel.heat3d(1.0)), 1.0, 1e-8),
        KernelCheck(
            "heat_semigroup_t1_t1",
            radial_convolve(RadialKernel.heat3d(1.0), RadialKernel.heat3d(1.0), 1.0),
            heat_kernel3d(2.0, 1.0),
            1e-6,
        ),
        KernelCheck("heat_gradient_L1", heat_gradient_norm(1.0), 2.0 / math.sqrt(math.pi), 1e-8),
        KernelCheck("Y1_closed_form", yukawa_constant(1.0), 2.0, 1e-8),
    ]


def _iterate_rows() -> List[KernelCheck]:
    rows = [
        KernelCheck("yukawa_value_k1_r1", yukawa_G(1.0, 1.0), math.exp(-1.0) / (4.0 * math.pi), 1e-15),
        KernelCheck("yukawa_value_k4_r05", yukawa_G(4.0, 0.5), math.exp(-1.0) / (2.0 * math.pi), 1e-15),
        KernelCheck(
            "yukawa_scaling_sigma2",
            yukawa_iterate_closed(2.0, 1, 1.0),
            yukawa_G(0.5, 1.0) / 2.0,
            1e-15,
        ),
        KernelCheck("iterate_k1_reduction", yukawa_iterate(1.0, 1, 1.0), yukawa_G(1.0, 1.0), 1e-12),
    ]

    radii = np.array([0.05, 0.5, 1.0, 3.0])
    for k in (1, 2, 4, 8):
        mixture = yukawa_iterate(1.0, k, radii)
        closed = yukawa_iterate_closed(1.0, k, radii)
        rows.append(
            KernelCheck(
                f"iterate_closed_form_k{k}",
                float(np.max(np.abs(mixture - closed) / closed)),
                0.0,
                1e-8,
            )
        )

    for k in (1, 2, 3, 4):
        rows.append(KernelCheck(f"iterate_mass_k{k}", radial_mass(RadialKernel.iterate(1.0, k)), 1.0, 1e-6))

    yukawa = RadialKernel.yukawa3d(1.0)
    rows.append(
        KernelCheck(
            "iterate_semigroup_k2",
            radial_convolve(yukawa, yukawa, 1.0),
            yukawa_iterate(1.0, 2, 1.0),
            1e-5,
        )
    )
    for k1, k2 in ((1, 2), (1, 3), (2, 2), (1, 5), (2, 4), (3, 3)):
        rows.append(
            KernelCheck(
                f"iterate_semigroup_k{k1}_k{k2}",
                radial_convolve(RadialKernel.iterate(1.0, k1), RadialKernel.iterate(1.0, k2), 1.0),
                yukawa_iterate_closed(1.0, k1 + k2, 1.0),
                1e-5,
            )
        )

    rows.append(KernelCheck("yukawa_pde_residual", yukawa_pde_residual(), 0.0, 1e-4))
    return rows


def _bound_rows() -> List[KernelCheck]:
    tight = grad_iterate_Lq(1.0, 1, 1.0)
    rows = [
        KernelCheck("Yq_bound_q1_sigma1_k1", tight.norm, tight.bound, 1e-8),
    ]
    for q in BOUND_EXPONENTS:
        for sigma in BOUND_SIGMAS:
            for k in BOUND_STEPS:
                result = grad_iterate_Lq(sigma, k, q)
                rows.append(
                    KernelCheck(
                        f"Yq_bound_q{q:g}_sigma{sigma:g}_k{k}",
                        result.norm,
                        result.bound,
                        1e-8,
                        relation="le",
                    )
                )
        Q = 2.0 - 1.5 / q
        factors = iterate_decay_factor(np.arange(1, 51), Q)
        rows.append(
            KernelCheck(f"iterate_decay_monotone_q{q:g}", float(np.max(np.diff(factors))), 0.0, 0.0, "le")
        )
    return rows


def _resolvent_rows(rng: np.random.Generator) -> List[KernelCheck]:
    grid = build_grid(4.0, 400)
    solver = ResolventSolver1D(grid, 1.0)
    x = grid.centers

    f = rng.standard_normal(grid.n_cells)
    identity = float(np.max(np.abs(solver.apply(solver.solve(f)) - f)))

    constant = float(np.max(np.abs(solver.solve(np.full(grid.n_cells, 3.0)) - 3.0)))

    mode = np.cos(math.pi * x / grid.half_width)
    eigen = 4.0 / grid.h ** 2 * math.sin(math.pi * grid.h / (2.0 * grid.half_width)) ** 2
    cosine = float(np.max(np.abs(solver.solve(mode) - mode / (1.0 + eigen))))

    worst_ratio = 0.0
    for _ in range(20):
        worst_ratio = max(worst_ratio, regularity_p2(rng.standard_normal(grid.n_cells), solver).ratio)

    fine = build_grid(4.0, 800)
    bump = np.zeros(fine.n_cells)
    bump[fine.n_cells // 2] = 1.0 / fine.h
    response = ResolventSolver1D(fine, 1.0).solve(bump)
    lattice_mass = quad(lambda s: resolvent_1d_kernel(2.0, s), -np.inf, np.inf)[0]

    return [
        KernelCheck("resolvent_identity", identity, 0.0, 1e-10),
        KernelCheck("resolvent_constant", constant, 0.0, 1e-12),
        KernelCheck("resolvent_cosine_mode", cosine, 0.0, 1e-8),
        KernelCheck(
            "resolvent_regularity_p2",
            worst_ratio * P2_REGULARITY_CONSTANT,
            P2_REGULARITY_CONSTANT,
            0.0,
            "le",
        ),
        KernelCheck(
            "resolvent_kernel_center",
            float(response[fine.n_cells // 2]),
            resolvent_1d_kernel(1.0, 0.0),
            1e-3,
        ),
        KernelCheck(
            "resolvent_lattice_limit",
            float(resolvent_1d_lattice(1.0, 1e-3, 1000)),
            resolvent_1d_kernel(1.0, 1.0),
            1e-6,
        ),
        KernelCheck("resolvent_kernel_mass", lattice_mass, 0.5, 1e-10),
    ]


def run_kernel_suite(seed: int = 42) -> List[KernelCheck]:
    """
    Run every kernel identity and bound and return the verification table.

    Args:
        seed (int): seed of the random inputs

    Returns:
        List[KernelCheck]: rows with ``check``, ``lhs``, ``rhs``, ``tol`` and ``pass``
    """
    rng = np.random.default_rng(seed)
    rows = []
    for section, build in (
        ("derivatives", lambda: _derivative_rows(rng)),
        ("heat", _heat_rows),
        ("iterates", _iterate_rows),
        ("bounds", _bound_rows),
        ("resolvent", lambda: _resolvent_rows(rng)),
    ):
        logger.debug(f"kernel suite: {section}")
        rows.extend(build())

    failed = [row.check for row in rows if not row.passed]
    if failed:
        logger.warning(f"{len(failed)} kernel checks failed: {', '.join(failed)}")
    else:
        logger.info(f"all {len(rows)} kernel checks passed")
    return rows
