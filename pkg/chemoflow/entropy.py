# Copyright 2021 The Chemoflow Authors.

import logging
from dataclasses import dataclass

import numpy as np

from chemoflow.domain import (
    U_FLOOR,
    ConcentrationField,
    Grid1D,
    ModelParams,
    ProbabilityDensity,
    SystemState,
    face_gradient,
    neumann_laplacian,
)

__all__ = [
    "EL_TOL",
    "EntropyBreakdown",
    "LyapunovBreakdown",
    "SubdiffBounds",
    "entropy_H",
    "entropy_value",
    "boltzmann_E",
    "dirichlet_F",
    "dirichlet_energy",
    "el_residual",
    "lyapunov",
    "lyapunov_total",
    "dissipation_Du",
    "dissipation_Dv",
    "convexity_probe",
    "l2_norm",
    "grad_norm_lq",
    "lq_norm",
    "w12_norm",
    "subdiff_bounds_u",
    "subdiff_bounds_v",
    "hest_lower_bound",
]

logger = logging.getLogger(__name__)

EL_TOL = 1e-6


@dataclass(frozen=True)
class EntropyBreakdown:
    internal: float
    potential: float
    dirichlet: float
    decay: float
    coupling: float

    @property
    def total(self) -> float:
        return self.internal + self.potential + self.dirichlet + self.decay + self.coupling

    def to_dict(self) -> dict:
        return {
            "internal": self.internal,
            "potential": self.potential,
            "dirichlet": self.dirichlet,
            "decay": self.decay,
            "coupling": self.coupling,
            "total": self.total,
        }


@dataclass(frozen=True)
class LyapunovBreakdown:
    L_u: float
    L_v: float
    L_star: float
    decomposition_residual: float

    @property
    def principal(self) -> float:
        return self.L_u + self.L_v


@dataclass(frozen=True)
class SubdiffBounds:
    lower: float
    value: float
    upper: float

    def holds(self, rel_tol: float = 0.0) -> bool:
        return self.lower <= self.value * (1.0 + rel_tol) and self.value <= self.upper * (
            1.0 + rel_tol
        )


def dirichlet_energy(values: np.ndarray, kappa: float, h: float) -> float:
    """``h/2 sum(Dv^2) + kappa h/2 sum(v^2)``; its gradient is ``h (-Delta_h + kappa) v``"""
    grad = face_gradient(values, h)
    return float(0.5 * h * np.sum(grad * grad) + 0.5 * kappa * h * np.sum(values * values))


def _parts(u: np.ndarray, v: np.ndarray, p: ModelParams, grid: Grid1D) -> EntropyBreakdown:
    h = grid.h
    grad = face_gradient(v, h)
    return EntropyBreakdown(
        internal=float(0.5 * h * np.sum(u * u)),
        potential=float(h * np.sum(u * p.potential_on(grid))),
        dirichlet=float(0.5 * h * np.sum(grad * grad)),
        decay=float(0.5 * p.kappa * h * np.sum(v * v)),
        coupling=float(p.epsilon * h * np.sum(u * p.phi.phi(v))) if p.epsilon > 0 else 0.0,
    )


def entropy_H(s: SystemState, p: ModelParams) -> EntropyBreakdown:
    """
    Driving entropy of the coupled system, split into its five integrals.

    Args:
        s (SystemState): state
        p (ModelParams): coefficients

    Returns:
        EntropyBreakdown: ``int u^2/2``, ``int u W``, ``int |Dv|^2/2``, ``kappa int v^2/2``
        and ``epsilon int u phi(v)``
    """
    return _parts(s.u.values, s.v.values, p, s.grid)


def entropy_value(u: np.ndarray, v: np.ndarray, p: ModelParams, grid: Grid1D) -> float:
    """Total entropy of raw cell arrays"""
    return _parts(u, v, p, grid).total


def boltzmann_E(u: ProbabilityDensity, u_floor: float = U_FLOOR) -> float:
    """``int u log u`` with ``0 log 0 = 0``"""
    values = u.values[u.values > u_floor]
    return float(u.grid.h * np.sum(values * np.log(values)))


def dirichlet_F(v: ConcentrationField, kappa: float) -> float:
    if kappa <= 0:
        raise ValueError(f"param ``kappa`` must be > 0. but yours is {kappa}.")
    return dirichlet_energy(v.values, kappa, v.grid.h)


def el_residual(u: np.ndarray, v: np.ndarray, p: ModelParams, grid: Grid1D) -> float:
    """Max-norm residual of ``Delta_h v - kappa v = epsilon u phi'(v)``"""
    r = neumann_laplacian(v, grid.h) - p.kappa * v - p.epsilon * u * p.phi.dphi(v)
    return float(np.max(np.abs(r)))


def lyapunov(
    s: SystemState, stationary: SystemState, p: ModelParams, el_tol: float = EL_TOL
) -> LyapunovBreakdown:
    """
    Split ``H(u, v) - H(u_inf, v_inf)`` into ``L_u + L_v + epsilon L_star``.

    Args:
        s (SystemState): state
        stationary (SystemState): stationary pair, satisfying the Euler-Lagrange system
        p (ModelParams): coefficients
        el_tol (float): largest accepted Euler-Lagrange residual of ``stationary``

    Returns:
        LyapunovBreakdown: the components and the residual of the decomposition

    Notes:
        ``L_u`` uses the perturbed potential ``W_eps = W + epsilon phi(v_inf)``. The
        decomposition is exact on the grid up to ``h sum(r (v - v_inf))`` where ``r`` is the
        Euler-Lagrange residual of the stationary ``v``.
    """
    s.grid.check_same(stationary.grid, "state and stationary state")
    grid = s.grid
    h = grid.h
    u, v = s.u.values, s.v.values
    u_inf, v_inf = stationary.u.values, stationary.v.values

    residual = el_residual(u_inf, v_inf, p, grid)
    if residual > el_tol:
        raise ValueError(
            f"param ``stationary`` must satisfy the Euler-Lagrange system within {el_tol:g}. "
            f"but its residual is {residual:.3e}."
        )

    phi = p.phi
    W_eps = p.effective_potential(v_inf, grid)
    L_u = h * np.sum(0.5 * (u * u - u_inf * u_inf) + W_eps * (u - u_inf))
    L_v = dirichlet_energy(v - v_inf, p.kappa, h)
    L_star = h * np.sum(
        u * (phi.phi(v) - phi.phi(v_inf)) - u_inf * phi.dphi(v_inf) * (v - v_inf)
    )

    gap = entropy_value(u, v, p, grid) - entropy_value(u_inf, v_inf, p, grid)
    return LyapunovBreakdown(
        L_u=float(L_u),
        L_v=float(L_v),
        L_star=float(L_star),
        decomposition_residual=float(gap - (L_u + L_v + p.epsilon * L_star)),
    )


def lyapunov_total(s: SystemState, stationary: SystemState, p: ModelParams) -> float:
    return lyapunov(s, stationary, p).principal


def _face_mean(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values[1:] + values[:-1])


def dissipation_Du(
    s: SystemState, stationary: SystemState, p: ModelParams, u_floor: float = U_FLOOR
) -> float:
    """
    ``(1 - eps/2) int u |D(u + W_eps)|^2 - eps/2 int u |D(phi(v) - phi(v_inf))|^2``.

    Gradients are differences across the n - 1 interior faces rather than central
    differences; the value is zero at the discrete stationary state. Face values of ``u``
    are averages of the adjacent cells; faces next to an empty cell (``u <= u_floor``) are skipped.
    """
    grid = s.grid
    h = grid.h
    u, v = s.u.values, s.v.values
    v_inf = stationary.v.values
    eps = p.epsilon

    occupied = (u[1:] > u_floor) & (u[:-1] > u_floor)
    u_face = _face_mean(u)[occupied]

    drift = face_gradient(u + p.effective_potential(v_inf, grid), h)[occupied]
    value = (1.0 - 0.5 * eps) * h * np.sum(u_face * drift * drift)

    if eps > 0:
        phi = p.phi
        coupling = face_gradient(phi.phi(v) - phi.phi(v_inf), h)[occupied]
        value -= 0.5 * eps * h * np.sum(u_face * coupling * coupling)

    return float(value)


def dissipation_Dv(s: SystemState, stationary: SystemState, p: ModelParams) -> float:
    """
    ``(1 - eps/2) int (Delta w - kappa w)^2 - eps/2 int (u phi'(v) - u_inf phi'(v_inf))^2``
    with ``w = v - v_inf`` and the 3-point Laplacian with homogeneous Neumann closure.
    """
    h = s.grid.h
    w = s.v.values - stationary.v.values
    eps = p.epsilon

    flow = neumann_laplacian(w, h) - p.kappa * w
    value = (1.0 - 0.5 * eps) * h * np.sum(flow * flow)

    if eps > 0:
        dphi = p.phi.dphi
        source = s.u.values * dphi(s.v.values) - stationary.u.values * dphi(stationary.v.values)
        value -= 0.5 * eps * h * np.sum(source * source)

    return float(value)


def convexity_probe(
    s0: SystemState, s1: SystemState, p: ModelParams, n_samples: int = 21, delta: float = 1e-3
) -> float:
    """
    Smallest flat convexity ratio of ``H`` on the segment from ``s0`` to ``s1``.

    The second difference of ``t -> H((1 - t) s0 + t s1)`` with step ``delta`` is divided by
    ``||u1 - u0||^2 + ||v1 - v0||^2`` at ``n_samples`` points of [delta, 1 - delta].

    Returns:
        float: minimum ratio over the samples
    """
    s0.grid.check_same(s1.grid, "states")
    grid = s0.grid
    h = grid.h

    du = s1.u.values - s0.u.values
    dv = s1.v.values - s0.v.values
    dist2 = h * np.sum(du * du) + h * np.sum(dv * dv)
    if dist2 <= 0.0:
        raise ValueError("states ``s0`` and ``s1`` coincide; the convexity ratio is undefined.")

    def H(t):
        return entropy_value(s0.u.values + t * du, s0.v.values + t * dv, p, grid)

    ratios = []
    for t in np.linspace(delta, 1.0 - delta, n_samples):
        second = (H(t - delta) - 2.0 * H(t) + H(t + delta)) / (delta * delta)
        ratios.append(second / dist2)

    return float(np.min(ratios))


def l2_norm(values: np.ndarray, h: float) -> float:
    return float(np.sqrt(h * np.sum(np.asarray(values) ** 2)))


def lq_norm(values: np.ndarray, h: float, q: float) -> float:
    if q < 1:
        raise ValueError(f"param ``q`` must be >= 1. but yours is {q}.")
    return float((h * np.sum(np.abs(np.asarray(values, dtype=np.float64)) ** q)) ** (1.0 / q))


def grad_norm_lq(values: np.ndarray, h: float, q: float) -> float:
    """``(h sum |Dv|^q)^(1/q)`` over the interior faces"""
    if q < 1:
        raise ValueError(f"param ``q`` must be >= 1. but yours is {q}.")
    grad = np.abs(face_gradient(np.asarray(values, dtype=np.float64), h))
    return float((h * np.sum(grad ** q)) ** (1.0 / q))


def w12_norm(values: np.ndarray, h: float) -> float:
    return float(np.hypot(l2_norm(values, h), grad_norm_lq(values, h, 2.0)))


def subdiff_bounds_u(
    s: SystemState, stationary: SystemState, p: ModelParams, u_floor: float = U_FLOOR
) -> SubdiffBounds:
    """
    ``1/2 ||u - u_inf||^2 <= L_u(u) <= 1/(2 lambda0) int u |D(u + W_eps)|^2``.

    The upper bound is the uncoupled dissipation, so it is meaningful at ``epsilon = 0``.
    """
    h = s.grid.h
    u = s.u.values
    diff = u - stationary.u.values

    occupied = (u[1:] > u_floor) & (u[:-1] > u_floor)
    drift = face_gradient(u + p.effective_potential(stationary.v.values, s.grid), h)[occupied]
    uncoupled = float(h * np.sum(_face_mean(u)[occupied] * drift * drift))

    return SubdiffBounds(
        lower=float(0.5 * h * np.sum(diff * diff)),
        value=lyapunov(s, stationary, p).L_u,
        upper=uncoupled / (2.0 * p.lambda0),
    )


def subdiff_bounds_v(s: SystemState, stationary: SystemState, p: ModelParams) -> SubdiffBounds:
    """``kappa/2 ||w||^2 <= L_v(v) <= 1/(2 kappa) int (Delta w - kappa w)^2``"""
    h = s.grid.h
    w = s.v.values - stationary.v.values
    flow = neumann_laplacian(w, h) - p.kappa * w
    return SubdiffBounds(
        lower=float(0.5 * p.kappa * h * np.sum(w * w)),
        value=dirichlet_energy(w, p.kappa, h),
        upper=float(h * np.sum(flow * flow) / (2.0 * p.kappa)),
    )


def hest_lower_bound(s: SystemState, p: ModelParams) -> float:
    """
    Literal lower bound of ``H`` available without system constants.

    Every term of ``H`` is nonnegative when ``epsilon = 0`` and ``W >= 0``, so the bound is 0.
    """
    if p.epsilon > 0:
        raise ValueError(
            "param ``epsilon`` must be 0: the lower bound constants for a coupled "
            "system are not computable."
        )
    if np.any(p.potential_on(s.grid) < 0.0):
        raise ValueError("the confinement must be nonnegative on the grid.")
    return 0.0
