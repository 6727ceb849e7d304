# Copyright 2021 The Chemoflow Authors.

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from chemoflow.domain import (
    U_FLOOR,
    ProbabilityDensity,
    SystemState,
    density_from_quantiles,
    quantile_nodes,
)

__all__ = [
    "MAX_BRUTEFORCE_BINS",
    "CompoundDistance",
    "w2",
    "w2_squared",
    "w2_quantiles",
    "w2_bruteforce",
    "l2_distance",
    "compound_dist",
    "pushforward",
]

MAX_BRUTEFORCE_BINS = 12


@dataclass(frozen=True)
class CompoundDistance:
    w2_part: float
    l2_part: float

    @property
    def total(self) -> float:
        return float(np.hypot(self.w2_part, self.l2_part))

    @property
    def squared(self) -> float:
        return self.w2_part ** 2 + self.l2_part ** 2


def _quantile_pieces(u: ProbabilityDensity, s: np.ndarray, mid: np.ndarray, u_floor: float):
    """Quantile function at ``s``, using the linear piece that contains ``mid``"""
    grid = u.grid
    cdf = u.cdf(u_floor)
    upper = np.clip(np.searchsorted(cdf, mid, side="left"), 1, grid.n_cells)
    lower = upper - 1
    width = cdf[upper] - cdf[lower]
    return grid.edges[lower] + grid.h * (s - cdf[lower]) / width, lower


def w2_squared(
    u1: ProbabilityDensity, u2: ProbabilityDensity, u_floor: float = U_FLOOR
) -> float:
    """
    Squared quadratic Wasserstein distance of two grid densities.

    The quantile function of a cellwise constant density is piecewise linear in the mass
    variable, with breakpoints at the CDF values of the cell edges. Between consecutive
    breakpoints of either density the difference of the two quantile functions is linear,
    so ``int_0^1 (X1 - X2)^2 ds`` is summed exactly piece by piece.
    """
    u1.grid.check_same(u2.grid, "densities")

    breaks = np.unique(np.concatenate([u1.cdf(u_floor), u2.cdf(u_floor)]))
    breaks = breaks[(breaks >= 0.0) & (breaks <= 1.0)]
    a, b = breaks[:-1], breaks[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    mid = 0.5 * (a + b)

    d_a = _quantile_pieces(u1, a, mid, u_floor)[0] - _quantile_pieces(u2, a, mid, u_floor)[0]
    d_b = _quantile_pieces(u1, b, mid, u_floor)[0] - _quantile_pieces(u2, b, mid, u_floor)[0]
    return float(np.sum((b - a) * (d_a * d_a + d_a * d_b + d_b * d_b)) / 3.0)


def w2(u1: ProbabilityDensity, u2: ProbabilityDensity, u_floor: float = U_FLOOR) -> float:
    """
    Quadratic Wasserstein distance of two densities on the same grid.

    Args:
        u1 (ProbabilityDensity): first density
        u2 (ProbabilityDensity): second density
        u_floor (float): cells below this value carry no mass

    Returns:
        float: ``sqrt(int_0^1 |X1(s) - X2(s)|^2 ds)``

    Examples:
        >>> grid = build_grid(4.0, 400)
        >>> a = density_from_function(lambda x: (0 <= x) & (x <= 1), grid)
        >>> b = density_from_function(lambda x: (1 <= x) & (x <= 2), grid)
        >>> round(w2(a, b), 12)
        1.0
    """
    return float(np.sqrt(max(w2_squared(u1, u2, u_floor), 0.0)))


def w2_quantiles(X1: np.ndarray, X2: np.ndarray) -> float:
    """
    Node rule for quantile vectors at ``s_j = (j - 1/2) / m``.

    Vectors of different length are compared on the finer node set, the coarser one
    linearly interpolated between its nodes.
    """
    X1 = np.asarray(X1, dtype=np.float64)
    X2 = np.asarray(X2, dtype=np.float64)
    m = max(X1.size, X2.size)
    s = quantile_nodes(m)
    if X1.size != m:
        X1 = np.interp(s, quantile_nodes(X1.size), X1)
    if X2.size != m:
        X2 = np.interp(s, quantile_nodes(X2.size), X2)
    return float(np.sqrt(np.mean((X1 - X2) ** 2)))


def _as_histogram(hist, name: str) -> Tuple[np.ndarray, np.ndarray]:
    positions, masses = (np.asarray(a, dtype=np.float64).ravel() for a in hist)
    if positions.shape != masses.shape:
        raise ValueError(f"param ``{name}`` must pair one mass with every position.")
    if positions.size > MAX_BRUTEFORCE_BINS:
        raise ValueError(
            f"param ``{name}`` must have at most {MAX_BRUTEFORCE_BINS} bins. "
            f"but yours has {positions.size}."
        )
    if np.any(masses < 0.0):
        raise ValueError(f"param ``{name}`` has negative masses.")
    order = np.argsort(positions, kind="stable")
    return positions[order], masses[order]


def w2_bruteforce(
    hist1: Tuple[Sequence[float], Sequence[float]],
    hist2: Tuple[Sequence[float], Sequence[float]],
    mass_tol: float = 1e-12,
) -> float:
    """
    Exact transport cost between two small histograms of point masses.

    Args:
        hist1 (tuple): ``(positions, masses)``, at most 12 bins
        hist2 (tuple): ``(positions, masses)`` with the same total mass
        mass_tol (float): allowed relative mismatch of the total masses

    Returns:
        float: square root of the optimal quadratic cost

    Notes:
        In one dimension the north-west-corner coupling of the sorted histograms is
        optimal for every convex cost, so no linear program is needed.
    """
    x, a = _as_histogram(hist1, "hist1")
    y, b = _as_histogram(hist2, "hist2")

    total_a, total_b = a.sum(), b.sum()
    if abs(total_a - total_b) > mass_tol * max(1.0, total_a, total_b):
        raise ValueError(
            f"histograms must carry equal mass. but they carry {total_a!r} and {total_b!r}."
        )

    a, b = a.copy(), b.copy()
    i = j = 0
    cost = 0.0
    while i < a.size and j < b.size:
        moved = min(a[i], b[j])
        cost += moved * (x[i] - y[j]) ** 2
        a[i] -= moved
        b[j] -= moved
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1

    return float(np.sqrt(cost))


def l2_distance(v1: np.ndarray, v2: np.ndarray, h: float) -> float:
    return float(np.sqrt(h * np.sum((np.asarray(v1) - np.asarray(v2)) ** 2)))


def compound_dist(a: SystemState, b: SystemState) -> CompoundDistance:
    """``sqrt(W2(u_a, u_b)^2 + ||v_a - v_b||^2)`` split into its two parts"""
    a.grid.check_same(b.grid, "states")
    return CompoundDistance(
        w2_part=w2(a.u, b.u),
        l2_part=l2_distance(a.v.values, b.v.values, a.grid.h),
    )


def pushforward(
    u: ProbabilityDensity, transport_map: Callable, m: Optional[int] = None
) -> ProbabilityDensity:
    """
    Push a density forward by a strictly increasing map.

    Args:
        u (ProbabilityDensity): density to transport
        transport_map (Callable): vectorized map, strictly increasing on the support of ``u``
        m (int): number of quantile nodes, default ``n_cells``

    Returns:
        ProbabilityDensity: the density whose quantiles are ``transport_map(X)``
    """
    X = u.quantiles(m)
    Y = np.asarray(transport_map(X), dtype=np.float64)

    if Y.shape != X.shape or not np.all(np.isfinite(Y)):
        raise ValueError("param ``transport_map`` must return one finite value per point.")

    steps = np.diff(Y)
    if np.any(steps <= 0.0):
        bad = int(np.flatnonzero(steps <= 0.0)[0])
        raise ValueError(
            f"param ``transport_map`` must be strictly increasing on the support. "
            f"but it is not between x={X[bad]:.6g} and x={X[bad + 1]:.6g}."
        )

    return density_from_quantiles(Y, u.grid)
