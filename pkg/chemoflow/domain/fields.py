# Copyright 2021 The Chemoflow Authors.

import logging
from typing import Callable, Optional

import numpy as np

from chemoflow.domain.grid import Grid1D

__all__ = [
    "MASS_TOL",
    "U_FLOOR",
    "ProbabilityDensity",
    "ConcentrationField",
    "SystemState",
    "density_from_function",
    "density_from_quantiles",
    "quantile_nodes",
    "quantile_of",
]

logger = logging.getLogger(__name__)

MASS_TOL = 1e-10
U_FLOOR = 1e-12


def _frozen(values) -> np.ndarray:
    values = np.array(values, dtype=np.float64)
    values.flags.writeable = False
    return values


class ProbabilityDensity(object):
    """
    Nonnegative cell values of unit mass on a grid.

    Args:
        values (np.ndarray): cell values u_i >= 0
        grid (Grid1D): grid the values live on

    Notes:
        The quantile representation is computed lazily by :func:`quantile_of` and
        cached per node count. Instances are immutable.
    """

    def __init__(self, values, grid: Grid1D):
        values = _frozen(values)

        if values.shape != (grid.n_cells,):
            raise ValueError(
                f"param ``values`` must have shape ({grid.n_cells},). "
                f"but yours is {values.shape}."
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("param ``values`` must be finite.")
        if np.any(values < 0.0):
            raise ValueError(
                f"a probability density must be nonnegative. "
                f"minimum value is {values.min():.3e} at x={grid.centers[values.argmin()]:.6g}."
            )

        mass = grid.integrate(values)
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(
                f"a probability density must have unit mass within {MASS_TOL}. "
                f"but its mass is {mass!r}."
            )

        self.values = values
        self.grid = grid
        self._quantiles = {}

    def __repr__(self):
        return f"ProbabilityDensity(grid={self.grid!r})"

    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def cdf(self, u_floor: float = U_FLOOR) -> np.ndarray:
        """Cumulative mass at the n + 1 cell edges; cells below ``u_floor`` count as empty"""
        occupied = np.where(self.values >= u_floor, self.values, 0.0)
        cdf = np.concatenate([[0.0], np.cumsum(occupied)])
        return cdf / cdf[-1]

    def quantiles(self, m: Optional[int] = None) -> np.ndarray:
        m = self.grid.n_cells if m is None else int(m)
        if m not in self._quantiles:
            self._quantiles[m] = quantile_of(self, m)
        return self._quantiles[m]

    def second_moment(self) -> float:
        return self.grid.integrate(self.grid.centers ** 2 * self.values)

    def mean(self) -> float:
        return self.grid.integrate(self.grid.centers * self.values)

    def support(self, u_floor: float = U_FLOOR) -> np.ndarray:
        """Boolean mask of occupied cells"""
        return self.values > u_floor

    def shift(self, a: float, m: Optional[int] = None) -> "ProbabilityDensity":
        """Translate by ``a`` (quantiles move by ``a``)"""
        return density_from_quantiles(self.quantiles(m) + a, self.grid)

    def dilate(self, lam: float, m: Optional[int] = None) -> "ProbabilityDensity":
        """Return ``u(x / lam) / lam``"""
        if lam <= 0:
            raise ValueError(f"param ``lam`` must be positive. but yours is {lam}.")
        return density_from_quantiles(lam * self.quantiles(m), self.grid)

    @classmethod
    def mixture(
        cls, a: "ProbabilityDensity", b: "ProbabilityDensity", theta: float
    ) -> "ProbabilityDensity":
        """Flat interpolation ``(1 - theta) a + theta b``"""
        a.grid.check_same(b.grid, "densities")
        values = (1.0 - theta) * a.values + theta * b.values
        return cls(np.maximum(values, 0.0), a.grid)


class ConcentrationField(object):
    """
    Finite cell values of the chemical concentration on a grid.

    Args:
        values (np.ndarray): cell values v_i
        grid (Grid1D): grid the values live on
    """

    def __init__(self, values, grid: Grid1D):
        values = _frozen(values)

        if values.shape != (grid.n_cells,):
            raise ValueError(
                f"param ``values`` must have shape ({grid.n_cells},). "
                f"but yours is {values.shape}."
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("a concentration field must be finite everywhere.")

        self.values = values
        self.grid = grid

    def __repr__(self):
        return f"ConcentrationField(grid={self.grid!r})"

    @classmethod
    def zeros(cls, grid: Grid1D) -> "ConcentrationField":
        return cls(np.zeros(grid.n_cells), grid)

    @classmethod
    def from_function(cls, f: Callable, grid: Grid1D) -> "ConcentrationField":
        return cls(np.asarray(f(grid.centers), dtype=np.float64), grid)

    def min(self) -> float:
        return float(self.values.min())

    def check_nonnegative(self, tol_neg: float, where: str = "") -> bool:
        """Log a warning and return False when some value is below ``-tol_neg``"""
        lowest = self.min()
        if lowest < -tol_neg:
            logger.warning(
                f"v dropped below -{tol_neg:.1e}{' ' + where if where else ''}: "
                f"min v = {lowest:.3e} at x = {self.grid.centers[self.values.argmin()]:.6g}"
            )
            return False
        return True


class SystemState(object):
    """
    A point (u, v) of the product space, both components on the same grid.

    Args:
        u (ProbabilityDensity): cell density
        v (ConcentrationField): chemical concentration
    """

    def __init__(self, u: ProbabilityDensity, v: ConcentrationField):
        u.grid.check_same(v.grid, "u and v")
        self.u = u
        self.v = v

    def __repr__(self):
        return f"SystemState(grid={self.grid!r})"

    @property
    def grid(self) -> Grid1D:
        return self.u.grid

    def replace(self, u: ProbabilityDensity = None, v: ConcentrationField = None):
        return SystemState(self.u if u is None else u, self.v if v is None else v)


def density_from_function(f: Callable, grid: Grid1D) -> ProbabilityDensity:
    """
    Sample a nonnegative function at the cell centres and normalize it.

    Args:
        f (Callable): vectorized nonnegative function
        grid (Grid1D): target grid

    Returns:
        ProbabilityDensity: ``f(x_i) / mass``

    Examples:
        >>> grid = build_grid(4.0, 400)
        >>> u = density_from_function(lambda x: np.exp(-x ** 2), grid)
    """
    sample = np.asarray(f(grid.centers), dtype=np.float64)

    if sample.shape != (grid.n_cells,):
        sample = np.broadcast_to(sample, (grid.n_cells,)).astype(np.float64)
    if not np.all(np.isfinite(sample)) or np.any(sample < 0.0):
        raise ValueError("param ``f`` must be finite and nonnegative on the grid.")

    mass = grid.integrate(sample)
    if mass <= 0.0:
        raise ValueError(
            "param ``f`` vanishes on every cell centre; there is no density to normalize."
        )

    values = sample / mass
    # renormalize once more so the rounding of the division does not accumulate
    return ProbabilityDensity(values / grid.integrate(values), grid)


def quantile_nodes(m: int) -> np.ndarray:
    """Mass levels ``s_j = (j - 1/2) / m``"""
    return (np.arange(m) + 0.5) / m


def quantile_of(
    u: ProbabilityDensity, m: Optional[int] = None, u_floor: float = U_FLOOR
) -> np.ndarray:
    """
    Quantile function of a grid density at the nodes ``s_j = (j - 1/2) / m``.

    The CDF is piecewise linear between cell edges, so inside an occupied cell the
    quantile is ``e_i + h (s - C_i) / (C_{i+1} - C_i)``. Empty cells are jumped over.

    Args:
        u (ProbabilityDensity): density
        m (int): number of nodes, default ``n_cells``
        u_floor (float): cells below this value count as empty

    Returns:
        np.ndarray: nondecreasing quantile positions ``X(s_j)``
    """
    grid = u.grid
    m = grid.n_cells if m is None else int(m)
    if m < 2:
        raise ValueError(f"param ``m`` must be >= 2. but yours is {m}.")

    cdf = u.cdf(u_floor)
    s = quantile_nodes(m)
    upper = np.clip(np.searchsorted(cdf, s, side="left"), 1, grid.n_cells)
    cell = upper - 1
    width = cdf[upper] - cdf[cell]
    return grid.edges[cell] + grid.h * (s - cdf[cell]) / width


def density_from_quantiles(X, grid: Grid1D) -> ProbabilityDensity:
    """
    Grid density whose CDF interpolates ``(X_j, s_j)`` linearly.

    The first and last half masses are spread over half a node spacing beyond the end
    nodes. Mass that would leave [-R, R] is kept in the boundary cells.

    Args:
        X (np.ndarray): strictly increasing quantile positions at ``s_j = (j - 1/2) / m``
        grid (Grid1D): target grid

    Returns:
        ProbabilityDensity: cell averages of the interpolated density
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 1 or X.size < 2:
        raise ValueError("param ``X`` must be a vector of at least two quantiles.")
    if np.any(np.diff(X) <= 0.0) or not np.all(np.isfinite(X)):
        raise ValueError("param ``X`` must be finite and strictly increasing.")

    m = X.size
    xs = np.concatenate(
        [[X[0] - 0.5 * (X[1] - X[0])], X, [X[-1] + 0.5 * (X[-1] - X[-2])]]
    )
    ss = np.concatenate([[0.0], quantile_nodes(m), [1.0]])

    cdf = np.interp(grid.edges, xs, ss)
    cdf[0], cdf[-1] = 0.0, 1.0
    values = np.maximum(np.diff(cdf), 0.0) / grid.h
    return ProbabilityDensity(values / grid.integrate(values), grid)
