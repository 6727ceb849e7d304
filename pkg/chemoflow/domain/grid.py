# Copyright 2021 The Chemoflow Authors.

from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MIN_CELLS",
    "Grid1D",
    "build_grid",
    "face_gradient",
    "neumann_laplacian",
    "neumann_laplacian_matrix",
]

MIN_CELLS = 16


class Grid1D(object):
    """
    Uniform cell-centred grid on the interval [-R, R].

    Args:
        half_width (float): half width R of the truncated domain
        n_cells (int): number of cells, at least 16

    Notes:
        Every integral in chemoflow is a midpoint sum ``h * sum(f(x_i))`` over the
        cell centres. Gradients live on the n - 1 interior faces, second differences
        on the cells with a homogeneous Neumann closure.

        ::

            edge  e_0      e_1      e_2            e_n
                   |   x_1  |   x_2  |  ...  |  x_n  |
                  -R                                  R
    """

    def __init__(self, half_width: float, n_cells: int):
        if not np.isfinite(half_width) or half_width <= 0:
            raise ValueError(
                f"param ``R`` must be a positive finite length. but yours is {half_width}."
            )
        if int(n_cells) != n_cells or n_cells < MIN_CELLS:
            raise ValueError(
                f"param ``n`` must be an integer >= {MIN_CELLS}. but yours is {n_cells}."
            )

        self.half_width = float(half_width)
        self.n_cells = int(n_cells)

    def __repr__(self):
        return f"Grid1D(R={self.half_width!r}, n={self.n_cells})"

    def __eq__(self, other):
        return (
            isinstance(other, Grid1D)
            and self.half_width == other.half_width
            and self.n_cells == other.n_cells
        )

    def __hash__(self):
        return hash((self.half_width, self.n_cells))

    def __getstate__(self):
        return {"half_width": self.half_width, "n_cells": self.n_cells}

    def __setstate__(self, state):
        self.__init__(state["half_width"], state["n_cells"])

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    @cached_property
    def edges(self) -> np.ndarray:
        edges = -self.half_width + self.h * np.arange(self.n_cells + 1)
        edges[-1] = self.half_width
        edges.flags.writeable = False
        return edges

    @cached_property
    def centers(self) -> np.ndarray:
        centers = -self.half_width + self.h * (np.arange(self.n_cells) + 0.5)
        centers.flags.writeable = False
        return centers

    @property
    def faces(self) -> np.ndarray:
        """Interior cell faces, where discrete gradients live"""
        return self.edges[1:-1]

    @property
    def length(self) -> float:
        return 2.0 * self.half_width

    def integrate(self, values) -> float:
        """Midpoint quadrature of cell values"""
        return float(self.h * np.sum(values))

    def check_same(self, other: "Grid1D", what: str = "inputs") -> None:
        if self != other:
            raise ValueError(
                f"{what} live on different grids: {self!r} and {other!r}. "
                f"resample one of them first."
            )


def build_grid(R: float, n: int) -> Grid1D:
    """
    Build the uniform grid covering [-R, R].

    Args:
        R (float): half width
        n (int): number of cells

    Returns:
        Grid1D: the grid

    Examples:
        >>> build_grid(1.0, 100).h
        0.02
    """
    return Grid1D(R, n)


def face_gradient(values: np.ndarray, h: float) -> np.ndarray:
    """Differences across the interior faces, ``(v_{i+1} - v_i) / h``"""
    return np.diff(values) / h


def neumann_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """3-point Laplacian with ghost cells mirroring the boundary cells"""
    padded = np.concatenate([values[:1], values, values[-1:]])
    return (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / (h * h)


def neumann_laplacian_matrix(n: int, h: float) -> sp.csc_matrix:
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csc") / (h * h)
