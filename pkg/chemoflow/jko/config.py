# Copyright 2021 The Chemoflow Authors.

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

__all__ = ["JkoConfig"]


@dataclass(frozen=True)
class JkoConfig:
    """
    Parameters of the minimizing-movement stepper.

    Args:
        tau (float): time step
        inner_tol (float): relative compound-distance change that ends the alternating sweeps
        max_sweeps (int): sweep cap per step
        quantile_m (int): number of quantile nodes of the Lagrangian u-proposal, default n_cells
        u_floor (float): density below which a cell counts as empty
        tol_neg (float): tolerated negative overshoot of v before a warning is logged
    """

    tau: float
    inner_tol: float = 1e-9
    max_sweeps: int = 200
    quantile_m: Optional[int] = None
    u_floor: float = 1e-12
    tol_neg: float = 1e-10

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise ValueError(f"param ``tau`` must be > 0. but yours is {self.tau}.")
        if not self.inner_tol > 0:
            raise ValueError(f"param ``inner_tol`` must be > 0. but yours is {self.inner_tol}.")
        if int(self.max_sweeps) != self.max_sweeps or self.max_sweeps < 1:
            raise ValueError(f"param ``max_sweeps`` must be >= 1. but yours is {self.max_sweeps}.")
        if self.quantile_m is not None and self.quantile_m < 2:
            raise ValueError(f"param ``quantile_m`` must be >= 2. but yours is {self.quantile_m}.")
        if not self.u_floor > 0 or not self.tol_neg >= 0:
            raise ValueError("params ``u_floor`` and ``tol_neg`` must be positive.")

    def to_dict(self) -> dict:
        return asdict(self)
