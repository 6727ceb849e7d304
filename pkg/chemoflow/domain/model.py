# Copyright 2021 The Chemoflow Authors.

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, List, Optional

import numpy as np

from chemoflow.domain.fields import SystemState
from chemoflow.domain.grid import Grid1D

__all__ = [
    "RESPONSE_FAMILIES",
    "ResponseFunction",
    "Confinement",
    "ModelParams",
    "AssumptionCheck",
    "AssumptionReport",
    "FlatConvexity",
    "TruncationReport",
    "validate_params",
    "convexity_threshold",
    "recommended_half_width",
    "truncation_check",
]

logger = logging.getLogger(__name__)

RESPONSE_FAMILIES = ("linear", "log_saturation", "rational_saturation")
_ALIASES = {"log": "log_saturation", "rational": "rational_saturation"}


class ResponseFunction(object):
    """
    Signal response ``phi`` of the cells, convex and strictly decreasing on [0, inf).

    Args:
        family (str): one of 'linear', 'log_saturation' and 'rational_saturation'

    Notes:
        ============================  ===================  ==================  ===============
        family                        phi(w)               phi'(w)             phi'' bound
        ============================  ===================  ==================  ===============
        linear                        -w                   -1                  0
        log_saturation                -log(1 + w)          -1 / (1 + w)        1
        rational_saturation           1 / (1 + w)          -1 / (1 + w)^2      2
        ============================  ===================  ==================  ===============

        The evaluators are applied to concentration values, which can dip marginally below
        zero during a solve. The saturating families are evaluated at ``max(w, -1/2)`` there.

    Examples:
        >>> phi = ResponseFunction.from_name("rational")
        >>> phi.dphi0
        -1.0
    """

    def __init__(self, family: str):
        family = _ALIASES.get(family, family)
        if family not in RESPONSE_FAMILIES:
            raise ValueError(
                f"param ``family`` must be one of {RESPONSE_FAMILIES} "
                f"(or the aliases 'log' and 'rational'). but yours is {family!r}."
            )
        self.family = family

    @classmethod
    def from_name(cls, name: str) -> "ResponseFunction":
        return cls(name)

    def __repr__(self):
        return f"ResponseFunction({self.family!r})"

    def __eq__(self, other):
        return isinstance(other, ResponseFunction) and self.family == other.family

    def __hash__(self):
        return hash(self.family)

    @staticmethod
    def _shifted(w):
        return 1.0 + np.maximum(np.asarray(w, dtype=np.float64), -0.5)

    def phi(self, w):
        if self.family == "linear":
            return -np.asarray(w, dtype=np.float64)
        if self.family == "log_saturation":
            return -np.log(self._shifted(w))
        return 1.0 / self._shifted(w)

    def dphi(self, w):
        w = np.asarray(w, dtype=np.float64)
        if self.family == "linear":
            return -np.ones_like(w)
        if self.family == "log_saturation":
            return -1.0 / self._shifted(w)
        return -1.0 / self._shifted(w) ** 2

    def d2phi(self, w):
        w = np.asarray(w, dtype=np.float64)
        if self.family == "linear":
            return np.zeros_like(w)
        if self.family == "log_saturation":
            return 1.0 / self._shifted(w) ** 2
        return 2.0 / self._shifted(w) ** 3

    @property
    def dphi0(self) -> float:
        return float(self.dphi(0.0))

    @property
    def d2phi_bound(self) -> float:
        return {"linear": 0.0, "log_saturation": 1.0, "rational_saturation": 2.0}[
            self.family
        ]


def _quadratic_W(x, lambda0, center):
    return 0.5 * lambda0 * (np.asarray(x, dtype=np.float64) - center) ** 2


def _quadratic_dW(x, lambda0, center):
    return lambda0 * (np.asarray(x, dtype=np.float64) - center)


def _quadratic_d2W(x, lambda0, center):
    return np.full_like(np.asarray(x, dtype=np.float64), lambda0)


class Confinement(object):
    """
    External potential ``W >= 0`` with ``W'' >= lambda0 > 0``.

    Args:
        W (Callable): vectorized potential
        dW (Callable): its first derivative
        d2W (Callable): its second derivative
        lambda0 (float): claimed convexity modulus
        center (float): location of the minimum, used for the truncation radius
        name (str): label written into reports

    Notes:
        Use the module-level constructors :meth:`quadratic` and :meth:`custom`.
        Quadratic confinements pickle, so they can be shipped to sweep workers.
    """

    def __init__(
        self,
        W: Callable,
        dW: Callable,
        d2W: Callable,
        lambda0: float,
        center: float = 0.0,
        name: str = "custom",
    ):
        if not np.isfinite(lambda0) or lambda0 <= 0:
            raise ValueError(f"param ``lambda0`` must be positive. but yours is {lambda0}.")

        self.W = W
        self.dW = dW
        self.d2W = d2W
        self.lambda0 = float(lambda0)
        self.center = float(center)
        self.name = name

    def __repr__(self):
        return f"Confinement({self.name!r}, lambda0={self.lambda0!r}, center={self.center!r})"

    @classmethod
    def quadratic(cls, lambda0: float = 1.0, center: float = 0.0) -> "Confinement":
        """``W(x) = lambda0 / 2 * (x - center)^2``"""
        kwargs = dict(lambda0=float(lambda0), center=float(center))
        return cls(
            W=partial(_quadratic_W, **kwargs),
            dW=partial(_quadratic_dW, **kwargs),
            d2W=partial(_quadratic_d2W, **kwargs),
            lambda0=lambda0,
            center=center,
            name="quadratic",
        )

    @classmethod
    def custom(
        cls,
        W: Callable,
        dW: Callable,
        d2W: Callable,
        lambda0: float,
        center: float = 0.0,
    ) -> "Confinement":
        return cls(W, dW, d2W, lambda0=lambda0, center=center, name="custom")


class ModelParams(object):
    """
    Coefficients of the coupled system.

    Args:
        epsilon (float): coupling strength, >= 0
        kappa (float): decay rate of the chemical, > 0
        phi (ResponseFunction): response function
        potential (Confinement): confinement

    Examples:
        >>> p = ModelParams(0.05, 1.0, ResponseFunction("rational"), Confinement.quadratic(1.0))
    """

    def __init__(
        self,
        epsilon: float,
        kappa: float,
        phi: ResponseFunction,
        potential: Confinement,
    ):
        if not np.isfinite(epsilon) or epsilon < 0:
            raise ValueError(f"param ``epsilon`` must be >= 0. but yours is {epsilon}.")
        if not np.isfinite(kappa) or kappa <= 0:
            raise ValueError(f"param ``kappa`` must be > 0. but yours is {kappa}.")

        self.epsilon = float(epsilon)
        self.kappa = float(kappa)
        self.phi = phi
        self.potential = potential

    def __repr__(self):
        return (
            f"ModelParams(epsilon={self.epsilon!r}, kappa={self.kappa!r}, "
            f"phi={self.phi!r}, potential={self.potential!r})"
        )

    @property
    def lambda0(self) -> float:
        return self.potential.lambda0

    def with_epsilon(self, epsilon: float) -> "ModelParams":
        return ModelParams(epsilon, self.kappa, self.phi, self.potential)

    def potential_on(self, grid: Grid1D) -> np.ndarray:
        return np.asarray(self.potential.W(grid.centers), dtype=np.float64)

    def effective_potential(self, v_values: np.ndarray, grid: Grid1D) -> np.ndarray:
        """``W + epsilon * phi(v)`` at the cell centres"""
        return self.potential_on(grid) + self.epsilon * self.phi.phi(v_values)


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    witness: Optional[float] = None
    detail: str = ""
    required: bool = True


@dataclass
class AssumptionReport:
    checks: List[AssumptionCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    @property
    def convexity_unverified(self) -> bool:
        return not all(c.passed for c in self.checks if c.name == "flat_convexity")

    def __getitem__(self, name: str) -> AssumptionCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "convexity_unverified": self.convexity_unverified,
            "checks": {
                c.name: {"passed": c.passed, "witness": c.witness, "detail": c.detail}
                for c in self.checks
            },
        }


@dataclass
class FlatConvexity:
    satisfied: bool
    modulus: float


@dataclass
class TruncationReport:
    half_width: float
    u_boundary: float
    v_boundary: float
    tol: float
    policy: str = "grid.R as configured; recommended: stationary support plus four decay lengths"

    @property
    def passed(self) -> bool:
        return self.u_boundary <= self.tol and self.v_boundary <= self.tol


def _first_violation(mask: np.ndarray, where: np.ndarray) -> Optional[float]:
    bad = np.flatnonzero(~mask)
    return None if bad.size == 0 else float(where[bad[0]])


def validate_params(
    p: ModelParams, grid: Grid1D, w_max: float = 100.0, n_lattice: int = 1000
) -> AssumptionReport:
    """
    Sample the standing assumptions on ``phi`` and ``W``.

    Args:
        p (ModelParams): parameters to check
        grid (Grid1D): grid on which ``W`` is sampled
        w_max (float): upper end of the concentration lattice for ``phi``
        n_lattice (int): number of lattice points in [0, w_max]

    Returns:
        AssumptionReport: one entry per assumption, with the first violating point as witness
    """
    report = AssumptionReport()
    w = np.linspace(0.0, w_max, n_lattice)
    phi = p.phi
    dphi0 = phi.dphi0

    d1 = phi.dphi(w)
    ok = (d1 < 0.0) & (-d1 <= -dphi0 + 1e-15)
    report.checks.append(
        AssumptionCheck(
            "phi_decreasing",
            bool(ok.all()),
            _first_violation(ok, w),
            f"0 < -phi'(w) <= -phi'(0) = {-dphi0:g} on [0, {w_max:g}]",
        )
    )

    d2 = phi.d2phi(w)
    ok = (d2 >= 0.0) & (d2 <= phi.d2phi_bound + 1e-15)
    report.checks.append(
        AssumptionCheck(
            "phi_convex_bounded",
            bool(ok.all()),
            _first_violation(ok, w),
            f"0 <= phi''(w) <= {phi.d2phi_bound:g}",
        )
    )

    x = grid.centers
    W = np.asarray(p.potential.W(x), dtype=np.float64)
    ok = W >= 0.0
    report.checks.append(
        AssumptionCheck("W_nonnegative", bool(ok.all()), _first_violation(ok, x), "W(x) >= 0")
    )

    d2W = np.asarray(p.potential.d2W(x), dtype=np.float64)
    ok = d2W >= p.lambda0 * (1.0 - 1e-12)
    witness = None if ok.all() else float(x[np.argmin(d2W)])
    report.checks.append(
        AssumptionCheck(
            "W_uniformly_convex",
            bool(ok.all()),
            witness,
            f"W''(x) >= lambda0 = {p.lambda0:g}; min W'' on grid = {d2W.min():.6g}",
        )
    )

    flat = convexity_threshold(p)
    report.checks.append(
        AssumptionCheck(
            "flat_convexity",
            flat.satisfied,
            None,
            f"epsilon^2 phi'(0)^2 < kappa; modulus {flat.modulus:.6g}",
            required=False,
        )
    )

    for check in report.checks:
        if not check.passed:
            logger.warning(f"assumption {check.name} violated ({check.detail}), witness {check.witness}")

    return report


def convexity_threshold(p: ModelParams) -> FlatConvexity:
    """
    Smallest eigenvalue of the worst-case coupling matrix ``[[1, e phi'], [e phi', kappa]]``.

    Returns:
        FlatConvexity: whether ``epsilon^2 phi'(0)^2 < kappa`` and the modulus
        ``((1 + kappa) - sqrt((1 - kappa)^2 + 4 epsilon^2 phi'(0)^2)) / 2``
    """
    coupling = (p.epsilon * p.phi.dphi0) ** 2
    kappa = p.kappa
    modulus = 0.5 * ((1.0 + kappa) - np.sqrt((1.0 - kappa) ** 2 + 4.0 * coupling))
    return FlatConvexity(bool(coupling < kappa), float(modulus))


def recommended_half_width(p: ModelParams) -> float:
    """Support radius of the uncoupled stationary profile plus four decay lengths of ``v``"""
    support = (1.5 / p.lambda0) ** (1.0 / 3.0)
    return float(support + 4.0 / np.sqrt(p.kappa) + abs(p.potential.center))


def truncation_check(state: SystemState, tol: float = 1e-8) -> TruncationReport:
    u = state.u.values
    v = state.v.values
    report = TruncationReport(
        half_width=state.grid.half_width,
        u_boundary=float(max(u[0], u[-1])),
        v_boundary=float(max(abs(v[0]), abs(v[-1]))),
        tol=tol,
    )
    if not report.passed:
        logger.warning(
            f"boundary values exceed {tol:.0e} on [-{report.half_width:g}, {report.half_width:g}]: "
            f"u = {report.u_boundary:.3e}, |v| = {report.v_boundary:.3e}. consider a larger grid.R."
        )
    return report
