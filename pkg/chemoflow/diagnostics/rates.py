# Copyright 2021 The Chemoflow Authors.

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import gamma

from chemoflow.domain import ModelParams
from chemoflow.kernels import yukawa_constant

__all__ = [
    "MIN_FIT_POINTS",
    "GRADIENT_CONTROL_CAVEAT",
    "DecayFit",
    "ExplicitConstants",
    "GradientControlReport",
    "fit_exponential",
    "fit_decay_rate",
    "reference_rate",
    "explicit_constants",
    "discrete_rate",
    "gradient_control_check",
]

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 10
GRADIENT_CONTROL_CAVEAT = "3-D-constant heuristic applied to 1-D run"


@dataclass
class DecayFit:
    """
    Log-linear least-squares fit of a decaying series.

    ``rate`` is the functional rate; distances decay at half of it.
    """

    quantity: str
    t1: float
    t2: float
    rate: float
    r_squared: float
    n_points: int
    reference_rate: Optional[float] = None

    @property
    def distance_rate(self) -> float:
        return 0.5 * self.rate

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "window": [self.t1, self.t2],
            "rate": self.rate,
            "distance_rate": self.distance_rate,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "reference_rate": self.reference_rate,
        }


def fit_exponential(
    t, values, window: Optional[Tuple[float, float]] = None, quantity: str = "series"
) -> DecayFit:
    """
    Fit ``values ~ C exp(-rate t)`` on ``window``.

    The window is cut at the first nonpositive value. At least ``MIN_FIT_POINTS`` points
    must remain.

    Examples:
        >>> t = np.linspace(0.0, 1.0, 50)
        >>> fit_exponential(t, 5.0 * np.exp(-3.0 * t)).rate  # 3.0
    """
    t = np.asarray(t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if t.shape != values.shape:
        raise ValueError(
            f"params ``t`` and ``values`` must have the same shape. "
            f"but yours are {t.shape}, {values.shape}."
        )

    t1, t2 = (t[0], t[-1]) if window is None else window
    inside = (t >= t1 - 1e-12) & (t <= t2 + 1e-12)
    t, values = t[inside], values[inside]

    nonpositive = np.flatnonzero(~(values > 0.0))
    if nonpositive.size:
        t, values = t[: nonpositive[0]], values[: nonpositive[0]]

    if t.size < MIN_FIT_POINTS:
        raise ValueError(
            f"{quantity} has only {t.size} positive points in [{t1:g}, {t2:g}]; "
            f"at least {MIN_FIT_POINTS} are needed for a rate."
        )

    logs = np.log(values)
    slope, intercept = np.polyfit(t, logs, 1)
    residual = logs - (slope * t + intercept)
    spread = float(np.sum((logs - logs.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual * residual)) / spread if spread > 0 else 1.0

    return DecayFit(
        quantity=quantity,
        t1=float(t[0]),
        t2=float(t[-1]),
        rate=float(-slope),
        r_squared=r_squared,
        n_points=int(t.size),
    )


def fit_decay_rate(
    traj,
    quantity: str = "L",
    window: Optional[Tuple[float, float]] = None,
    p: Optional[ModelParams] = None,
) -> DecayFit:
    """
    Decay rate of a trajectory series.

    Args:
        traj (TrajectoryRecord): trajectory
        quantity (str): 'L', 'L_u', 'L_v' or 'H-Hinf'
        window (Tuple[float, float]): time window, the whole trajectory when omitted
        p (ModelParams): attaches :func:`reference_rate` to the result when given

    Returns:
        DecayFit: the fitted rate
    """
    if quantity not in ("L", "L_u", "L_v", "H-Hinf"):
        raise ValueError(f"param ``quantity`` must be one of L, L_u, L_v, H-Hinf. but yours is {quantity}.")

    fit = fit_exponential(traj.t, traj.series(quantity), window, quantity)
    if p is not None:
        fit.reference_rate = reference_rate(p)
    return fit


def reference_rate(p: ModelParams) -> float:
    """``min(kappa, lambda0)``, the rate the coupled system approaches as epsilon -> 0"""
    return float(min(p.kappa, p.lambda0))


def discrete_rate(a: float, tau: float) -> float:
    """
    ``log(1 + a tau) / tau``; below ``a`` and increasing to it as tau -> 0.

    Examples:
        >>> round(discrete_rate(1.0, 0.1), 5)
        0.9531
    """
    if not a > 0 or not tau > 0:
        raise ValueError(f"params ``a`` and ``tau`` must be > 0. but yours are {a}, {tau}.")
    return math.log1p(a * tau) / tau


@dataclass
class ExplicitConstants:
    """
    Explicit constants of the gradient control of ``v``.

    Args:
        a (float): ``(1 + kappa) Y_1``
        M1 (float): ``|phi'(0)| Y_{6/5} (1 + kappa)^(3/4) Gamma(1/4) / log(1 + kappa)^(1/4)``
        T1 (float): ``max(0, log(a ||v0||_{6/5} / M1) / kappa)``
        Y1 (float): the constant ``Y_1 = 2``
        Y65 (float): the constant ``Y_{6/5}``
        Q65 (float): the exponent ``Q(6/5) = 3/4``
        kappa (float): decay rate they were computed for
        v0_norm (float): ``||v0||_{L^{6/5}}``
    """

    a: float
    M1: float
    T1: float
    Y1: float
    Y65: float
    Q65: float
    kappa: float
    v0_norm: float

    def bracket(self, rate: float, tau: float) -> float:
        return discrete_rate(rate, tau)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "M1": self.M1,
            "T1": self.T1,
            "Y1": self.Y1,
            "Y65": self.Y65,
            "Q65": self.Q65,
            "v0_norm_L65": self.v0_norm,
        }


def explicit_constants(p: ModelParams, v0_norm: float) -> ExplicitConstants:
    """
    Evaluate ``a``, ``M_1`` and ``T_1`` from their closed forms.

    ``int_0^inf (1 + kappa)^(-s) s^(-3/4) ds = Gamma(1/4) / log(1 + kappa)^(1/4)``, and
    ``Y_{6/5} = Gamma(1/4) ||D H_1||_{L^{6/5}}`` comes from radial quadrature.
    """
    if v0_norm < 0:
        raise ValueError(f"param ``v0_norm`` must be >= 0. but yours is {v0_norm}.")
    kappa = p.kappa
    Y1 = yukawa_constant(1.0)
    Y65 = yukawa_constant(1.2)
    a = (1.0 + kappa) * Y1
    integral = gamma(0.25) / math.log1p(kappa) ** 0.25
    M1 = abs(p.phi.dphi0) * Y65 * (1.0 + kappa) ** 0.75 * integral
    T1 = max(0.0, math.log(a * v0_norm / M1) / kappa) if v0_norm > 0 else 0.0
    return ExplicitConstants(
        a=float(a),
        M1=float(M1),
        T1=float(T1),
        Y1=float(Y1),
        Y65=float(Y65),
        Q65=0.75,
        kappa=float(kappa),
        v0_norm=float(v0_norm),
    )


@dataclass
class GradientControlReport:
    times: List[float] = field(default_factory=list)
    lhs: List[float] = field(default_factory=list)
    decay_bound: List[float] = field(default_factory=list)
    decay_holds: List[bool] = field(default_factory=list)
    control_holds: List[Optional[bool]] = field(default_factory=list)
    control_bound: float = 0.0
    T1: float = 0.0
    caveat: str = GRADIENT_CONTROL_CAVEAT

    @property
    def decay_passed(self) -> bool:
        return all(self.decay_holds)

    @property
    def control_passed(self) -> bool:
        return all(flag for flag in self.control_holds if flag is not None)

    @property
    def passed(self) -> bool:
        return self.decay_passed and self.control_passed

    def to_dict(self) -> dict:
        checked = [flag for flag in self.control_holds if flag is not None]
        return {
            "caveat": self.caveat,
            "T1": self.T1,
            "control_bound": self.control_bound,
            "decay_passed": self.decay_passed,
            "control_passed": self.control_passed,
            "steps_checked": len(self.times),
            "steps_past_T1": len(checked),
            "max_lhs": max(self.lhs) if self.lhs else 0.0,
        }


def gradient_control_check(traj, constants: ExplicitConstants, epsilon: float) -> GradientControlReport:
    """
    Compare ``||Dv^n||_{L^{6/5}}`` with its explicit decay and control bounds.

    For every step ``n >= 1`` at ``t = n tau``::

        ||Dv^n|| <= a ||v0|| exp(-[kappa]_tau t) t^(-1/2) + epsilon M1
        ||Dv^n|| <= 2 M1                                    when t >= T1

    with ``[kappa]_tau = log(1 + kappa tau) / tau``. The constants are those of the 3-D heat
    kernel; the report carries a caveat saying so.

    Args:
        traj (TrajectoryRecord): trajectory with the ``grad_v_L65`` series
        constants (ExplicitConstants): from :func:`explicit_constants`
        epsilon (float): coupling strength of the run

    Returns:
        GradientControlReport: per-step flags; failures are logged, never raised
    """
    tau = traj.tau
    rate = discrete_rate(constants.kappa, tau)
    report = GradientControlReport(control_bound=2.0 * constants.M1, T1=constants.T1)

    for t, lhs in zip(traj.t[1:], traj.grad_v_L65[1:]):
        bound = constants.a * constants.v0_norm * math.exp(-rate * t) / math.sqrt(t) + epsilon * constants.M1
        report.times.append(float(t))
        report.lhs.append(float(lhs))
        report.decay_bound.append(float(bound))
        report.decay_holds.append(bool(lhs <= bound * (1.0 + 1e-12)))
        report.control_holds.append(bool(lhs <= report.control_bound) if t >= constants.T1 else None)

    if not report.passed:
        logger.warning(f"gradient control of v failed ({GRADIENT_CONTROL_CAVEAT}): {report.to_dict()}")
    return report
