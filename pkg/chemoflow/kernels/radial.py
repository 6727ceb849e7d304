# Copyright 2021 The Chemoflow Authors.

import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np
import torch
from scipy.integrate import quad, trapezoid
from scipy.special import gamma, gammaln, kve, roots_genlaguerre

__all__ = [
    "MIXTURE_STEP",
    "LAGUERRE_NODES",
    "RadialKernel",
    "GradientBound",
    "yukawa_G",
    "yukawa_derivatives",
    "yukawa_derivatives_autograd",
    "heat_kernel3d",
    "yukawa_iterate",
    "yukawa_iterate_closed",
    "radial_convolve",
    "radial_mass",
    "heat_gradient_norm",
    "yukawa_constant",
    "iterate_decay_factor",
    "grad_iterate_Lq",
]

logger = logging.getLogger(__name__)

MIXTURE_STEP = 0.125
LAGUERRE_NODES = 64

_QUAD = dict(epsabs=1e-14, epsrel=1e-12, limit=400)


def _positive_radius(r, name: str = "r") -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if np.any(~np.isfinite(r)) or np.any(r <= 0.0):
        raise ValueError(f"param ``{name}`` must be a positive finite radius. but yours is {r}.")
    return r


def _positive(value: float, name: str) -> float:
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"param ``{name}`` must be > 0. but yours is {value}.")
    return float(value)


def _scalar_or_array(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def yukawa_G(kappa: float, r) -> Union[float, np.ndarray]:
    """
    Screened Coulomb potential ``exp(-sqrt(kappa) r) / (4 pi r)``, the fundamental solution
    of ``-Delta + kappa`` in three dimensions.

    Examples:
        >>> round(yukawa_G(1.0, 1.0), 7)
        0.0292714
    """
    a = math.sqrt(_positive(kappa, "kappa"))
    r = _positive_radius(r)
    return _scalar_or_array(np.exp(-a * r) / (4.0 * math.pi * r))


def _yukawa_derivative(a: float, r: np.ndarray) -> np.ndarray:
    return -np.exp(-a * r) * (a * r + 1.0) / (4.0 * math.pi * r * r)


def _yukawa_primitive(a: float, rho: np.ndarray) -> np.ndarray:
    return -np.expm1(-a * rho) / (4.0 * math.pi * a)


def yukawa_derivatives(kappa: float, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    First, second and third derivatives of the 3-D Yukawa potential at ``x != 0``.

    Args:
        kappa (float): screening rate
        x (np.ndarray): point in R^3

    Returns:
        tuple: gradient ``(3,)``, Hessian ``(3, 3)`` and third-order tensor ``(3, 3, 3)``

    Notes:
        With ``a = sqrt(kappa)``, ``r = |x|`` and ``E = exp(-a r) / (4 pi)``::

            d_i G      = -E (a r + 1) / r^3 * x_i
            d_ij G     = chi x_i x_j + psi delta_ij
            d_ijk G    = chi' / r x_i x_j x_k + chi (delta_ij x_k + delta_ik x_j + delta_jk x_i)

            psi        = -E (a r + 1) / r^3
            chi        =  E (a^2 r^2 + 3 a r + 3) / r^5
            chi' / r   = -E (a^3 r^3 + 6 a^2 r^2 + 15 a r + 15) / r^7
    """
    a = math.sqrt(_positive(kappa, "kappa"))
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (3,):
        raise ValueError(f"param ``x`` must be a 3-vector. but its shape is {x.shape}.")
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("param ``x`` must be nonzero; the potential is singular at the origin.")

    E = math.exp(-a * r) / (4.0 * math.pi)
    ar = a * r
    psi = -E * (ar + 1.0) / r ** 3
    chi = E * (ar * ar + 3.0 * ar + 3.0) / r ** 5
    dchi = -E * (ar ** 3 + 6.0 * ar * ar + 15.0 * ar + 15.0) / r ** 7

    eye = np.eye(3)
    grad = psi * x
    hess = chi * np.outer(x, x) + psi * eye
    third = (
        dchi * np.einsum("i,j,k->ijk", x, x, x)
        + chi
        * (
            np.einsum("ij,k->ijk", eye, x)
            + np.einsum("ik,j->ijk", eye, x)
            + np.einsum("jk,i->ijk", eye, x)
        )
    )
    return grad, hess, third


def yukawa_derivatives_autograd(kappa: float, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Same as :func:`yukawa_derivatives`, differentiated by torch in float64"""
    a = math.sqrt(_positive(kappa, "kappa"))
    point = torch.tensor(np.asarray(x, dtype=np.float64), dtype=torch.float64)
    if float(torch.linalg.norm(point)) == 0.0:
        raise ValueError("param ``x`` must be nonzero; the potential is singular at the origin.")

    def potential(y):
        r = torch.linalg.norm(y)
        return torch.exp(-a * r) / (4.0 * math.pi * r)

    def hessian(y):
        return torch.autograd.functional.hessian(potential, y, create_graph=True)

    grad = torch.autograd.functional.jacobian(potential, point)
    hess = torch.autograd.functional.hessian(potential, point)
    third = torch.autograd.functional.jacobian(hessian, point)
    return grad.numpy(), hess.numpy(), third.detach().numpy()


def heat_kernel3d(t: float, r) -> Union[float, np.ndarray]:
    """``(4 pi t)^(-3/2) exp(-r^2 / (4 t))``"""
    t = _positive(t, "t")
    r = np.asarray(r, dtype=np.float64)
    return _scalar_or_array((4.0 * math.pi * t) ** -1.5 * np.exp(-r * r / (4.0 * t)))


def _iterate_scale(sigma: float, k: int) -> float:
    return (2.0 * math.pi) ** 1.5 * 2.0 ** (k - 1) * gamma(k) * sigma ** 1.5


def _zK(nu: float, z: np.ndarray) -> np.ndarray:
    """``z^nu K_nu(z)`` for ``z > 0``"""
    return np.exp(nu * np.log(z) - z) * kve(nu, z)


def yukawa_iterate_closed(sigma: float, k: int, r) -> Union[float, np.ndarray]:
    """
    Closed form of the ``k``-fold self-convolution of ``Y_sigma = G_{1/sigma} / sigma``.

    ``z^nu K_nu(z) / ((2 pi)^(3/2) 2^(k-1) Gamma(k) sigma^(3/2))`` with ``z = r / sqrt(sigma)``
    and ``nu = k - 3/2``.
    """
    sigma = _positive(sigma, "sigma")
    z = _positive_radius(r) / math.sqrt(sigma)
    return _scalar_or_array(_zK(k - 1.5, z) / _iterate_scale(sigma, k))


def _mixture_grid(k: float, c: np.ndarray) -> np.ndarray:
    positive = c[c > 0.0]
    t_lo = -74.0 if positive.size == 0 else min(-74.0, math.log(positive.min()) - 5.0)
    t_hi = math.log(k + 50.0 + 10.0 * math.sqrt(k))
    if positive.size:
        t_hi = max(t_hi, 0.5 * math.log(positive.max()) + 3.0)
    return np.arange(t_lo, t_hi + MIXTURE_STEP, MIXTURE_STEP)


def _gamma_average(k: float, c: np.ndarray, log_term: Callable) -> np.ndarray:
    """
    ``int_0^inf g(x) x^(k-1) e^(-x) / Gamma(k) dx`` after the substitution ``x = e^t``.

    ``log_term(t, x)`` returns ``log g`` on the ``(nodes, points)`` mesh.
    """
    t = _mixture_grid(k, c)[:, None]
    x = np.exp(t)
    with np.errstate(divide="ignore", under="ignore"):
        integrand = np.exp(log_term(t, x) + k * t - x - gammaln(k))
    return trapezoid(integrand, dx=MIXTURE_STEP, axis=0)


def yukawa_iterate(
    sigma: float, k: int, r, quadrature: str = "trapezoid"
) -> Union[float, np.ndarray]:
    """
    Iterated resolvent kernel as a gamma mixture of heat kernels.

    ``Y_sigma^k(r) = int_0^inf H_{sigma x}(r) x^(k-1) e^(-x) / Gamma(k) dx``

    Args:
        sigma (float): rescaled time step
        k (int): number of resolvent steps, >= 1
        r: radius or radii, > 0
        quadrature (str): 'trapezoid' (exponential substitution, default) or 'laguerre'
            (generalized Gauss-Laguerre with 64 nodes)

    Returns:
        value(s) of the mixture

    Notes:
        The mixture variable has an essential singularity ``exp(-r^2 / (4 sigma x))`` at
        ``x = 0`` that a Laguerre rule cannot resolve for small ``r``. After ``x = e^t`` the
        integrand decays doubly exponentially at both ends and the trapezoidal rule with step
        1/8 converges to machine precision.
    """
    sigma = _positive(sigma, "sigma")
    if int(k) != k or k < 1:
        raise ValueError(f"param ``k`` must be an integer >= 1. but yours is {k}.")
    r = _positive_radius(r)
    c = np.atleast_1d(r * r / (4.0 * sigma))

    if quadrature == "laguerre":
        nodes, weights = roots_genlaguerre(LAGUERRE_NODES, k - 1)
        heat = (4.0 * math.pi * sigma * nodes[:, None]) ** -1.5 * np.exp(-c / nodes[:, None])
        value = np.sum(weights[:, None] * heat, axis=0) / gamma(k)
    elif quadrature == "trapezoid":
        log_norm = -1.5 * math.log(4.0 * math.pi * sigma)
        value = _gamma_average(k, c, lambda t, x: log_norm - 1.5 * t - c / x)
    else:
        raise ValueError(
            f"param ``quadrature`` must be one of 'trapezoid' and 'laguerre'. "
            f"but yours is {quadrature!r}."
        )

    return _scalar_or_array(value.reshape(np.shape(r)))


class RadialKernel(object):
    """
    Radial kernel in three dimensions with its derivative and primitive.

    Args:
        kind (str): one of 'yukawa3d', 'heat3d' and 'iterate'
        **params: ``kappa`` for 'yukawa3d', ``t`` for 'heat3d', ``sigma`` and ``k`` for 'iterate'

    Notes:
        ``primitive(rho) = int_0^rho s g(s) ds`` is what the radial convolution formula
        consumes. Iterates use the Bessel closed forms, for which
        ``d/dz (z^mu K_mu) = -z^mu K_(mu-1)``.
    """

    def __init__(self, kind: str, **params):
        if kind == "yukawa3d":
            self.a = math.sqrt(_positive(params["kappa"], "kappa"))
        elif kind == "heat3d":
            _positive(params["t"], "t")
        elif kind == "iterate":
            _positive(params["sigma"], "sigma")
            if int(params["k"]) != params["k"] or params["k"] < 1:
                raise ValueError(f"param ``k`` must be an integer >= 1. but yours is {params['k']}.")
        else:
            raise ValueError(
                f"param ``kind`` must be one of 'yukawa3d', 'heat3d' and 'iterate'. "
                f"but yours is {kind!r}."
            )
        self.kind = kind
        self.params = params

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"RadialKernel({self.kind!r}, {args})"

    @classmethod
    def yukawa3d(cls, kappa: float) -> "RadialKernel":
        return cls("yukawa3d", kappa=kappa)

    @classmethod
    def heat3d(cls, t: float) -> "RadialKernel":
        return cls("heat3d", t=t)

    @classmethod
    def iterate(cls, sigma: float, k: int) -> "RadialKernel":
        return cls("iterate", sigma=sigma, k=int(k))

    def __call__(self, r):
        return self.value(r)

    def value(self, r):
        r = np.asarray(r, dtype=np.float64)
        if self.kind == "yukawa3d":
            return np.exp(-self.a * r) / (4.0 * math.pi * r)
        if self.kind == "heat3d":
            return heat_kernel3d(self.params["t"], r)
        sigma, k = self.params["sigma"], self.params["k"]
        return _zK(k - 1.5, r / math.sqrt(sigma)) / _iterate_scale(sigma, k)

    def derivative(self, r):
        r = np.asarray(r, dtype=np.float64)
        if self.kind == "yukawa3d":
            return _yukawa_derivative(self.a, r)
        if self.kind == "heat3d":
            t = self.params["t"]
            return -(r / (2.0 * t)) * heat_kernel3d(t, r)
        sigma, k = self.params["sigma"], self.params["k"]
        s = math.sqrt(sigma)
        z = r / s
        # d/dz (z^nu K_nu) = -z^nu K_(nu-1)
        nu = k - 1.5
        return -np.exp(nu * np.log(z) - z) * kve(nu - 1.0, z) / (s * _iterate_scale(sigma, k))

    def primitive(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        if self.kind == "yukawa3d":
            return _yukawa_primitive(self.a, rho)
        if self.kind == "heat3d":
            t = self.params["t"]
            return 2.0 * t * (4.0 * math.pi * t) ** -1.5 * -np.expm1(-rho * rho / (4.0 * t))
        sigma, k = self.params["sigma"], self.params["k"]
        mu = k - 0.5
        zeta = rho / math.sqrt(sigma)
        at_zero = 2.0 ** (mu - 1.0) * gamma(mu)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(zeta > 0.0, _zK(mu, np.maximum(zeta, 1e-300)), at_zero)
        return sigma * (at_zero - tail) / _iterate_scale(sigma, k)


def radial_convolve(f: Union[RadialKernel, Callable], g: RadialKernel, r: float) -> float:
    """
    Convolution of two radial functions in three dimensions, evaluated at radius ``r``.

    ``(g * f)(r) = (2 pi / r) int_0^inf s f(s) [P_g(r + s) - P_g(|r - s|)] ds`` with the
    primitive ``P_g(rho) = int_0^rho t g(t) dt``.

    Args:
        f (RadialKernel or Callable): radial profile ``s -> f(s)``
        g (RadialKernel): kernel with a primitive
        r (float): radius, > 0

    Returns:
        float: the convolution at ``r``
    """
    r = float(_positive_radius(r))

    def integrand(s):
        return s * float(f(s)) * float(g.primitive(r + s) - g.primitive(abs(r - s)))

    inner = quad(integrand, 0.0, r, **_QUAD)[0]
    outer = quad(integrand, r, np.inf, **_QUAD)[0]
    return 2.0 * math.pi * (inner + outer) / r


def radial_mass(f: Union[RadialKernel, Callable]) -> float:
    """``4 pi int_0^inf r^2 f(r) dr``"""
    head = quad(lambda r: r * r * float(f(r)), 0.0, 1.0, **_QUAD)[0]
    tail = quad(lambda r: r * r * float(f(r)), 1.0, np.inf, **_QUAD)[0]
    return 4.0 * math.pi * (head + tail)


def _check_q(q: float) -> float:
    if not 1.0 <= q < 1.5:
        raise ValueError(f"param ``q`` must lie in [1, 3/2). but yours is {q}.")
    return float(q)


def heat_gradient_norm(q: float) -> float:
    """
    ``||D H_1||_{L^q}`` in three dimensions, by radial quadrature.

    Examples:
        >>> round(heat_gradient_norm(1.0), 12) == round(2 / math.sqrt(math.pi), 12)
        True
    """
    q = _check_q(q)
    norm_q = quad(
        lambda r: r * r * (0.5 * r * heat_kernel3d(1.0, r)) ** q, 0.0, np.inf, **_QUAD
    )[0]
    return float((4.0 * math.pi * norm_q) ** (1.0 / q))


def _exponent(q: float) -> float:
    return 2.0 - 1.5 / q


def yukawa_constant(q: float) -> float:
    """``Y_q = Gamma(1 - Q) ||D H_1||_{L^q}`` with ``Q = 2 - 3/(2q)``; ``Y_1 = 2``"""
    return float(gamma(1.0 - _exponent(_check_q(q))) * heat_gradient_norm(q))


def iterate_decay_factor(k, Q: float):
    """``a_k = k^Q Gamma(k - Q) / Gamma(k)``, decreasing in ``k``"""
    k = np.asarray(k, dtype=np.float64)
    return _scalar_or_array(np.exp(Q * np.log(k) + gammaln(k - Q) - gammaln(k)))


@dataclass(frozen=True)
class GradientBound:
    q: float
    Q: float
    norm: float
    bound: float
    sharp_bound: float

    @property
    def holds(self) -> bool:
        return self.norm <= self.bound * (1.0 + 1e-10)


def grad_iterate_Lq(sigma: float, k: int, q: float) -> GradientBound:
    """
    ``||D Y_sigma^k||_{L^q}`` and its explicit bound ``Y_q (sigma k)^(-Q)``.

    Args:
        sigma (float): rescaled time step
        k (int): number of resolvent steps
        q (float): exponent in [1, 3/2)

    Returns:
        GradientBound: the quadrature norm, the bound and the sharper intermediate bound
        ``||D H_1|| sigma^(-Q) Gamma(k - Q) / Gamma(k)``

    Notes:
        The gradient of ``Y_sigma^1`` behaves like ``r^-2`` at the origin, so the part of the
        norm integral on ``[0, sqrt(sigma)]`` is computed with the algebraic weight
        ``r^(2 - 2q)``.
    """
    sigma = _positive(sigma, "sigma")
    q = _check_q(q)
    Q = _exponent(q)
    kernel = RadialKernel.iterate(sigma, k)
    split = math.sqrt(sigma)

    def scaled(r):
        return float((r * r * abs(kernel.derivative(r))) ** q)

    head = quad(scaled, 0.0, split, weight="alg", wvar=(2.0 - 2.0 * q, 0.0), **_QUAD)[0]
    tail = quad(lambda r: r * r * float(abs(kernel.derivative(r))) ** q, split, np.inf, **_QUAD)[0]
    norm = (4.0 * math.pi * (head + tail)) ** (1.0 / q)

    heat = heat_gradient_norm(q)
    return GradientBound(
        q=q,
        Q=Q,
        norm=float(norm),
        bound=float(gamma(1.0 - Q) * heat * (sigma * k) ** -Q),
        sharp_bound=float(heat * sigma ** -Q * math.exp(gammaln(k - Q) - gammaln(k))),
    )
