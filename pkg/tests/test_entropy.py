# Copyright 2021 The Chemoflow Authors.

import math

import numpy as np
import pytest

from chemoflow.domain import (
    Confinement,
    ConcentrationField,
    ModelParams,
    ResponseFunction,
    SystemState,
    build_grid,
    convexity_threshold,
    density_from_function,
)
from chemoflow.entropy import (
    boltzmann_E,
    convexity_probe,
    dirichlet_F,
    dissipation_Du,
    dissipation_Dv,
    entropy_H,
    grad_norm_lq,
    hest_lower_bound,
    lq_norm,
    lyapunov,
    subdiff_bounds_u,
    subdiff_bounds_v,
)
from chemoflow.stationary import solve_stationary


def _params(epsilon=0.0, kappa=1.0, potential=None):
    return ModelParams(
        epsilon, kappa, ResponseFunction("rational"), potential or Confinement.quadratic(1.0)
    )


def _uniform(a, b, grid):
    return density_from_function(lambda x: ((a <= x) & (x <= b)).astype(float), grid)


def _gaussian_state(grid, mean=0.4, sigma=0.6, amplitude=0.3):
    u = density_from_function(lambda x: np.exp(-0.5 * ((x - mean) / sigma) ** 2), grid)
    v = ConcentrationField(amplitude * np.exp(-grid.centers ** 2), grid)
    return SystemState(u, v)


class TestEntropy:
    def test_coupled_uniform(self):
        grid = build_grid(4.0, 400)
        s = SystemState(_uniform(0, 1, grid), ConcentrationField.zeros(grid))
        parts = entropy_H(s, _params(epsilon=0.1))
        assert parts.internal == pytest.approx(0.5, abs=1e-12)
        assert parts.coupling == pytest.approx(0.1, abs=1e-12)
        assert parts.total == pytest.approx(0.5 + 1.0 / 6.0 + 0.1, abs=1e-4)

    def test_uncoupled_uniform(self):
        grid = build_grid(4.0, 400)
        s = SystemState(_uniform(0, 1, grid), ConcentrationField.zeros(grid))
        parts = entropy_H(s, _params())
        assert parts.coupling == 0.0
        assert parts.total == pytest.approx(2.0 / 3.0, abs=1e-4)

    def test_steeper_potential(self):
        grid = build_grid(4.0, 400)
        s = SystemState(_uniform(0, 1, grid), ConcentrationField.zeros(grid))
        # W = x^2 is the quadratic confinement with lambda0 = 2
        parts = entropy_H(s, _params(potential=Confinement.quadratic(2.0)))
        assert parts.total == pytest.approx(0.5 + 1.0 / 3.0, abs=1e-4)

    def test_breakdown_dict(self):
        grid = build_grid(4.0, 400)
        parts = entropy_H(_gaussian_state(grid), _params(epsilon=0.05))
        data = parts.to_dict()
        assert data["total"] == parts.total
        assert set(data) == {"internal", "potential", "dirichlet", "decay", "coupling", "total"}


class TestBoltzmann:
    def test_uniform_unit_interval(self):
        grid = build_grid(4.0, 400)
        assert boltzmann_E(_uniform(0, 1, grid)) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_half_interval(self):
        grid = build_grid(4.0, 400)
        assert boltzmann_E(_uniform(0, 0.5, grid)) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_dilation(self):
        grid = build_grid(8.0, 1600)
        u = density_from_function(lambda x: np.exp(-x ** 2), grid)
        wide = density_from_function(lambda x: np.exp(-(x / 2.0) ** 2), grid)
        assert boltzmann_E(wide) == pytest.approx(boltzmann_E(u) - math.log(2.0), abs=1e-6)


class TestDirichlet:
    def test_zero(self):
        grid = build_grid(4.0, 400)
        assert dirichlet_F(ConcentrationField.zeros(grid), 1.0) == 0.0

    def test_hat(self):
        grid = build_grid(4.0, 1600)
        v = ConcentrationField.from_function(lambda x: np.maximum(0.0, 1.0 - np.abs(x)), grid)
        assert dirichlet_F(v, 1.0) == pytest.approx(4.0 / 3.0, abs=1e-2)

    def test_constant(self):
        grid = build_grid(4.0, 400)
        v = ConcentrationField(np.full(grid.n_cells, 0.5), grid)
        assert dirichlet_F(v, 2.0) == pytest.approx(2.0 * 0.25 * 4.0, rel=1e-12)

    def test_kappa_must_be_positive(self):
        grid = build_grid(4.0, 400)
        with pytest.raises(ValueError):
            dirichlet_F(ConcentrationField.zeros(grid), 0.0)


class TestLyapunov:
    def test_vanishes_at_stationary(self):
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        stationary = solve_stationary(p, grid).state
        parts = lyapunov(stationary, stationary, p)
        assert parts.L_u == pytest.approx(0.0, abs=1e-12)
        assert parts.L_v == 0.0
        assert parts.L_star == pytest.approx(0.0, abs=1e-12)

    def test_uncoupled_v_part_is_dirichlet(self):
        grid = build_grid(4.0, 400)
        p = _params()
        stationary = solve_stationary(p, grid).state
        assert np.max(np.abs(stationary.v.values)) == 0.0
        s = _gaussian_state(grid)
        assert lyapunov(s, stationary, p).L_v == pytest.approx(dirichlet_F(s.v, p.kappa), rel=1e-12)

    def test_decomposition_is_exact(self):
        rng = np.random.default_rng(42)
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        stationary = solve_stationary(p, grid).state
        H_inf = entropy_H(stationary, p).total
        for _ in range(100):
            s = _gaussian_state(
                grid,
                mean=rng.uniform(-1.0, 1.0),
                sigma=rng.uniform(0.3, 1.0),
                amplitude=rng.uniform(0.0, 1.0),
            )
            parts = lyapunov(s, stationary, p)
            gap = entropy_H(s, p).total - H_inf
            assert gap >= -1e-9
            assert abs(parts.decomposition_residual) <= 1e-9 * (1.0 + abs(gap))

    def test_rejects_unsolved_stationary(self):
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        s = _gaussian_state(grid)
        with pytest.raises(ValueError):
            lyapunov(s, s, p)


class TestDissipation:
    def test_vanishes_at_stationary(self):
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        stationary = solve_stationary(p, grid).state
        assert abs(dissipation_Du(stationary, stationary, p)) <= 1e-6
        assert dissipation_Dv(stationary, stationary, p) == 0.0

    def test_uncoupled_u_part_is_nonnegative(self):
        grid = build_grid(4.0, 400)
        p = _params()
        stationary = solve_stationary(p, grid).state
        assert dissipation_Du(_gaussian_state(grid), stationary, p) >= 0.0

    def test_uncoupled_u_part_converges(self):
        p = _params()
        values = []
        for n in (400, 800, 1600):
            grid = build_grid(4.0, n)
            stationary = solve_stationary(p, grid).state
            values.append(dissipation_Du(_gaussian_state(grid), stationary, p))
        assert abs(values[2] - values[1]) <= abs(values[1] - values[0]) + 1e-12
        assert values[2] == pytest.approx(values[1], rel=1e-2)

    def test_cosine_mode(self):
        grid = build_grid(4.0, 400)
        p = _params(kappa=1.0)
        stationary = solve_stationary(p, grid).state
        R = grid.half_width
        mode = np.cos(math.pi * grid.centers / R)
        s = SystemState(stationary.u, ConcentrationField(mode, grid))
        eigen = 4.0 / grid.h ** 2 * math.sin(math.pi * grid.h / (2.0 * R)) ** 2
        expected = (p.kappa + eigen) ** 2 * grid.h * np.sum(mode * mode)
        assert dissipation_Dv(s, stationary, p) == pytest.approx(expected, rel=1e-10)
        assert expected == pytest.approx((p.kappa + (math.pi / R) ** 2) ** 2 * R, rel=1e-4)


class TestConvexityProbe:
    @pytest.mark.parametrize("kappa", [1.0, 2.0])
    def test_uncoupled(self, kappa):
        rng = np.random.default_rng(42)
        grid = build_grid(4.0, 200)
        p = _params(kappa=kappa)
        s0 = _gaussian_state(grid, mean=-0.5, amplitude=rng.uniform(0.1, 1.0))
        s1 = _gaussian_state(grid, mean=0.5, sigma=0.4, amplitude=rng.uniform(0.1, 1.0))
        assert convexity_probe(s0, s1, p) >= min(1.0, kappa) - 1e-6

    def test_coupled_modulus(self):
        grid = build_grid(4.0, 200)
        p = _params(epsilon=0.5)
        modulus = convexity_threshold(p).modulus
        s0 = _gaussian_state(grid, mean=-0.5, amplitude=0.2)
        s1 = _gaussian_state(grid, mean=0.5, sigma=0.4, amplitude=0.8)
        assert convexity_probe(s0, s1, p) >= modulus - 1e-6

    def test_identical_states(self):
        grid = build_grid(4.0, 200)
        s = _gaussian_state(grid)
        with pytest.raises(ValueError):
            convexity_probe(s, s, _params())


class TestSubdifferentialBounds:
    def test_u_sandwich(self):
        rng = np.random.default_rng(42)
        grid = build_grid(4.0, 400)
        p = _params()
        stationary = solve_stationary(p, grid).state
        for _ in range(100):
            s = _gaussian_state(grid, mean=rng.uniform(-1.0, 1.0), sigma=rng.uniform(0.4, 1.0))
            bounds = subdiff_bounds_u(s, stationary, p)
            assert bounds.lower <= bounds.value + 1e-9
            assert bounds.holds(0.05)

    def test_v_sandwich(self):
        rng = np.random.default_rng(42)
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        stationary = solve_stationary(p, grid).state
        for _ in range(100):
            s = _gaussian_state(grid, amplitude=rng.uniform(0.0, 2.0))
            bounds = subdiff_bounds_v(s, stationary, p)
            assert bounds.lower <= bounds.value * (1.0 + 1e-12) + 1e-15
            assert bounds.value <= bounds.upper * (1.0 + 1e-12) + 1e-15


class TestNorms:
    def test_lq_of_constant(self):
        h = 0.01
        values = np.full(800, 2.0)
        assert lq_norm(values, h, 1.2) == pytest.approx(2.0 * 8.0 ** (1.0 / 1.2), rel=1e-12)

    def test_gradient_of_linear(self):
        grid = build_grid(1.0, 100)
        assert grad_norm_lq(3.0 * grid.centers, grid.h, 1.0) == pytest.approx(3.0 * 99 * grid.h, rel=1e-10)

    def test_q_below_one(self):
        with pytest.raises(ValueError):
            lq_norm(np.ones(10), 0.1, 0.5)

    def test_lower_bound_of_uncoupled_entropy(self):
        grid = build_grid(4.0, 400)
        s = _gaussian_state(grid)
        assert hest_lower_bound(s, _params()) == 0.0
        with pytest.raises(ValueError):
            hest_lower_bound(s, _params(epsilon=0.05))
