# Copyright 2021 The Chemoflow Authors.

import numpy as np
import pytest

from chemoflow.domain import (
    Confinement,
    ConcentrationField,
    ModelParams,
    ResponseFunction,
    SystemState,
    build_grid,
    density_from_function,
)
from chemoflow.entropy import entropy_H
from chemoflow.errors import SolverError
from chemoflow.stationary import (
    EL_RESIDUAL_TOL,
    normalization_bisect,
    solve_stationary,
    stationary_eps_sweep,
    stationary_profile,
    verify_stationary_bounds,
)
from chemoflow.transport import compound_dist

U0 = 1.5 ** (2.0 / 3.0) / 2.0
SUPPORT_RADIUS = 1.5 ** (1.0 / 3.0)


def _params(epsilon=0.0, kappa=1.0):
    return ModelParams(epsilon, kappa, ResponseFunction("rational"), Confinement.quadratic(1.0))


class TestNormalization:
    def test_uncoupled_level(self):
        grid = build_grid(4.0, 1600)
        v = ConcentrationField.zeros(grid)
        U = normalization_bisect(v, _params())
        assert U == pytest.approx(U0, abs=1e-4)
        assert grid.integrate(stationary_profile(U, v, _params())) == pytest.approx(1.0, abs=1e-12)

    def test_concentration_is_ignored_without_coupling(self):
        rng = np.random.default_rng(42)
        grid = build_grid(4.0, 400)
        p = _params()
        v = ConcentrationField(rng.uniform(0.0, 2.0, size=grid.n_cells), grid)
        assert normalization_bisect(v, p) == normalization_bisect(ConcentrationField.zeros(grid), p)

    def test_support_radius(self):
        grid = build_grid(4.0, 1600)
        v = ConcentrationField.zeros(grid)
        profile = stationary_profile(normalization_bisect(v, _params()), v, _params())
        support = grid.centers[profile > 0.0]
        assert support.max() == pytest.approx(SUPPORT_RADIUS, abs=grid.h)
        assert support.min() == pytest.approx(-SUPPORT_RADIUS, abs=grid.h)


class TestSolveStationary:
    def test_uncoupled_closed_form(self):
        grid = build_grid(4.0, 1600)
        result = solve_stationary(_params(), grid)
        assert result.U == pytest.approx(U0, abs=1e-4)
        assert np.all(result.state.v.values == 0.0)
        assert result.state.u.values.max() == pytest.approx(result.U, abs=grid.h ** 2)
        assert result.el_residual <= 1e-12
        assert result.convexity_verified

    def test_coupled_residuals(self):
        grid = build_grid(4.0, 400)
        result = solve_stationary(_params(epsilon=0.05), grid)
        assert result.el_residual <= EL_RESIDUAL_TOL
        assert result.mass_error <= 1e-10
        assert result.V == pytest.approx(result.state.v.values.max())
        assert result.V > 0.0

    def test_minimizes_entropy(self):
        rng = np.random.default_rng(42)
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        result = solve_stationary(p, grid)
        H_inf = entropy_H(result.state, p).total
        u_inf, v_inf = result.state.u.values, result.state.v.values
        for _ in range(100):
            mean, sigma = rng.uniform(-1.0, 1.0), rng.uniform(0.3, 1.0)
            bump = density_from_function(lambda x: np.exp(-0.5 * ((x - mean) / sigma) ** 2), grid)
            theta = rng.uniform(0.0, 0.2)
            u = density_from_function(lambda x, b=bump.values: (1.0 - theta) * u_inf + theta * b, grid)
            v = v_inf + 0.05 * rng.standard_normal() * np.exp(-grid.centers ** 2)
            s = SystemState(u, ConcentrationField(v, grid))
            assert entropy_H(s, p).total >= H_inf - 1e-8

    def test_two_starts_agree(self):
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        tol = 1e-10
        first = solve_stationary(p, grid, tol=tol)
        start = SystemState(
            density_from_function(lambda x: np.exp(-(x - 0.5) ** 2), grid),
            ConcentrationField(np.exp(-grid.centers ** 2), grid),
        )
        second = solve_stationary(p, grid, tol=tol, initial=start)
        assert compound_dist(first.state, second.state).total <= 10.0 * tol

    def test_iteration_cap(self):
        grid = build_grid(4.0, 200)
        with pytest.raises(SolverError) as e:
            solve_stationary(_params(epsilon=0.05), grid, max_iter=1)
        assert e.value.stage == "stationary"

    def test_invalid_damping(self):
        with pytest.raises(ValueError):
            solve_stationary(_params(), build_grid(4.0, 200), omega=1.5)

    def test_report(self):
        result = solve_stationary(_params(epsilon=0.05), build_grid(4.0, 200))
        data = result.to_dict()
        assert data["U_eps"] == result.U
        assert data["convexity_unverified"] is False
        assert {"el_residual", "mass_error", "iterations", "V"} <= set(data)


class TestBounds:
    def test_uncoupled_equality(self):
        grid = build_grid(4.0, 400)
        p = _params()
        report = verify_stationary_bounds(solve_stationary(p, grid), p)
        assert report.max_u == pytest.approx(report.U0, abs=grid.h ** 2)
        assert report.bound_a == report.U0
        assert report.passed
        assert report.gradient_ratios == []

    def test_coupled_pointwise_bound(self):
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        result = solve_stationary(p, grid)
        sweep = stationary_eps_sweep(p, grid, [0.05, 0.025])
        report = verify_stationary_bounds(result, p, sweep=sweep)
        assert report.a_passed
        assert report.max_u < report.bound_a

    def test_gradient_scaling(self):
        grid = build_grid(4.0, 400)
        rows = stationary_eps_sweep(_params(), grid, [0.04, 0.02, 0.01])
        assert [row.epsilon for row in rows] == [0.04, 0.02, 0.01]
        ratios = [row.gradient_ratio for row in rows]
        assert max(ratios) <= 2.0 * min(ratios)
        assert all(np.isfinite(row.hessian_ratio) for row in rows)

    @pytest.mark.slow
    def test_default_sweep(self):
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        report = verify_stationary_bounds(solve_stationary(p, grid), p, workers=2)
        assert [row.epsilon for row in report.gradient_ratios] == [0.05, 0.025, 0.0125]
        assert report.passed
        assert report.to_dict()["passed"]

    def test_sweep_rejects_zero(self):
        with pytest.raises(ValueError):
            stationary_eps_sweep(_params(), build_grid(4.0, 200), [0.0])
