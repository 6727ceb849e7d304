# Copyright 2021 The Chemoflow Authors.

import math

import numpy as np
import pytest

from chemoflow.diagnostics import fit_decay_rate
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
from chemoflow.jko import (
    MIXTURE_LEVELS,
    TRAJECTORY_COLUMNS,
    JkoConfig,
    jko_step,
    jko_step_info,
    lagrangian_proposal,
    penalized_entropy,
    run_trajectory,
    solve_u_block,
    u_block,
    upwind_proposal,
    v_block,
    v_block_objective,
    yoshida_u,
)
from chemoflow.kernels import solve_resolvent_1d
from chemoflow.stationary import solve_stationary
from chemoflow.transport import compound_dist, w2


def _params(epsilon=0.0, kappa=1.0):
    return ModelParams(epsilon, kappa, ResponseFunction("rational"), Confinement.quadratic(1.0))


def _gaussian(grid, mean=0.5, sigma=0.6):
    return density_from_function(lambda x: np.exp(-0.5 * ((x - mean) / sigma) ** 2), grid)


def _initial(grid, amplitude=0.5):
    v = ConcentrationField(amplitude * np.exp(-0.5 * grid.centers ** 2), grid)
    return SystemState(_gaussian(grid), v)


class TestJkoConfig:
    def test_defaults(self):
        cfg = JkoConfig(tau=0.01)
        assert cfg.inner_tol == 1e-9
        assert cfg.max_sweeps == 200
        assert cfg.to_dict()["tau"] == 0.01

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(tau=0.0),
            dict(tau=-1.0),
            dict(tau=0.01, inner_tol=0.0),
            dict(tau=0.01, max_sweeps=0),
            dict(tau=0.01, quantile_m=1),
            dict(tau=0.01, u_floor=0.0),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            JkoConfig(**kwargs)


class TestVBlock:
    def test_uncoupled_is_implicit_euler(self):
        grid = build_grid(4.0, 400)
        tau, kappa = 0.05, 1.0
        v_prev = ConcentrationField(np.exp(-grid.centers ** 2), grid)
        v = v_block(v_prev, _gaussian(grid), _params(kappa=kappa), tau)
        expected = solve_resolvent_1d(v_prev.values / tau, kappa + 1.0 / tau, grid=grid)
        assert np.max(np.abs(v.values - expected)) <= 1e-10

    def test_coupled_minimizes_objective(self):
        rng = np.random.default_rng(42)
        grid = build_grid(4.0, 200)
        p = _params(epsilon=0.5)
        tau = 0.1
        u = _gaussian(grid)
        v_prev = ConcentrationField(0.3 * np.exp(-grid.centers ** 2), grid)
        v = v_block(v_prev, u, p, tau)
        best = v_block_objective(v.values, v_prev.values, u.values, p, tau, grid)
        for _ in range(20):
            trial = v.values + 1e-3 * rng.standard_normal(grid.n_cells)
            assert v_block_objective(trial, v_prev.values, u.values, p, tau, grid) >= best

    def test_coupled_source_raises_concentration(self):
        grid = build_grid(4.0, 200)
        v_prev = ConcentrationField.zeros(grid)
        v = v_block(v_prev, _gaussian(grid), _params(epsilon=0.5), 0.1)
        assert v.min() >= -1e-12
        assert v.values.max() > 0.0


class TestUBlock:
    def test_mixture_levels(self):
        assert MIXTURE_LEVELS == (0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)

    def test_never_increases(self):
        rng = np.random.default_rng(42)
        grid = build_grid(4.0, 200)
        p = _params(epsilon=0.1)
        for _ in range(5):
            anchor = _gaussian(grid, mean=rng.uniform(-1.0, 1.0), sigma=rng.uniform(0.4, 1.0))
            v = ConcentrationField(rng.uniform(0.0, 1.0) * np.exp(-grid.centers ** 2), grid)
            tau = float(rng.choice([0.01, 0.1, 1.0]))
            V = p.effective_potential(v.values, grid)
            result = solve_u_block(anchor, v, p, tau)
            assert result.value <= yoshida_u(anchor, anchor, V, tau)
            assert result.method in ("lagrangian", "upwind", "kept")
            assert abs(result.u.mass() - 1.0) <= 1e-10

    def test_tiny_step_keeps_quantiles(self):
        grid = build_grid(4.0, 400)
        anchor = _gaussian(grid)
        u = u_block(anchor, ConcentrationField.zeros(grid), _params(), 1e-8)
        assert np.max(np.abs(u.quantiles() - anchor.quantiles())) <= 1e-5

    def test_large_step_reaches_profile(self):
        grid = build_grid(4.0, 400)
        p = _params()
        v = ConcentrationField.zeros(grid)
        anchor = _gaussian(grid, mean=0.0, sigma=0.5)
        u = anchor
        for _ in range(10):
            u = u_block(anchor, v, p, 1e4, current=u)
        # a [U0 - x^2/2]_+ profile of unit mass has second moment a^2 / 5
        radius = math.sqrt(5.0 * u.second_moment())
        assert radius == pytest.approx(1.5 ** (1.0 / 3.0), rel=2e-2)

    def test_upwind_keeps_stationary_profile(self):
        grid = build_grid(4.0, 400)
        p = _params(epsilon=0.05)
        stationary = solve_stationary(p, grid).state
        V = p.effective_potential(stationary.v.values, grid)
        moved = upwind_proposal(stationary.u, V, 0.1)
        assert moved is not None
        assert np.max(np.abs(moved.values - stationary.u.values)) <= 1e-8

    def test_upwind_conserves_mass(self):
        grid = build_grid(4.0, 200)
        p = _params()
        moved = upwind_proposal(_gaussian(grid), p.potential_on(grid), 0.05)
        assert moved is not None
        assert abs(moved.mass() - 1.0) <= 1e-10
        assert np.all(moved.values >= 0.0)

    def test_lagrangian_moves_towards_confinement(self):
        grid = build_grid(4.0, 200)
        anchor = _gaussian(grid, mean=1.0)
        moved = lagrangian_proposal(anchor, anchor, ConcentrationField.zeros(grid), _params(), 0.1)
        assert moved is not None
        assert moved.mean() < anchor.mean()


class TestStep:
    @pytest.mark.parametrize("tau", [0.01, 0.1, 1.0])
    def test_stationary_is_a_fixed_point(self, tau):
        grid = build_grid(4.0, 200)
        p = _params(epsilon=0.05)
        stationary = solve_stationary(p, grid).state
        moved = jko_step(stationary, p, JkoConfig(tau=tau))
        assert compound_dist(moved, stationary).total <= 1e-6

    def test_decreases_penalized_entropy(self):
        grid = build_grid(4.0, 200)
        p = _params(epsilon=0.05)
        prev = _initial(grid)
        tau = 0.05
        info = jko_step_info(prev, p, JkoConfig(tau=tau))
        assert info.sweeps >= 1
        assert info.u_method in ("lagrangian", "upwind", "kept")
        assert penalized_entropy(info.state, prev, p, tau) <= entropy_H(prev, p).total + 1e-12
        assert penalized_entropy(prev, prev, p, tau) == pytest.approx(entropy_H(prev, p).total, abs=1e-15)

    def test_warm_start_from_stationary(self):
        grid = build_grid(4.0, 200)
        p = _params(epsilon=0.05)
        stationary = solve_stationary(p, grid).state
        prev = _initial(grid)
        cold = jko_step(prev, p, JkoConfig(tau=0.05))
        warm = jko_step(prev, p, JkoConfig(tau=0.05), stationary=stationary)
        assert penalized_entropy(warm, prev, p, 0.05) <= entropy_H(prev, p).total + 1e-12
        assert compound_dist(cold, warm).total <= 1e-2

    def test_sweep_cap(self):
        grid = build_grid(4.0, 200)
        with pytest.raises(SolverError) as e:
            jko_step(_initial(grid), _params(epsilon=0.05), JkoConfig(tau=0.05, max_sweeps=1))
        assert e.value.stage == "jko_step"


class TestTrajectory:
    def test_columns_and_monotone_entropy(self):
        grid = build_grid(4.0, 200)
        p = _params(epsilon=0.05)
        traj = run_trajectory(_initial(grid), p, JkoConfig(tau=0.05), 10)
        assert len(traj) == 11
        assert traj.t[-1] == pytest.approx(0.5, abs=1e-12)
        columns = traj.columns()
        assert tuple(columns) == TRAJECTORY_COLUMNS
        assert all(column.shape == (11,) for column in columns.values())
        assert np.all(np.diff(traj.H) <= 1e-10)
        assert traj.W2_step[0] == 0.0 and traj.sweeps[0] == 0
        assert math.isnan(traj.reg_ratio[0]) and np.isfinite(traj.reg_ratio[1])
        assert np.allclose(traj.series("L"), np.asarray(traj.L_u) + np.asarray(traj.L_v))
        assert np.allclose(traj.series("H-Hinf"), np.asarray(traj.H) - traj.H_inf)

    def test_stationary_initial_data(self):
        grid = build_grid(4.0, 200)
        p = _params(epsilon=0.05)
        stationary = solve_stationary(p, grid).state
        traj = run_trajectory(stationary, p, JkoConfig(tau=0.05), 5, stationary=stationary)
        assert max(traj.W2_step) <= 1e-6
        assert np.max(np.abs(np.asarray(traj.H) - traj.H[0])) <= 1e-9
        assert max(traj.series("L")) <= 1e-9

    def test_negative_step_count(self):
        grid = build_grid(4.0, 200)
        with pytest.raises(ValueError):
            run_trajectory(_initial(grid), _params(), JkoConfig(tau=0.05), -1)

    def test_failure_names_the_step(self):
        grid = build_grid(4.0, 200)
        with pytest.raises(SolverError) as e:
            run_trajectory(_initial(grid), _params(epsilon=0.05), JkoConfig(tau=0.05, max_sweeps=1), 3)
        assert "step 1:" in str(e.value)

    @pytest.mark.slow
    @pytest.mark.parametrize("n,tau,fraction", [(200, 0.01, 0.9), (400, 0.005, 0.975)])
    def test_uncoupled_decay_rate(self, n, tau, fraction):
        grid = build_grid(4.0, n)
        p = _params(kappa=1.0)
        traj = run_trajectory(_initial(grid), p, JkoConfig(tau=tau), int(round(8.0 / tau)))
        fit = fit_decay_rate(traj, "L", (0.5, 8.0), p)
        assert fit.rate >= 2.0 * min(p.kappa, p.lambda0) * fraction
        assert w2(traj.final.u, traj.stationary.u) <= 1e-2
