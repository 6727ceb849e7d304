# Copyright 2021 The Chemoflow Authors.

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

import numpy as np
from dacite import Config, DaciteError, DaciteFieldError, UnexpectedDataError, from_dict

from chemoflow.domain import (
    MIN_CELLS,
    RESPONSE_FAMILIES,
    Confinement,
    ConcentrationField,
    Grid1D,
    ModelParams,
    ResponseFunction,
    SystemState,
    build_grid,
    density_from_function,
)
from chemoflow.errors import ConfigError
from chemoflow.jko import JkoConfig

__all__ = [
    "OUTPUT_ENV",
    "SWEEP_PARAMS",
    "GridConfig",
    "PotentialConfig",
    "ParamsConfig",
    "DensitySpec",
    "ConcentrationSpec",
    "InitialConfig",
    "SteppingConfig",
    "OutputConfig",
    "SolverConfig",
    "RunConfig",
    "load_config",
    "parse_config",
]

OUTPUT_ENV = "CHEMOFLOW_OUT"
SWEEP_PARAMS = ("epsilon", "tau", "n")
CONCENTRATION_KINDS = ("gaussian", "zero", "hat")


@dataclass
class GridConfig:
    R: float
    n: int


@dataclass
class PotentialConfig:
    lambda0: float = 1.0
    center: float = 0.0


@dataclass
class ParamsConfig:
    epsilon: float
    kappa: float
    phi: str = "rational"
    potential: PotentialConfig = field(default_factory=PotentialConfig)


@dataclass
class DensitySpec:
    """Gaussian mixture ``sum_k w_k N(mean_k, sigma_k^2)``"""

    weights: List[float]
    means: List[float]
    sigmas: List[float]


@dataclass
class ConcentrationSpec:
    kind: str = "zero"
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0


@dataclass
class InitialConfig:
    u: DensitySpec
    v: ConcentrationSpec = field(default_factory=ConcentrationSpec)


@dataclass
class SteppingConfig:
    tau: float
    t_end: float


@dataclass
class OutputConfig:
    directory: str = "out"
    every_k_steps: int = 1


@dataclass
class SolverConfig:
    inner_tol: float = 1e-9
    max_sweeps: int = 200
    quantile_m: Optional[int] = None
    u_floor: float = 1e-12
    tol_neg: float = 1e-10
    stationary_tol: float = 1e-10


def _check(condition: bool, path: str, message: str):
    if not condition:
        raise ConfigError(path, message)


def _finite(value, path: str):
    _check(math.isfinite(value), path, f"must be finite, got {value}")


@dataclass
class RunConfig:
    """
    Complete description of a run, read from JSON.

    Examples:
        {
            "grid": {"R": 4.0, "n": 400},
            "params": {"epsilon": 0.0, "kappa": 1.0, "phi": "rational",
                       "potential": {"lambda0": 1.0, "center": 0.0}},
            "initial": {"u": {"weights": [1.0], "means": [0.5], "sigmas": [0.6]},
                        "v": {"kind": "gaussian", "amplitude": 0.5, "width": 1.0}},
            "stepping": {"tau": 0.01, "t_end": 8.0},
            "output": {"directory": "out", "every_k_steps": 1}
        }
    """

    grid: GridConfig
    params: ParamsConfig
    initial: InitialConfig
    stepping: SteppingConfig
    output: OutputConfig = field(default_factory=OutputConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def validate(self) -> "RunConfig":
        g, p, s = self.grid, self.params, self.stepping
        _finite(g.R, "grid.R")
        _check(g.R > 0, "grid.R", f"must be > 0, got {g.R}")
        _check(g.n >= MIN_CELLS, "grid.n", f"must be >= {MIN_CELLS}, got {g.n}")

        for name in ("epsilon", "kappa"):
            _finite(getattr(p, name), f"params.{name}")
        _check(p.epsilon >= 0, "params.epsilon", f"must be >= 0, got {p.epsilon}")
        _check(p.kappa > 0, "params.kappa", f"must be > 0, got {p.kappa}")
        family = {"log": "log_saturation", "rational": "rational_saturation"}.get(p.phi, p.phi)
        _check(
            family in RESPONSE_FAMILIES,
            "params.phi",
            f"must be one of linear, log, rational, got {p.phi!r}",
        )
        _finite(p.potential.lambda0, "params.potential.lambda0")
        _finite(p.potential.center, "params.potential.center")
        _check(p.potential.lambda0 > 0, "params.potential.lambda0", "must be > 0")

        u = self.initial.u
        _check(len(u.weights) > 0, "initial.u.weights", "must not be empty")
        _check(
            len(u.weights) == len(u.means) == len(u.sigmas),
            "initial.u",
            "weights, means and sigmas must have the same length",
        )
        for name in ("weights", "means", "sigmas"):
            for k, value in enumerate(getattr(u, name)):
                _finite(value, f"initial.u.{name}[{k}]")
        _check(all(w >= 0 for w in u.weights), "initial.u.weights", "must be nonnegative")
        total = sum(u.weights)
        _check(abs(total - 1.0) <= 1e-12, "initial.u.weights", f"must sum to 1, got {total}")
        _check(all(sd > 0 for sd in u.sigmas), "initial.u.sigmas", "must be > 0")

        v = self.initial.v
        _check(
            v.kind in CONCENTRATION_KINDS,
            "initial.v.kind",
            f"must be one of {CONCENTRATION_KINDS}, got {v.kind!r}",
        )
        for name in ("amplitude", "center", "width"):
            _finite(getattr(v, name), f"initial.v.{name}")
        _check(v.width > 0, "initial.v.width", "must be > 0")

        _finite(s.tau, "stepping.tau")
        _finite(s.t_end, "stepping.t_end")
        _check(s.tau > 0, "stepping.tau", f"must be > 0, got {s.tau}")
        _check(s.t_end >= s.tau, "stepping.t_end", f"must be >= stepping.tau, got {s.t_end}")

        _check(self.output.every_k_steps >= 1, "output.every_k_steps", "must be >= 1")

        solver = self.solver
        for name in ("inner_tol", "u_floor", "stationary_tol"):
            value = getattr(solver, name)
            _finite(value, f"solver.{name}")
            _check(value > 0, f"solver.{name}", "must be > 0")
        _check(solver.max_sweeps >= 1, "solver.max_sweeps", "must be >= 1")
        _check(solver.tol_neg >= 0, "solver.tol_neg", "must be >= 0")
        _check(
            solver.quantile_m is None or solver.quantile_m >= 2,
            "solver.quantile_m",
            "must be >= 2",
        )
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.stepping.t_end / self.stepping.tau))

    @property
    def output_directory(self) -> str:
        return os.environ.get(OUTPUT_ENV) or self.output.directory

    def build_grid(self) -> Grid1D:
        return build_grid(self.grid.R, self.grid.n)

    def model_params(self) -> ModelParams:
        p = self.params
        return ModelParams(
            epsilon=p.epsilon,
            kappa=p.kappa,
            phi=ResponseFunction.from_name(p.phi),
            potential=Confinement.quadratic(p.potential.lambda0, p.potential.center),
        )

    def jko_config(self) -> JkoConfig:
        s = self.solver
        return JkoConfig(
            tau=self.stepping.tau,
            inner_tol=s.inner_tol,
            max_sweeps=s.max_sweeps,
            quantile_m=s.quantile_m,
            u_floor=s.u_floor,
            tol_neg=s.tol_neg,
        )

    def initial_state(self, grid: Grid1D) -> SystemState:
        u = self.initial.u
        weights = np.asarray(u.weights)
        means = np.asarray(u.means)
        sigmas = np.asarray(u.sigmas)

        def mixture(x):
            z = (x[:, None] - means[None, :]) / sigmas[None, :]
            return np.sum(weights * np.exp(-0.5 * z * z) / (sigmas * math.sqrt(2.0 * math.pi)), axis=1)

        v = self.initial.v
        if v.kind == "gaussian":
            values = v.amplitude * np.exp(-0.5 * ((grid.centers - v.center) / v.width) ** 2)
        elif v.kind == "hat":
            values = v.amplitude * np.maximum(1.0 - np.abs(grid.centers - v.center) / v.width, 0.0)
        else:
            values = np.zeros(grid.n_cells)

        try:
            density = density_from_function(mixture, grid)
        except ValueError as e:
            raise ConfigError("initial.u", f"no mass on the grid [-{grid.half_width}, {grid.half_width}]: {e}") from e
        return SystemState(density, ConcentrationField(values, grid))

    def with_value(self, param: str, value: float) -> "RunConfig":
        """Copy with one sweep parameter replaced"""
        if param == "epsilon":
            return replace(self, params=replace(self.params, epsilon=float(value))).validate()
        if param == "tau":
            return replace(self, stepping=replace(self.stepping, tau=float(value))).validate()
        if param == "n":
            _check(float(value).is_integer(), "grid.n", f"must be an integer, got {value}")
            return replace(self, grid=replace(self.grid, n=int(value))).validate()
        raise ConfigError("sweep.param", f"must be one of {SWEEP_PARAMS}, got {param!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _as_float(value):
    # ints are accepted where floats are expected, booleans are not
    if isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


_DACITE = Config(strict=True, type_hooks={float: _as_float})


def parse_config(data: dict) -> RunConfig:
    """
    Build and validate a :class:`RunConfig` from a parsed JSON object.

    Raises:
        ConfigError: on unknown keys, missing or mistyped fields, and out-of-range values
    """
    if not isinstance(data, dict):
        raise ConfigError("", "the configuration must be a JSON object")
    try:
        config = from_dict(RunConfig, data, config=_DACITE)
    except UnexpectedDataError as e:
        raise ConfigError("", f"unknown keys {sorted(e.keys)}") from e
    except DaciteFieldError as e:
        raise ConfigError(e.field_path or "", str(e)) from e
    except DaciteError as e:
        raise ConfigError("", str(e)) from e
    return config.validate()


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError("", f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError("", f"{path} is not valid JSON: {e}") from e
    return parse_config(data)
