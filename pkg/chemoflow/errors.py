# Copyright 2021 The Chemoflow Authors.

__all__ = ["ChemoflowError", "ConfigError", "SolverError"]


class ChemoflowError(Exception):
    """Base class of every error raised on purpose by chemoflow"""


class ConfigError(ChemoflowError, ValueError):
    """
    Invalid run configuration.

    Args:
        path (str): dotted path of the offending field, e.g. ``stepping.tau``
        message (str): what is wrong with it
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super(ConfigError, self).__init__(f"{path}: {message}" if path else message)


class SolverError(ChemoflowError, RuntimeError):
    """
    Numerical failure of an iterative solver.

    Args:
        stage (str): name of the failing stage (``jko_step``, ``v_block``, ``stationary`` ...)
        message (str): description
        last_change (float): last measured change or residual, if any
    """

    def __init__(self, stage: str, message: str, last_change: float = None):
        self.stage = stage
        self.message = message
        self.last_change = last_change
        text = f"[{stage}] {message}"
        if last_change is not None:
            text += f" (last change: {last_change:.3e})"
        super(SolverError, self).__init__(text)
