"""
Exception hierarchy; every error knows the CLI exit code it maps to
"""
from typing import Optional


class SbelabError(Exception):
    """Base class for all sbelab errors"""
    exit_code = 1

    def __init__(self, message: str, *, detail: Optional[dict] = None):
        super().__init__(message)
        self.detail = detail or {}


class ConfigError(SbelabError):
    """Bad configuration file or parameters"""
    exit_code = 2


class GateFailure(SbelabError):
    """An acceptance gate did not pass"""
    exit_code = 1


class EstimatorError(SbelabError):
    """Estimator preconditions violated"""
    exit_code = 1


class TrajectoryError(SbelabError):
    """Trajectory lacks data required by an analysis"""
    exit_code = 2


class StreamMismatchError(SbelabError):
    """Coupled runs were not driven by the same noise streams"""
    exit_code = 2


class NumericBlowUpError(SbelabError):
    """The field left the stable regime"""
    exit_code = 3

    def __init__(self, message: str, *, time: float, norm: float):
        super().__init__(message, detail={"time": time, "norm": norm})
        self.time = time
        self.norm = norm
