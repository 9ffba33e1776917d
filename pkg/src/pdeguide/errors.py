"""Exception hierarchy; the CLI maps each family to an exit code."""

from __future__ import annotations


class PdeGuideError(Exception):
    """Base class for all package errors."""


class ConfigError(PdeGuideError, ValueError):
    """Invalid parameters or configuration."""


class GridError(ConfigError):
    """Grid, field or boundary data inconsistent with each other."""


class NumericError(PdeGuideError, ArithmeticError):
    """A computation left the finite range or failed to converge."""


class NonFiniteError(NumericError):
    pass


class ConvergenceError(NumericError):
    pass


class CFLError(ConfigError):
    """Explicit time step violates the stability restriction."""


class GuidanceInstability(NumericError):
    """Guided sampling or residual descent blew up.

    ``step`` is the reverse step (or iteration) at which the state stopped
    being finite; ``last_energy`` is the last finite residual energy seen.
    """

    def __init__(self, message: str, step: int, last_energy: float | None = None):
        super().__init__(message)
        self.step = step
        self.last_energy = last_energy


class TrainingDivergence(NumericError):
    pass


class DataError(PdeGuideError):
    """Malformed or incompatible data (bad magic, checksum, version)."""


class FormatError(DataError):
    pass
