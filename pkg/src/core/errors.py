"""
Exception hierarchy for PnPKit.

Library code raises these; the command-line harness is the only place that
turns them into exit codes.
"""

from typing import Optional


class PnPError(Exception):
    """Base class for every error raised by PnPKit."""


class ShapeMismatchError(PnPError, ValueError):
    """Two signals, or a signal and an operator, disagree on dimensions."""


class InvalidSignalError(PnPError, ValueError):
    """A signal or measurement set violates its value invariants."""


class SignalFormatError(PnPError):
    """A .pnps, PGM or CSV file could not be decoded."""


class ConfigError(PnPError):
    """An experiment config failed to parse or validate."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverError(PnPError):
    """A solver could not carry out an update."""


class NonFiniteIterateError(SolverError):
    """A stepper produced NaN or Inf."""

    def __init__(self, iteration: int, algorithm: str):
        self.iteration = iteration
        self.algorithm = algorithm
        super().__init__(
            f"{algorithm}: non-finite value produced at iteration {iteration}"
        )


class FixedPointNotReachedError(SolverError):
    """The fixed-point oracle ran out of iterations before reaching tol."""

    def __init__(self, residual: float, iterations: int, tol: float):
        self.residual = residual
        self.iterations = iterations
        self.tol = tol
        super().__init__(
            f"fixed point not reached after {iterations} iterations: "
            f"residual {residual:.3e} > tol {tol:.3e}"
        )


class RateFitError(PnPError):
    """Not enough usable points to fit a convergence rate."""


class EnsembleError(PnPError):
    """One member run of a seed ensemble failed."""

    def __init__(self, seed: int, cause: Exception):
        self.seed = seed
        self.cause = cause
        super().__init__(f"ensemble run failed for seed {seed}: {cause}")


class ExperimentError(PnPError):
    """A run inside an experiment failed; names the (algorithm, budget, seed) triple."""

    def __init__(self, algorithm: str, budget: float, seed: int, cause: Exception):
        self.algorithm = algorithm
        self.budget = budget
        self.seed = seed
        self.cause = cause
        super().__init__(
            f"run failed for algorithm={algorithm}, budget={budget:g}, seed={seed}: {cause}"
        )
