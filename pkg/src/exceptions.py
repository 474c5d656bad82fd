"""
Exception hierarchy for the laboratory
"""
from typing import Optional


class RoughSimError(Exception):
    pass


class InvalidArgumentError(RoughSimError, ValueError):
    """Thrown if arguments fail a basic sanity check (ranges, ordering, shapes)"""
    pass


class DimensionMismatchError(InvalidArgumentError):
    pass


class PartitionError(InvalidArgumentError):
    """Partition is not strictly increasing from 0 or violates the N*mesh bound"""
    pass


class PartitionMismatchError(InvalidArgumentError):
    pass


class IterateExplosionError(RoughSimError):
    """A recursion or solver iterate became NaN/Inf"""

    def __init__(self, step: int, message: Optional[str] = None):
        self.step = step
        super().__init__(message or f"Non-finite iterate at step {step}")


class RemainderBoundError(RoughSimError):
    def __init__(self, step: int, bound: float, value: float):
        self.step = step
        self.bound = bound
        self.value = value
        super().__init__(
            f"Remainder |r_{step}| = {value:.3e} exceeds declared bound {bound:.3e}"
        )


class SeriesConvergenceError(RoughSimError):
    """Green-Kubo series cannot be summed (spectral radius >= 1 on centered functions)"""
    pass


class InsufficientEnsembleError(RoughSimError):
    pass


class ConfigValidationError(RoughSimError):
    """Experiment config does not satisfy the schema; `field` is the dotted key path"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
