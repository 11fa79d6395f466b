"""
Error hierarchy for the engine.

Every error raised by domain code derives from AtomsError so the CLI can map
failures onto stable exit codes.
"""


class AtomsError(Exception):
    """Base class for engine errors."""


class DimensionError(AtomsError, ValueError):
    """Operand shapes do not line up."""


class ContractError(AtomsError, ValueError):
    """A documented precondition was violated."""


class NumericError(AtomsError, ArithmeticError):
    """A NaN or Inf was produced or received."""


class FormatError(AtomsError, ValueError):
    """A binary or metadata file could not be decoded."""


class ConfigError(AtomsError, ValueError):
    """An experiment configuration is invalid."""


class OrthogonalityError(ContractError):
    """Two atoms expected to be orthogonal are not."""

    def __init__(self, first: int, second: int, inner: float) -> None:
        self.pair = (first, second)
        self.inner = inner
        super().__init__(
            f"atoms {first} and {second} are not orthogonal "
            f"(inner product {inner:.3g})"
        )
