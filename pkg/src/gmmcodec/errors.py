"""Exception hierarchy shared by every module of the codec."""


class CodecError(Exception):
    """Base class for all codec errors."""


class AlphabetRangeError(CodecError, ValueError):
    """A symbol lies outside the coding alphabet [-255, 256]."""


class GeometryError(CodecError, ValueError):
    """Tensor shapes are inconsistent or not divisible as required."""


class DomainError(CodecError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class DegenerateDistributionError(CodecError, ValueError):
    pass


class EmptyInputError(CodecError, ValueError):
    pass


class NumericError(CodecError, ArithmeticError):
    """Non-finite values encountered; ``layer`` names where, if known."""

    def __init__(self, message: str, layer: str | None = None):
        super().__init__(message if layer is None else f"{layer}: {message}")
        self.layer = layer


class CodingInfeasibleError(CodecError, ValueError):
    """A symbol has zero width in its CDF table."""


class StreamExhaustedError(CodecError):
    """The decoder ran past the end of its payload."""


class CorruptStreamError(CodecError):
    """Container failed structural or checksum validation."""


class WeightFormatError(CodecError):
    """Weight file is malformed or inconsistent."""


class WeightMismatchError(CodecError):
    """Container was produced with different network weights."""
