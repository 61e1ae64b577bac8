"""Exception types shared across the package."""


class WellposedError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 3


class NumericalError(WellposedError):
    exit_code = 3


class AllZero(NumericalError):
    """A density vanished at every node, so it cannot be normalized."""


class NonFinite(NumericalError):
    """NaN or infinite input where finite values are required."""


class InsufficientSupport(NumericalError):
    """A grid does not cover enough of a Gaussian's mass."""


class GridMismatch(WellposedError):
    """Two grid measures live on different grids."""

    exit_code = 2


class Degenerate(NumericalError):
    """A discrete measure without atoms."""


class TooLarge(WellposedError):
    """Input exceeds the size a brute-force oracle can enumerate."""

    exit_code = 2


class ZeroEvidence(NumericalError):
    """The evidence integral is zero; Bayes' formula does not apply."""


class NotPD(NumericalError):
    """A covariance could not be factored within the jitter cap."""


class ZeroReference(NumericalError):
    """Relative distance requested against an all-zero reference."""


class SchemaError(WellposedError):
    """A configuration file violates the strict schema."""

    exit_code = 2

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class UnknownExperiment(WellposedError):
    exit_code = 2
