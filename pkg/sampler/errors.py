"""Exception hierarchy and CLI exit codes."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class SamplerError(Exception):
    """Base class for every error raised by the package."""

    exit_code = EXIT_NUMERICAL


class ConfigError(SamplerError, ValueError):
    """Invalid experiment configuration; `key` names the offending field."""

    exit_code = EXIT_CONFIG

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ManifoldMismatchError(SamplerError, ValueError):
    """Points or vectors that do not belong to the same manifold."""


class UnsupportedManifoldError(SamplerError, ValueError):
    """Operation not available on the requested manifold kind."""


class NumericalError(SamplerError):
    """Numerical failure inside an oracle, optimizer or quadrature."""


class CutLocusError(NumericalError, ValueError):
    """Logarithm requested at (or numerically at) the cut locus."""


class RejectionCapError(NumericalError):
    """A rejection sampler hit its proposal cap.

    Carries the measured acceptance estimate so callers can tell a slow
    sampler from a broken one.
    """

    def __init__(self, what: str, attempts: int, acceptance_estimate: float):
        self.attempts = attempts
        self.acceptance_estimate = acceptance_estimate
        super().__init__(
            f"{what}: rejection cap of {attempts} proposals exceeded "
            f"(measured acceptance {acceptance_estimate:.3g})"
        )


class AcceptanceExceededError(NumericalError):
    """Unclipped acceptance ratio above one (strict mode)."""


class KernelNonpositiveError(NumericalError):
    """Truncated heat kernel evaluated to a nonpositive value where a log is needed."""


class NoTruncationLevelError(NumericalError):
    """No series truncation level up to the search limit reaches the requested accuracy."""


class DivergenceError(NumericalError):
    """Non-finite values produced by an iteration."""
