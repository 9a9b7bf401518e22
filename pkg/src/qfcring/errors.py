"""Exception types raised across the package."""


class QFCError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QFCError, ValueError):
    """A physical parameter or configuration entry is missing or invalid."""


class ConfigParseError(ConfigurationError):
    """The configuration text could not be parsed.

    Attributes
    ----------
    line : int
        1-based line number where parsing failed.
    """

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IllConditionedError(QFCError, ArithmeticError):
    """Linear system condition number above the accepted threshold."""

    def __init__(self, condition: float, threshold: float):
        super().__init__(
            f"coupled-mode system is ill-conditioned (cond={condition:.3e} > {threshold:.0e})"
        )
        self.condition = condition


class ConvergenceError(QFCError, RuntimeError):
    """An iterative procedure (time integration, fit) did not converge."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message if residual is None else f"{message} (residual={residual:.3e})")
        self.residual = residual


class ModeRangeError(QFCError, ValueError):
    """Mode number outside the trusted window of the dispersion expansion."""


class AssignmentError(QFCError, ValueError):
    """A frequency could not be assigned to any resonator mode.

    Attributes
    ----------
    residual_hz : float
        Distance (Hz) from the nearest resonance.
    """

    def __init__(self, message: str, residual_hz: float):
        super().__init__(f"{message} (residual {residual_hz:.6e} Hz)")
        self.residual_hz = residual_hz


class ThermalRangeError(QFCError, ValueError):
    """Required temperature lies outside the configured tuning range."""

    def __init__(self, message: str, clamped_temperature: float, residual_m: float):
        super().__init__(message)
        self.clamped_temperature = clamped_temperature
        self.residual_m = residual_m


class TruncationError(QFCError, ValueError):
    """Sampling grid too narrow for the requested line shape."""

    def __init__(self, message: str, captured_fraction: float):
        super().__init__(f"{message} (captured flux fraction {captured_fraction:.6f})")
        self.captured_fraction = captured_fraction


class ResolutionError(QFCError, ValueError):
    """Input is under-resolved for the requested operation."""


class FitError(QFCError, RuntimeError):
    """Nonlinear least-squares fit failed."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class MixingError(QFCError, ValueError):
    """Requested noise-mixing inversion has no solution in [0, 1]."""


class NormalizationError(QFCError, ValueError):
    """No usable Poissonian plateau to normalize a coincidence histogram."""
