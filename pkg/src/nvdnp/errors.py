"""Exception types shared across the package."""


class NvdnpError(Exception):
    """Base class for all package errors."""


class CapacityError(NvdnpError, ValueError):
    """Hilbert space larger than the configured cap."""


class UnsupportedConfigurationError(NvdnpError, ValueError):
    """Model combination the solvers do not handle (e.g. cross-transition tones)."""


class StepTooCoarseError(NvdnpError, ValueError):
    """Integrator step does not resolve the fastest retained frequency."""


class AmbiguousSteadyStateError(NvdnpError, RuntimeError):
    """Steady state is not unique and no initial state was given to select one."""

    def __init__(self, dimension):
        super().__init__(
            f"steady state is not unique: null space has dimension {dimension}; "
            "pass rho0 to select the state reached from it"
        )
        self.dimension = dimension


class NumericError(NvdnpError, ArithmeticError):
    """Eigensolver or propagation failure."""


class ConvergenceError(NvdnpError, RuntimeError):
    """Least-squares fit failed to converge or is degenerate."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class ConfigError(NvdnpError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message, key=None, line=None, expected=None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        text = message if not where else f"{', '.join(where)}: {message}"
        if expected:
            text += f" (expected {expected})"
        super().__init__(text)
        self.key = key
        self.line = line
        self.expected = expected
