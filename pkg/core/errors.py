"""Error hierarchy shared by the model, the engine and the data loaders."""

from typing import Any


class PrefsimError(Exception):
    """Base class for every error raised by prefsim."""


class InvalidArgumentError(PrefsimError, ValueError):
    """An argument is outside the domain an operation accepts."""


class OutOfDomainError(InvalidArgumentError):
    """A location falls outside the interior of the spatial grid."""

    def __init__(self, index: int, point: tuple[float, float]):
        self.index = index
        self.point = point
        super().__init__(
            f"location {index} at ({point[0]:.6g}, {point[1]:.6g}) is outside the grid"
        )


class ConditioningError(PrefsimError, ArithmeticError):
    """A precision or Hessian matrix could not be factorized."""

    def __init__(self, message: str, **context: Any):
        self.context = context
        if context:
            details = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                                for k, v in context.items())
            message = f"{message} ({details})"
        super().__init__(message)


class InnerFailureError(PrefsimError, RuntimeError):
    """The inner Newton solve for the latent mode failed."""

    def __init__(self, message: str, iterations: int = 0):
        self.iterations = iterations
        super().__init__(message)


class VesselLookupError(PrefsimError, KeyError):
    """A vessel id has no registered catchability entry."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown vessel"


class MissingDataError(PrefsimError, LookupError):
    """A covariate series does not cover the window a computation requires."""


class SchemaError(PrefsimError, ValueError):
    """A data file does not follow its declared schema."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class SummaryError(PrefsimError, RuntimeError):
    """Too few successful replicates to summarize."""

    def __init__(self, successes: int, failures: int, required: int):
        self.successes = successes
        self.failures = failures
        self.required = required
        super().__init__(
            f"{successes} successful replicates ({failures} failed); "
            f"at least {required} are required"
        )


class ComponentError(PrefsimError):
    """A likelihood component failed; carries the component tag."""

    def __init__(self, component: str, cause: Exception):
        self.component = component
        self.cause = cause
        super().__init__(f"[{component}] {cause}")
