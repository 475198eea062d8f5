"""Exception hierarchy shared by all modules."""


class WeakContactError(Exception):
    """Base class for library errors."""


class DomainError(WeakContactError, ValueError):
    """An argument lies outside the admissible set of a model."""


class PoleError(DomainError):
    """The boundary functional is +infinity at the requested momentum."""

    value = float("inf")


class ConvergenceError(WeakContactError, RuntimeError):
    pass


class UnboundedError(WeakContactError, RuntimeError):
    pass


class ShapeError(WeakContactError, ValueError):
    pass


class ConfigError(WeakContactError, ValueError):
    pass


class StabilityError(WeakContactError, RuntimeError):
    pass


class PreconditionError(WeakContactError, ValueError):
    pass


class ResourceError(WeakContactError, RuntimeError):
    pass


class StructureError(WeakContactError, RuntimeError):
    pass
