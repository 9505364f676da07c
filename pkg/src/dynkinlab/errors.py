"""Exception hierarchy shared by all modules."""


class DynkinLabError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DynkinLabError, ValueError):
    """A value object was constructed with parameters outside its contract."""


class UnsupportedNormalizationError(DynkinLabError, ValueError):
    """The reward has neither a single sign change nor an affine form."""


class CapacityError(DynkinLabError, MemoryError):
    """A requested grid is too large to allocate."""


class DomainError(DynkinLabError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class PrecisionError(DynkinLabError, ArithmeticError):
    """The requested tolerance is below what the numerics can deliver."""


class ConfigurationError(DynkinLabError, ValueError):
    """Solver or scenario parameters violate a documented precondition."""


class NumericalInconsistencyError(DynkinLabError, ArithmeticError):
    """A computed quantity violates a property that holds by construction."""


class ConfigError(DynkinLabError, ValueError):
    """A configuration document failed strict parsing.

    ``pointer`` is the JSON pointer of the offending location.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"
        self.reason = message

    def to_dict(self):
        return {"error": type(self).__name__, "pointer": self.pointer, "message": self.reason}
