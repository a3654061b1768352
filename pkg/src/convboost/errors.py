"""Exception hierarchy shared by every subpackage."""


class ConvBoostError(Exception):
    """Base class for all library errors."""


class ShapeError(ConvBoostError, ValueError):
    pass


class GeometryError(ConvBoostError, ValueError):
    """A kernel or pooling window does not fit inside its input."""


class ConfigError(ConvBoostError, ValueError):
    pass


class LabelError(ConvBoostError, ValueError):
    pass


class DataError(ConvBoostError, ValueError):
    pass


class LoadError(DataError):
    pass


class StateError(ConvBoostError, RuntimeError):
    """An object was used before it was ready (stale cache, untrained model)."""


class ArchitectureError(ConvBoostError, ValueError):
    pass


class DegenerateLeafError(ConvBoostError, ArithmeticError):
    """Hessian sum plus lambda is zero, so no leaf weight exists."""


class UndefinedMetricError(ConvBoostError, ArithmeticError):
    pass
