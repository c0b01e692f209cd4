class HiFTError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(HiFTError, ValueError):
    pass


class ConfigError(HiFTError, ValueError):
    pass


class ContractError(HiFTError, ValueError):
    pass


class DegenerateLabelError(HiFTError):
    """No positive location could be assigned for a ground-truth box."""


class NumericalError(HiFTError, FloatingPointError):
    pass
