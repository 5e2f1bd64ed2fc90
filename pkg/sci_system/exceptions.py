"""
Error types shared by the SCI toolkit
"""


class SCIError(Exception):
    """Base class for every toolkit failure"""


class ConfigError(SCIError, ValueError):
    """Invalid parameter, incompatible configuration or infeasible request"""


class ShapeError(ConfigError):
    """Array extents that do not agree with each other or with a config"""


class CubeFormatError(ConfigError):
    """A binary cube, measurement or tensor file that cannot be parsed"""


class NumericalError(SCIError, ArithmeticError):
    """Non-finite values or divergence during computation"""
