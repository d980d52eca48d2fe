"""Exception types raised across the toolkit."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


# problem definition / validation
class DimensionMismatch(ToolkitError):
    pass


class BadComplementarity(ToolkitError):
    pass


class BadGrid(ToolkitError):
    pass


class MissingParamData(ToolkitError):
    pass


# collocation / transcription
class UnsupportedOrder(ToolkitError):
    pass


class IncompatibleScheme(ToolkitError):
    pass


class LengthMismatch(ToolkitError):
    pass


# collision
class StaticPair(ToolkitError):
    pass


class BadVertexMatrix(ToolkitError):
    pass


# mode schedules
class BranchOutOfRange(ToolkitError):
    pass


class EmptyMode(ToolkitError):
    pass


class NonpositiveDuration(ToolkitError):
    pass


# automatic differentiation
class UnsupportedPrimitive(ToolkitError):
    pass


class NonFiniteValue(ToolkitError):
    pass


# examples / CLI
class UnknownExample(ToolkitError):
    pass


class ConfigError(ToolkitError):
    pass
