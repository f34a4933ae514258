"""Exception types raised across the package."""


class ShadowLossError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ShadowLossError, ValueError):
    pass


class NumericError(ShadowLossError, ValueError):
    pass


class ParameterError(ShadowLossError, ValueError):
    pass


class ConfigurationError(ShadowLossError, ValueError):
    pass


class StateError(ShadowLossError, RuntimeError):
    pass


class EmptyBatchError(ShadowLossError, ValueError):
    pass


class EmptyMiningError(ShadowLossError, ValueError):
    pass


class FormatError(ShadowLossError, ValueError):
    pass


class ConsistencyError(ShadowLossError, ValueError):
    pass


class DataIOError(ShadowLossError, OSError):
    pass


class StratificationError(ShadowLossError, ValueError):
    pass


class EvaluationError(ShadowLossError, ValueError):
    pass


class DegenerateProjectionError(EvaluationError):
    pass
