"""Exception types raised across the package."""


class CondFlowError(Exception):
    """Base class for all package errors."""


class DimensionError(CondFlowError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(CondFlowError, ValueError):
    """A configuration is invalid or inconsistent with its inputs."""


class ContractError(CondFlowError, ValueError):
    """A call violated a documented precondition."""


class NumericError(CondFlowError, FloatingPointError):
    """A computation produced NaN or Inf."""


class StiffnessError(NumericError):
    """Adaptive step size collapsed below the allowed minimum."""


class AlignmentError(CondFlowError, ValueError):
    """Condition durations do not fit the latent timeline."""


class EmptyInputError(CondFlowError, ValueError):
    """An input that must be non-empty was empty."""


class DensityError(CondFlowError, ValueError):
    """Requested events do not fit in the latent timeline."""


class StatsError(CondFlowError, ValueError):
    """Too few feature vectors to estimate moments."""


class FormatError(CondFlowError, ValueError):
    """A serialized file does not match the expected layout."""
