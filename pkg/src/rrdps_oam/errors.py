"""Exception types raised across the package."""


class InvalidDimensionError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class InvalidSettingError(ValueError):
    pass


class OutOfBandError(ValueError):
    pass


class AliasingError(ValueError):
    """Azimuthal grid too coarse for the harmonics involved."""


class ContractViolation(ValueError):
    pass


class ProbabilityOverflowError(ValueError):
    pass


class NotSiftableError(ValueError):
    pass


class ResourceLimitError(ValueError):
    pass
