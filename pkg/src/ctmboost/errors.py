"""Exception hierarchy.

The CLI maps each family onto its own exit code, so new exceptions should
subclass one of the four bases below rather than ``CtmError`` directly.
"""


class CtmError(Exception):
    """Base class for all package errors."""


class ConfigError(CtmError, ValueError):
    """Invalid model configuration."""


class DataError(CtmError, ValueError):
    """Input data that cannot be used as given."""


class NumericError(CtmError, ArithmeticError):
    """Numerical failure during fitting or evaluation."""


class DomainError(DataError):
    """A point lies outside the declared domain of a basis."""

    def __init__(self, value, lo, hi, name=None):
        self.value = value
        self.lo = lo
        self.hi = hi
        self.name = name
        where = f" for '{name}'" if name else ""
        super().__init__(f"value {value!r}{where} outside domain [{lo!r}, {hi!r}]")


class LevelError(DataError):
    """Unknown level for a categorical basis."""

    def __init__(self, level, name=None):
        self.level = level
        where = f" for '{name}'" if name else ""
        super().__init__(f"unknown level {level!r}{where}")


class StructureError(ConfigError):
    """Malformed penalty structure, e.g. an asymmetric neighbour list."""


class SizeError(ConfigError):
    """Matrix dimensions incompatible with the requested operation."""


class DimensionError(DataError):
    """Array shapes that do not match each other."""


class CalibrationError(NumericError):
    """Requested degrees of freedom cannot be attained."""

    def __init__(self, target, lowest, highest):
        self.target = target
        self.attainable = (lowest, highest)
        super().__init__(
            f"df target {target:.6g} not attainable; "
            f"attainable range is ({lowest:.6g}, {highest:.6g})"
        )


class SolveError(NumericError):
    """Singular penalized normal equations."""


class MarginError(ConfigError):
    """Grid margin too small to place the first grid point below min(y)."""


class DegeneracyError(DataError):
    """Constant response; no grid can be defined."""


class TailError(NumericError):
    """Requested probability not bracketed by the fitted CDF over the grid."""

    def __init__(self, tau, cdf_lo, cdf_hi):
        self.tau = tau
        self.cdf_range = (cdf_lo, cdf_hi)
        super().__init__(
            f"tau={tau!r} not bracketed: cdf over grid spans [{cdf_lo:.6g}, {cdf_hi:.6g}]"
        )


class MonotonicityError(NumericError):
    """Fitted transformation decreases in the response at a covariate value."""


class ModelFormatError(CtmError, ValueError):
    """Corrupt or unreadable model document."""


class VersionError(ModelFormatError):
    """Model or config document carries an unsupported version tag."""
