"""Exception types shared across the package."""


class UqidError(Exception):
    """Base class for all package errors."""


class DomainError(UqidError):
    """An argument lies outside its mathematical domain (support, simplex, box)."""


class ConfigError(UqidError):
    """A configuration file or parameter block failed validation."""


class NumericError(UqidError):
    """A numerical quantity came out non-finite or otherwise unusable."""


class DivergenceError(NumericError):
    """Relative entropy is infinite (support mismatch between densities)."""


class FormatError(UqidError):
    """A serialized codebook or stream is malformed, truncated, or inconsistent."""


class CapacityError(UqidError):
    """A requested materialization exceeds a hard size cap."""


class AnalysisError(UqidError):
    """Not enough data for the requested statistical analysis."""
