"""Exception types shared across the package."""


class SumlabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SumlabError):
    """A configuration value or combination of values is invalid."""


class DataError(SumlabError):
    """Input data is missing, malformed, or inconsistent."""


class ContractViolation(SumlabError):
    """An internal precondition was violated; indicates a caller bug."""


class TrainingError(SumlabError):
    """Training produced a non-finite loss or gradient."""
