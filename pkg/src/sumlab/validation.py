"""Small input-validation helpers used throughout the package."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, ContractViolation


def require(condition: bool, message: str) -> None:
    """Raise ContractViolation unless `condition` holds."""
    if not condition:
        raise ContractViolation(message)


def require_config(condition: bool, message: str) -> None:
    """Raise ConfigurationError unless `condition` holds."""
    if not condition:
        raise ConfigurationError(message)


def check_tokens(tokens, what: str = "token") -> list[str]:
    """Validate a token sequence: non-empty strings with no whitespace."""
    tokens = list(tokens)
    for t in tokens:
        if not isinstance(t, str) or not t or any(c.isspace() for c in t):
            raise ContractViolation(f"invalid {what}: {t!r}")
    return tokens


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"non-finite values in {name}")
    return arr
