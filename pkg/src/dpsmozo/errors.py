"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit 2,
privacy-budget problems exit 3, provider failures exit 4. Everything else is
a plain ValueError raised at the offending call site.
"""

__all__ = [
    "ConfigError",
    "BudgetError",
    "BudgetInfeasibleError",
    "BudgetExhaustedError",
    "ProviderError",
    "UncoveredContextError",
    "RemoteTransportError",
]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class BudgetError(RuntimeError):
    """Base class for privacy budget failures."""


class BudgetInfeasibleError(BudgetError):
    """The requested privacy target cannot be met by any mechanism setting."""


class BudgetExhaustedError(BudgetError):
    """The query allowance covered by the accounting plan is used up."""


class ProviderError(RuntimeError):
    """A logit/embedding provider could not serve a request."""


class UncoveredContextError(ProviderError):
    """A trace replay was asked for a context that was never recorded."""

    def __init__(self, key):
        super().__init__(f"trace has no record for context key {key!r}")
        self.key = key


class RemoteTransportError(ProviderError):
    """A remote provider call failed after exhausting its retry allowance."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts
