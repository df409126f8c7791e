"""Exception types shared across the engine.

Kept in one module so the index, router, and orchestrator layers can
raise/catch each other's failures without circular imports.
"""


class LogRouterError(Exception):
    """Base class for all engine errors."""


class IngestionError(LogRouterError):
    """A log file could not be read."""

    def __init__(self, path, reason=""):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"cannot ingest {self.path}: {reason}" if reason else f"cannot ingest {self.path}")


class StateFrozenError(LogRouterError):
    """Attempted to train a frozen miner state."""


class InvalidTemplateError(LogRouterError):
    """Template string violates catalogue invariants (e.g. empty)."""


class InvalidConfigError(LogRouterError):
    """A configuration value violates a module invariant."""


class InvalidPatternError(LogRouterError):
    """A user-supplied regex does not compile."""


class InvalidQueryError(LogRouterError):
    """A restricted query references unknown columns or malformed shapes."""


class EmptyStoreError(LogRouterError):
    """Aggregation that requires rows ran against an empty selection."""


class ProviderUnavailableError(LogRouterError):
    """Remote embedding endpoint is unreachable or timed out."""


class ProviderContractError(LogRouterError):
    """Remote embedding endpoint returned a malformed or wrong-dim vector."""


class StoreContractError(LogRouterError):
    """Vector dimensionality does not match the store."""


class GeneratorUnavailableError(LogRouterError):
    """Remote generator endpoint is unreachable or timed out."""


class TermRejectedError(LogRouterError):
    """Extracted keyword search term failed the input-validation whitelist.

    Carries the semantic-downgraded routing decision so callers can
    proceed without ever executing the tainted term.
    """

    def __init__(self, term, decision=None):
        self.term = term
        self.decision = decision
        super().__init__(f"search term rejected by whitelist: {term!r}")
