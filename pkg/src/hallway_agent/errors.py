"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine-raised errors."""


class ConfigError(EngineError):
    """Invalid engine configuration."""


class OrderingError(EngineError):
    """An event or timestamp arrived out of order."""


class StateError(EngineError):
    """An operation was invoked in a state it does not accept."""


class ContextValidationError(EngineError):
    """A user-context document failed validation."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ScenarioError(EngineError):
    """A scenario file is malformed or violates timeline constraints."""
