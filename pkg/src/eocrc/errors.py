class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending path when known."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class SplitError(ValueError):
    def __init__(self, message: str, label: str | None = None):
        self.label = label
        super().__init__(message)


class DimensionError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, raw: str):
        self.raw = raw
        super().__init__(message)


class TransportError(RuntimeError):
    pass


class StageError(RuntimeError):
    """A pipeline stage is missing a prerequisite or found stale inputs."""
