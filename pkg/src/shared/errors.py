"""Exception hierarchy shared by every Signpost module and handler."""


class SignpostError(Exception):
    """Base class for errors raised on purpose by this package."""


class ValidationError(SignpostError, ValueError):
    """A record, file or argument does not satisfy its schema."""

    def __init__(self, message: str, line: int = None, field: str = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class ShapeError(SignpostError, ValueError):
    """Tensor shapes are incompatible or a required sequence is empty."""


class ConfigError(SignpostError):
    """A configuration key is unknown or holds an invalid value."""


class CheckpointError(SignpostError):
    """A checkpoint cannot be read or does not match the running config."""


class DivergenceError(SignpostError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, diagnostics: dict = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class RetrievalError(SignpostError):
    """The retrieval backend could not be queried or indexed."""
