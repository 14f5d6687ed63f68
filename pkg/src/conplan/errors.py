"""Exception types shared across the toolkit."""


class DimensionMismatchError(ValueError):
    """An input vector/matrix does not match the expected dimensionality."""


class InvalidArgumentError(ValueError):
    """An argument violates a precondition (wrong range, empty list, ...)."""


class GenerationError(RuntimeError):
    """Dataset generation produced no usable records; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ParseError(ValueError):
    """A persisted file is malformed; reports the offending line."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc += f"{line}:"
        super().__init__(f"{loc} {message}" if loc else message)
        self.path = path
        self.line = line


class UnsupportedVersionError(ParseError):
    """A persisted file declares a format version this build cannot read."""


class ModelIOError(ValueError):
    """A model file is corrupted or its shapes do not chain."""


class DatasetHashMismatchError(ValueError):
    """Pseudo-labels were built for a different dataset than the one given."""


class UnattachableQueryError(ValueError):
    """A query configuration cannot be attached to the oracle graph."""


class InvalidEndpointError(ValueError):
    """A planning endpoint is off-manifold or in collision."""
