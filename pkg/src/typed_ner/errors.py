"""Exception hierarchy shared across the toolkit."""


class TypedNerError(Exception):
    """Base class for every error raised by this package."""


class SchemaMismatchError(TypedNerError, ValueError):
    """A tag or type name does not resolve in the active schema."""

    def __init__(self, tag, line=None, source=None):
        self.tag = tag
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f" in {source}"
        if line is not None:
            where += f" at line {line}"
        super().__init__(f"unknown entity type {tag!r}{where}")


class CorpusParseError(TypedNerError, ValueError):
    """Malformed corpus line."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class ConfigurationError(TypedNerError, ValueError):
    """Invalid configuration or inconsistent inputs supplied by the caller."""


class ReferentialIntegrityError(TypedNerError, KeyError):
    """A record references an example id that does not exist."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DegenerateInputError(TypedNerError, ValueError):
    """Input for which the requested quantity is undefined (empty pools, zero norms)."""


class CodecError(TypedNerError, ValueError):
    """A value cannot be represented in the output grammar."""


class BackendError(TypedNerError, RuntimeError):
    """Failure reported by a model backend."""
