"""Exception hierarchy shared by all splab modules."""


class SplabError(Exception):
    """Base class for all library errors."""


class InputError(SplabError, ValueError):
    """An argument is malformed or out of range (e.g. a symbol outside the alphabet)."""


class DomainError(SplabError, ValueError):
    """A quantity is undefined for the given input, e.g. conditioning on a zero-probability prefix."""


class ConfigError(SplabError):
    """A configuration document could not be parsed or validated."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ResourceError(SplabError):
    """A requested computation exceeds the configured resource budget."""


class MappingError(SplabError, ValueError):
    """A grid mapping sends a grid rational outside the grid."""
