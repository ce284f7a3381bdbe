"""Exception types shared across the package."""


class NonFiniteValueError(ArithmeticError):
    """A loss, gradient or activation evaluated to inf/nan."""


class IdxParseError(ValueError):
    """Base class for malformed IDX files."""


class IdxMagicError(IdxParseError):
    pass


class IdxTruncatedError(IdxParseError):
    pass


class IdxDimensionError(IdxParseError):
    pass


class ConfigError(ValueError):
    """Invalid experiment configuration. ``field`` names the offending key path."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
