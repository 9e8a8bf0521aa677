"""Exception types shared across the package."""


class SchemaError(ValueError):
    """Input file or message does not match the documented schema."""


class GeometryError(ValueError):
    """Track geometry is degenerate (self-intersecting or inverted boundaries)."""


class ConfigurationError(ValueError):
    """A parameter value is outside its valid range."""


class PathLostError(RuntimeError):
    """Controller cannot find a target point on the reference line."""
