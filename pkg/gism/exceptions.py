__all__ = [
    "GismError",
    "ParseError",
    "ValidationError",
    "ConfigurationError",
    "GeometryError",
    "AmbiguousBoundary",
    "DegenerateSegment",
    "DegenerateLine",
    "PatchError",
    "InjectivityViolation",
    "RankDeficiency",
    "CollocatedAtom",
    "OutputError",
]


class GismError(Exception):
    """
    Base class for errors raised by gism.  Each subclass maps to a distinct
    command-line exit status.
    """

    exit_code = 1
    category = "Unexpected"


class ParseError(GismError):
    exit_code = 2
    category = "Parse"

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field {field}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class ValidationError(GismError):
    exit_code = 3
    category = "Validation"

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ConfigurationError(GismError):
    exit_code = 4
    category = "Configuration"


class GeometryError(GismError):
    exit_code = 5
    category = "Geometry"


class AmbiguousBoundary(GeometryError):
    pass


class DegenerateSegment(GeometryError):
    pass


class DegenerateLine(GeometryError):
    pass


class PatchError(GismError):
    exit_code = 6
    category = "Patch"


class InjectivityViolation(PatchError):
    pass


class RankDeficiency(PatchError):
    pass


class CollocatedAtom(GismError):
    exit_code = 7
    category = "Collocation"


class OutputError(GismError):
    exit_code = 8
    category = "Output"

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(message)
