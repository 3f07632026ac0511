"""Exception types shared across the pipeline stages."""


class CpsmineError(Exception):
    """Base class for all package-specific errors."""


class ParseError(CpsmineError):
    """Input file is structurally malformed."""


class ValidationError(CpsmineError):
    """Parsed data violates a domain invariant."""


class UnknownComponent(CpsmineError):
    """A component id is not present in the topology map."""


class FormatError(CpsmineError):
    """No record in the input could be parsed."""


class SchemaError(CpsmineError):
    """A tabular input is missing mandatory columns."""


class DegenerateInput(CpsmineError):
    """Numeric routine was handed input it cannot cluster or split."""


class UnknownNode(CpsmineError):
    """Referenced node does not exist in the causal network."""


class WindowTooShort(CpsmineError):
    """Measurement window has fewer samples than the check requires."""


class UnlabeledWindow(CpsmineError):
    """A training window carries no scenario label."""


class ConfigError(CpsmineError):
    """A configuration value is outside its allowed range."""


class ShapeError(CpsmineError):
    """A feature row does not match the trained column layout."""


class UnknownLabelMapping(CpsmineError):
    """A scenario label has no physical component mapping."""


class ScriptError(CpsmineError):
    """A scenario script is internally inconsistent."""


class InputError(CpsmineError):
    """A stage input file is missing or unreadable."""
