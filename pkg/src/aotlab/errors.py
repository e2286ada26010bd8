"""Exception hierarchy shared by all aotlab modules."""


class AotError(Exception):
    """Base class for every error raised by aotlab."""


class StructureError(AotError, ValueError):
    """Shapes, dimensions or scenarios of the arguments do not match."""


class ParseError(AotError, ValueError):
    """A serialized document is malformed."""


class UnsupportedScenarioError(AotError, ValueError):
    """A closed-form result is only known for other scenarios."""


class ResourceLimitError(AotError, RuntimeError):
    """The request exceeds a configured enumeration or table cap."""


class DomainError(AotError, ValueError):
    """A numerical function was called outside of its domain."""
