"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input is outside the validated domain of an operation."""


class LookupError_(KeyError):
    """A referenced electrode id is not present in the field source."""


class DegeneracyError(RuntimeError):
    """The fit problem has an unconstrained parameter direction.

    The message names the parameters spanning the flat direction.
    """

    def __init__(self, message: str, direction=None):
        super().__init__(message)
        self.direction = direction
