"""Exception hierarchy.

``ValidationError`` covers bad inputs and configuration, ``NumericalError``
covers failures that happen while computing (blow-ups, singular solves).
The CLI maps the two families to different exit codes.
"""


class GradMatchError(Exception):
    pass


class ValidationError(GradMatchError, ValueError):
    pass


class ParseError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class NumericalError(GradMatchError, ArithmeticError):
    pass


class BlowUpError(NumericalError):
    """Raised when an integrated state stops being finite or leaves the guard box."""

    def __init__(self, message, t_reached=None, trajectory=None):
        super().__init__(message)
        self.t_reached = t_reached
        self.trajectory = trajectory


class DivergenceError(NumericalError):
    pass
