"""Exception hierarchy.

Every error raised by the package derives from :class:`ZmdpError`. The two
intermediate classes decide the CLI exit code: :class:`ValidationError`
maps to 2 and :class:`NumericalError` maps to 3.
"""


class ZmdpError(Exception):
    """Base class for all package errors."""


class ValidationError(ZmdpError):
    """Bad input: malformed MDP, invalid hyperparameters, wrong MDP kind."""


class NumericalError(ZmdpError):
    """A computation could not produce a certified result."""


class ParseError(ValidationError):
    """An MDP file could not be parsed."""


class DanglingState(ValidationError):
    pass


class ProbSumViolation(ValidationError):
    pass


class DeadEnd(ValidationError):
    pass


class TerminalWithActions(ValidationError):
    pass


class MuTooLarge(ValidationError):
    """The chemical potential does not satisfy ``mu < -log(d)``."""


class NotDeterministic(ValidationError):
    pass


class UnknownStateAction(ValidationError):
    pass


class SystemTooLarge(ValidationError):
    pass


class MaxIterExceeded(NumericalError):
    """Raised when an iterative solver hits ``max_iter``.

    The best iterate is attached as ``result`` (flagged unconverged).
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SingularSystem(NumericalError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class CapExplosion(NumericalError):
    pass


class Cyclic(NumericalError):
    pass


class NonEpisodic(NumericalError):
    pass


class IoError(ZmdpError):
    """Reading or writing a file failed."""
