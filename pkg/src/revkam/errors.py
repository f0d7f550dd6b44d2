"""Exception hierarchy shared by all modules.

Every domain error derives from :class:`RevKamError`; the CLI maps these to
exit code 1 and prints the class name on stderr.
"""


class RevKamError(Exception):
    """Base class for domain errors."""


class DimensionMismatch(RevKamError, ValueError):
    pass


class ZeroEigenvalue(RevKamError):
    pass


class NonSimpleSpectrum(RevKamError):
    pass


class PairingViolation(RevKamError):
    pass


class RankDeficient(RevKamError):
    pass


class EmptyRange(RevKamError):
    pass


class BudgetExceeded(RevKamError):
    pass


class EvaluationFailure(RevKamError):
    pass


class Overflow(RevKamError, ArithmeticError):
    pass


class NotProductForm(RevKamError):
    pass


class OrderViolation(RevKamError):
    pass


class ParityViolation(RevKamError):
    pass


class SpectrumInvalid(RevKamError):
    pass


class DomainExceeded(RevKamError):
    pass


class SmallDivisorBreakdown(RevKamError):
    pass


class NewtonDiverged(RevKamError):
    pass


class DegenerateJacobian(RevKamError):
    pass


class ImplicitSolveFailed(RevKamError):
    pass


class ConfigError(Exception):
    """Malformed configuration; mapped to CLI exit code 2."""
