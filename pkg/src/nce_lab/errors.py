"""Exception hierarchy shared by every module."""


class NceLabError(Exception):
    """Base class for all errors raised by nce_lab."""


class ConfigError(NceLabError):
    """Invalid or incomplete experiment configuration."""


class NumericalError(NceLabError):
    """A computation could not produce a finite, trustworthy value."""


class NonFiniteIntegrand(NumericalError):
    pass


class InvalidParameter(NumericalError):
    pass


class NormalizationViolation(NumericalError):
    pass


class DomainError(NumericalError):
    pass


class DegenerateInformation(NumericalError):
    pass


class UnsupportedModel(NumericalError):
    pass


class NonFiniteRatio(NumericalError):
    pass


class NoRoot(NumericalError):
    pass


class AllCandidatesInfeasible(NumericalError):
    pass


class LineSearchFailure(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class DomainEscape(NumericalError):
    pass
