"""Exception types raised across the package."""


class PsidError(Exception):
    """Base class for all errors raised by psidkit."""


class NonConvergent(PsidError):
    pass


class SingularInnovation(PsidError):
    pass


class InvalidCovariance(PsidError):
    pass


class SingularCovariance(PsidError):
    pass


class SingularTransform(PsidError):
    pass


class SingularNoise(PsidError):
    pass


class SingularGram(PsidError):
    pass


class DimensionMismatch(PsidError, ValueError):
    pass


class MissingGain(PsidError):
    pass


class RequiresZeroS(PsidError):
    pass


class RankDeficient(PsidError):
    pass


class TooFewSamples(PsidError, ValueError):
    pass


class DegenerateAlignment(PsidError):
    pass


class DegenerateTarget(PsidError, ValueError):
    pass


class ConfigError(PsidError, ValueError):
    pass


class ParseError(PsidError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatVersionError(PsidError):
    pass
