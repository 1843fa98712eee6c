"""Exception hierarchy shared by every stage of the pipeline."""


class RRError(Exception):
    """Base class for all errors raised by this package."""


# image decoding / geometry
class ImageError(RRError):
    pass


class UnsupportedFormat(ImageError):
    pass


class CorruptFile(ImageError):
    pass


class NonRgb(ImageError):
    pass


class TooSmall(ImageError):
    pass


# transform
class BadDimensions(RRError):
    pass


class DimensionMismatch(RRError):
    pass


class BadSelection(RRError):
    pass


# statistical model
class InvalidParams(RRError, ValueError):
    pass


class SingularSigma(RRError):
    pass


class DegenerateData(RRError):
    pass


class DidNotConverge(RRError):
    pass


class NoRootInBracket(RRError):
    pass


# divergences
class NoConvergence(RRError):
    pass


class InvalidC(RRError, ValueError):
    pass


class HypergeometricDomain(RRError, ValueError):
    pass


# metric / feature files
class SelectionMismatch(RRError):
    pass


class BadInput(RRError, ValueError):
    pass


class ParseError(RRError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VersionMismatch(ParseError):
    pass


# benchmark statistics
class EmptyInput(RRError, ValueError):
    pass


class NonFinite(RRError, ValueError):
    pass


class LengthMismatch(RRError, ValueError):
    pass


class DegenerateVariance(RRError):
    pass


class FitFailed(RRError):
    pass
