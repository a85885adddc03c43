"""Exception hierarchy shared by every module."""


class AssignCorrError(Exception):
    """Base class for all package errors."""


class InvalidArgument(AssignCorrError, ValueError):
    pass


class InvalidDesign(AssignCorrError, ValueError):
    """A collection of vectors violates the design invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid design: {msg}")


class NoNonMirrorPairs(AssignCorrError, ValueError):
    """The design has no pair of vectors other than self- and mirror-pairs."""


class TooLarge(AssignCorrError, ValueError):
    """An exhaustive computation would exceed its configured guard."""


class DesignTooSmall(AssignCorrError, RuntimeError):
    """A sampler could not produce the requested number of distinct vectors."""

    def __init__(self, message, attempts=None, obtained=None):
        super().__init__(message)
        self.attempts = attempts
        self.obtained = obtained


class SingularCovariance(AssignCorrError, ValueError):
    pass


class ParseError(AssignCorrError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line
