"""Exception hierarchy shared by every adaptrack module."""


class AdaptrackError(Exception):
    """Base class for all library errors."""


class NumericalBlowup(AdaptrackError):
    def __init__(self, t, message="non-finite value encountered"):
        self.t = t
        super().__init__(f"{message} at t={t:.6g}")


class NotHurwitz(AdaptrackError):
    pass


class SolveFailed(AdaptrackError):
    pass


class NotSymmetric(AdaptrackError):
    pass


class NoMatchingSolution(AdaptrackError):
    pass


class NonPositiveLambdaEstimate(AdaptrackError):
    def __init__(self, lam_hat):
        self.lam_hat = lam_hat
        super().__init__(f"lambda estimate has non-positive entries: {list(lam_hat)}")


class InsufficientData(AdaptrackError):
    pass


class UnsupportedWeight(AdaptrackError):
    pass


class GridMismatch(AdaptrackError):
    pass


class EmptyOrDegenerateLog(AdaptrackError):
    pass


class ConfigError(AdaptrackError):
    """Invalid experiment configuration; ``key`` is the dotted config key."""

    def __init__(self, key, message, line=None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key} {message}{where}")
