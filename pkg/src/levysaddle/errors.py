"""Exception hierarchy shared by the numerical modules and the command line."""
from __future__ import annotations


class LevySaddleError(Exception):
    """Base class for all library errors."""


class ConfigError(LevySaddleError):
    """Invalid or inconsistent run configuration."""


class NonConvergence(LevySaddleError):
    """A numerical procedure did not reach its tolerance."""


class QuadratureError(NonConvergence):
    def __init__(self, message: str, achieved: float = float("nan")):
        super().__init__(f"{message} (achieved relative error {achieved:.3g})")
        self.message = message
        self.achieved = achieved

    def __reduce__(self):
        return type(self), (self.message, self.achieved)


class SaddleError(NonConvergence):
    """The saddle equation could not be bracketed or solved."""


class OverflowRange(NonConvergence):
    """A moment left the representable log range."""


class GateFailure(LevySaddleError):
    """The characteristic function was not shown to decay fast enough for inversion."""

    def __init__(self, message: str, verdict=None):
        super().__init__(message)
        self.verdict = verdict

    def __reduce__(self):
        return type(self), (self.args[0], self.verdict)
