"""Exception hierarchy; each class maps to one CLI exit code."""


class WavefrontError(Exception):
    exit_code = 1


class HypothesisFailure(WavefrontError):
    """Evidence for a model hypothesis failed (exit code 2)."""

    exit_code = 2

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class ConvergenceFailure(WavefrontError):
    """A numerical procedure did not converge (exit code 3)."""

    exit_code = 3

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class BlowUp(ConvergenceFailure):
    """Solution norm exceeded the blow-up guard."""


class ConfigError(WavefrontError):
    """Invalid configuration (exit code 4)."""

    exit_code = 4
