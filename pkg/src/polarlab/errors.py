class PolarlabError(Exception):
    """Base class for numerical guard failures."""


class GapError(PolarlabError):
    """A tracked spectral gap closed, or an energy hit the spectrum."""

    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (t = {t:.6g})")
        self.t = t


class HypothesisError(PolarlabError):
    """Refusal to run physics on a failed hypothesis report."""


class StepOverflowError(PolarlabError):
    pass


class EpsilonTooLargeError(PolarlabError):
    """The superadiabatic sum lost its spectral splitting around 0 and 1."""


class FluxError(ValueError):
    pass
