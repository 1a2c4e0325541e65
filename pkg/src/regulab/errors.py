"""Exception hierarchy shared across the toolkit."""


class RegulabError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 4


class DimensionError(RegulabError, ValueError):
    exit_code = 2


class ConfigError(RegulabError, ValueError):
    exit_code = 2


class AssumptionError(RegulabError):
    """A structural assumption on the plant, exosystem or data does not hold."""

    exit_code = 3

    def __init__(self, assumption, message):
        self.assumption = assumption
        super().__init__(f"{assumption}: {message}")


class InsufficientDataError(AssumptionError):
    def __init__(self, message):
        super().__init__("excitation condition", message)


class DivergenceError(RegulabError, FloatingPointError):
    """Integration produced a non-finite state."""

    def __init__(self, t, message="non-finite state"):
        self.t = t
        super().__init__(f"{message} at t={t:.6g}")


class SynthesisError(RegulabError):
    """Gain synthesis failed (pair not stabilizable or Riccati solve failed)."""


class ResonanceError(RegulabError):
    """Sylvester system singular: exosystem spectrum overlaps the closed loop."""


class OracleError(RegulabError):
    """A model-based construction used for verification failed."""
