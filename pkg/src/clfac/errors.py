"""Exception types shared across the package."""


class ClfacError(Exception):
    pass


class IntegrationDiverged(ClfacError):
    """State became non-finite during interval integration."""


class NumericalFailure(ClfacError):
    """A finite-difference quotient came out non-finite."""


class InvalidRadii(ClfacError):
    """Radii are degenerate (core radius at or above the outer radius)."""


class EnvelopeOrderViolation(ClfacError):
    """Lower envelope exceeds the upper envelope on the working interval."""


class SamplingTooCoarse(ClfacError):
    """Requested sampling period exceeds the certified bound."""


class WeightOutOfSet(ClfacError):
    """Critic weights violate the admissible weight set."""


class DecayInfeasible(ClfacError):
    """No grid control achieves the required one-step decay."""


class CostUndefined(ClfacError):
    """Trajectory never settled in the target ball, cost truncation undefined."""


class RatioUndefined(ClfacError):
    """One of the two runs in a cost comparison failed to reach the target."""


class ConfigError(ClfacError):
    """Experiment configuration is malformed."""
