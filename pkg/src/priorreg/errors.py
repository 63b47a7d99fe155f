class ShapeError(ValueError):
    """Array dimensions do not match what an operation requires."""


class DomainError(ValueError):
    """Input lies outside the domain of an operation (e.g. NaN)."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class DivergedError(FloatingPointError):
    """A loss or gradient became non-finite.

    ``term`` names the offending loss component and ``step`` the optimizer
    step at which it happened, when known.
    """

    def __init__(self, message, term=None, step=None):
        super().__init__(message)
        self.term = term
        self.step = step


class ConfigError(ContractError):
    """An experiment configuration failed schema validation."""


class ExperimentError(RuntimeError):
    """A stage of an experiment run failed; ``stage`` names it."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
