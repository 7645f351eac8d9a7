class ContagionFitError(Exception):
    """Base class for every error raised by contagion_fit."""


class InputError(ContagionFitError, ValueError):
    """Bad input data or configuration (CLI exit status 1)."""


class IntegrationError(ContagionFitError, RuntimeError):
    """The ODE solver could not reach the requested horizon."""

    def __init__(self, message: str, time: float) -> None:
        super().__init__(f"{message} (failed at t={time:.6g} days)")
        self.time = time


class SamplerError(ContagionFitError, RuntimeError):
    """The MCMC sampler could not run (CLI exit status 2)."""
