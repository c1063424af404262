"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised for malformed configuration or profile input.

    Carries the offending key so command-line tooling can point at it.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ComputationError(RuntimeError):
    """A computation could not produce a usable result (maps to CLI exit code 2)."""


class NoSinglePhotonSignalError(ComputationError):
    """The single-photon X-basis yield lower bound is zero: the phase-error
    rate is unbounded and no key rate can be certified."""


class NoPositiveRateError(ComputationError):
    """No positive key rate exists where one was required."""
