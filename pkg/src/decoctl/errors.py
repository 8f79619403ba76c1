"""Exception types shared across the package."""


class DecoctlError(Exception):
    """Base class for all package errors."""


class ChannelIndexError(DecoctlError, IndexError):
    """A (system, level) index falls outside the scenario bounds."""


class NumericalRefusal(DecoctlError, RuntimeError):
    """A computation was refused because its numerical preconditions fail.

    Raised for too-coarse grids, non-decaying tabulated baths, indefinite
    noise covariances and similar conditions. The CLI maps it to exit code 3.
    """


class ConfigError(DecoctlError, ValueError):
    """Invalid scenario configuration. ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
