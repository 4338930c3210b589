"""Exception types shared across the package."""


class PrivmixError(Exception):
    """Base class for errors raised by this package."""


class DomainError(PrivmixError, ValueError):
    """Confidential or latent data fell outside a channel's declared domain."""


class ConfigurationError(PrivmixError, ValueError):
    """Invalid or incompatible configuration (channel/kernel/sampler/params)."""


class InfeasibleError(PrivmixError, ValueError):
    """A calibration problem has no solution under the given constraints."""
