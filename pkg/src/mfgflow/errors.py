"""Exception types shared across the solver suite."""


class MfgflowError(Exception):
    """Base class for all package errors."""


class ConfigError(MfgflowError):
    """Invalid, missing, or inconsistent configuration."""


class NonFiniteState(MfgflowError):
    """A solver state picked up NaN/Inf (CFL violation or blow-up)."""


class DegenerateDensity(MfgflowError):
    """Interpolation denominator reached a near-vacuum / nonpositive state."""


class ZeroMass(MfgflowError):
    """A density has nonpositive total mass after clamping."""
