"""Exception hierarchy."""


class FloqgenError(Exception):
    """Base class for library errors."""


class DimensionMismatch(FloqgenError, ValueError):
    pass


class NonFiniteError(FloqgenError, ValueError):
    pass


class DegenerateKernel(FloqgenError):
    """The generator has more than one (numerically) zero singular value."""


class NonNormalizable(FloqgenError):
    """The kernel vector has (numerically) zero trace."""


class PairingViolation(FloqgenError, ValueError):
    """Harmonics fail the conjugation pairing H(-n) = H(n)^dagger."""


class MissingComponent(FloqgenError, KeyError):
    pass


class StepTooLarge(FloqgenError, ValueError):
    """Requested step does not resolve the fast period."""


class StateInvariantViolation(FloqgenError):
    """A propagated state is not a valid density matrix within tolerance."""


class TruncationNotConverged(FloqgenError):
    pass


class TruncationTooSmall(FloqgenError):
    pass


class ShapeMismatch(FloqgenError, ValueError):
    """Generator is not of the single-jump, harmonics-in-{-1,0,1} form."""


class ConfigError(FloqgenError, ValueError):
    pass
