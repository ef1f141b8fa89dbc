"""Exception types shared across the package."""


class RadShockError(Exception):
    """Base class for all package errors."""


class DomainError(RadShockError):
    """A state left the admissible box of the model."""


class DegeneracyError(RadShockError):
    """Eigenvalues that should be simple came too close."""


class CompensatorNotFound(RadShockError):
    pass


class ProfileBranchError(RadShockError):
    pass


class DomainTooSmall(RadShockError):
    pass


class ProfileRejected(RadShockError):
    pass


class StiffnessError(RadShockError):
    """Step size underflow in the adaptive integrator."""


class CollisionError(RadShockError):
    """Two tracked eigenvalues collided along a transport path."""


class InconclusiveWinding(RadShockError):
    pass


class GapViolation(RadShockError):
    pass


class ConsistentSplittingError(RadShockError):
    """An asymptotic exponent sits on the imaginary axis."""


class ResonanceError(RadShockError):
    """Frobenius exponent too close to an integer for the plain series."""


class MatchingError(RadShockError):
    pass


class ZeroOnContour(RadShockError):
    pass


class NearSingularResolvent(RadShockError):
    pass


class QuadratureError(RadShockError):
    pass


class TrackingLost(RadShockError):
    pass


class SimulationAbort(RadShockError):
    pass


class ConfigError(RadShockError):
    pass
