"""Exception hierarchy shared by all rmtmusic modules."""


class RmtMusicError(Exception):
    """Base class for all library errors."""


class DegenerateSteering(RmtMusicError):
    """The steering matrix is numerically rank deficient (A*A too ill-conditioned)."""


class NumericalFailure(RmtMusicError):
    """A matrix factorization failed to converge."""


class PoleHit(RmtMusicError):
    """Evaluation point is too close to a pole of a rational function."""


class NoConvergence(RmtMusicError):
    """An iterative solver exhausted its budget."""


class SupportSearchFailed(RmtMusicError):
    """The extremum scan returned an inconsistent set of support edges."""


class SeparationViolated(RmtMusicError):
    """The noise/signal cluster separation preconditions do not hold."""


class PoleTooClose(RmtMusicError):
    """An integrand pole violates the safety margin around the contour."""


class QuadratureNoConvergence(RmtMusicError):
    """Contour quadrature did not converge within the node budget."""


class EmptyInterval(RmtMusicError):
    """A search interval has zero length."""


class TooFewMinima(RmtMusicError):
    """Fewer local minima than requested sources."""
