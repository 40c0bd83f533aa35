"""Exception hierarchy and warning categories shared across the package.

Every domain failure raises a subclass of :class:`LipgeoError` so callers
(and the HTTP layer) can map problems to structured error payloads without
string matching. Conditions that degrade a guarantee without invalidating
the computation are warnings instead.
"""

__all__ = [
    "LipgeoError",
    "NotSquare",
    "NotNormalized",
    "ZeroMarginal",
    "SingularKernel",
    "LengthMismatch",
    "ZeroReference",
    "MixtureInconsistent",
    "DegenerateSpectrum",
    "InvalidInducedDistribution",
    "TooManyParameters",
    "NoFeasiblePoint",
    "EpsilonOutOfRange",
    "SpectrumTie",
]


class LipgeoError(Exception):
    """Base class for all domain errors raised by this package."""


class NotSquare(LipgeoError):
    """A matrix that must be square (K x K) is not."""


class NotNormalized(LipgeoError):
    """A probability vector or stochastic column fails nonnegativity or
    does not sum to 1 within tolerance."""


class ZeroMarginal(LipgeoError):
    """A marginal distribution has an entry below the positivity floor."""


class SingularKernel(LipgeoError):
    """The leakage kernel P_{X|Y} fails the invertibility floor."""


class LengthMismatch(LipgeoError):
    """Vectors or collections that must share a length do not."""


class ZeroReference(LipgeoError):
    """The reference distribution of a ratio has a zero where the numerator
    does not, so the ratio (and its log) is undefined."""


class MixtureInconsistent(LipgeoError):
    """Conditionals mixed by the given weights do not reproduce the stated
    marginal within tolerance."""


class DegenerateSpectrum(LipgeoError):
    """All singular values of W equal 1, so no utility direction exists.

    Carries the partial geometry as attributes (``w``, ``singular_values``,
    ``sqrt_px``, ``c1``, ``c2``, ``c1_prime``, ``c2_prime``) so reporting
    layers can still emit the operator and thresholds.
    """

    def __init__(self, message, *, w=None, singular_values=None, sqrt_px=None,
                 c1=None, c2=None, c1_prime=None, c2_prime=None):
        super().__init__(message)
        self.w = w
        self.singular_values = singular_values
        self.sqrt_px = sqrt_px
        self.c1 = c1
        self.c2 = c2
        self.c1_prime = c1_prime
        self.c2_prime = c2_prime


class InvalidInducedDistribution(LipgeoError):
    """A perturbed conditional P_{Y|U=u} or P_{X|U=u} has a negative entry;
    epsilon is too large for the requested directions."""


class TooManyParameters(LipgeoError):
    """The oracle grid would enumerate more free parameters than the
    tractability guard allows (K*(|U|-1) > 6)."""


class NoFeasiblePoint(LipgeoError):
    """No grid candidate satisfied the leakage budget. Unreachable for
    epsilon >= 0 (independence is always feasible); signals a bug."""


class EpsilonOutOfRange(UserWarning):
    """Epsilon exceeds the validity threshold of the approximation in use;
    the construction proceeds but its o(eps^2) guarantee has lapsed."""


class SpectrumTie(UserWarning):
    """Multiple singular values of W tie for the maximum within tolerance;
    the principal direction was chosen by the documented convention."""
