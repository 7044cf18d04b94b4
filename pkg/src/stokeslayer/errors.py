"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Malformed user input: bad shapes, non-monotone grids, unknown options."""


class DegenerateModulusError(InvalidInputError):
    """A Dini modulus evaluated to zero (or negative) at a sampled separation."""


class DiniDivergenceError(RuntimeError):
    """The discrete Dini integral failed to converge; carries partial sums."""

    def __init__(self, message, partial_sums):
        super().__init__(message)
        self.partial_sums = list(partial_sums)


class GeometryError(InvalidInputError):
    """Bad boundary geometry: open curve, self-intersection, inward normals,
    or a domain too large for the requested periodic box."""


class CompatibilityError(InvalidInputError):
    """Boundary/initial data violate the compatibility conditions."""


class SlabContractionError(RuntimeError):
    """The boundary-system iteration failed to contract on the given slab.
    The slab length should be halved."""


class ContinuationError(RuntimeError):
    """Time continuation produced an inconsistent joint between slabs."""


class StiffnessError(RuntimeError):
    """The coupled fixed-point iteration failed to contract even after the
    time horizon was reduced below the configured floor."""


class HypothesisViolationError(InvalidInputError):
    """Structural hypotheses on model coefficients are violated (signs, k(0)=0)."""


class InvalidTestFieldError(InvalidInputError):
    """A weak-form test field is not admissible (support or divergence check)."""


class NearSingularWarning(UserWarning):
    """Evaluation point is too close to the boundary for the smooth-kernel rule."""


class AccuracyWarning(UserWarning):
    """A quadrature rule could not meet its relative accuracy target, e.g.
    because the Gaussian window extends past the sampled region of a field
    that does not vanish at its grid edge."""
