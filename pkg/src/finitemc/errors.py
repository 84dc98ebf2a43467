"""Exception hierarchy shared by all modules."""


class FiniteMCError(Exception):
    """Base class for library errors."""


class ValidationError(FiniteMCError, ValueError):
    """An input object violates its structural invariants."""


class SpaceMismatch(FiniteMCError, ValueError):
    pass


class NotUnique(FiniteMCError):
    """The kernel admits more than one invariant distribution.

    ``basis`` holds one invariant distribution per closed recurrent class;
    every invariant distribution is a convex combination of them.
    """

    def __init__(self, basis, message=None):
        self.basis = list(basis)
        super().__init__(
            message or f"invariant distributions span a {len(self.basis)}-dimensional simplex"
        )


class NotInvariant(FiniteMCError, ValueError):
    pass


class Reducible(FiniteMCError):
    pass


class UnboundedClass(FiniteMCError):
    pass


class DualityGap(FiniteMCError):
    pass


class NonMetricDistance(FiniteMCError, ValueError):
    pass


class NoContraction(FiniteMCError):
    pass


class NoOverlap(FiniteMCError):
    pass


class DriftFailure(FiniteMCError):
    pass


class DegenerateCurve(FiniteMCError):
    pass


class DegenerateVariance(FiniteMCError):
    pass


class InvalidCertificate(FiniteMCError, ValueError):
    pass
