"""Exception types shared across the package."""


class NMCError(Exception):
    """Base class for all errors raised by this package."""


# autodiff
class NonFiniteDerivative(NMCError, FloatingPointError):
    """A value, gradient or Hessian entry came out NaN or infinite."""


class UnsupportedPrimitive(NMCError, TypeError):
    """A function without registered derivative rules was applied to a Jet."""


# linalg
class NoConvergence(NMCError, ArithmeticError):
    pass


class SingularMatrix(NMCError, ArithmeticError):
    pass


class NotPositiveDefinite(NMCError, ArithmeticError):
    pass


# distributions / graph
class InvalidParameter(NMCError, ValueError):
    pass


class OutOfSupport(NMCError, ValueError):
    pass


# proposers
class ProposalError(NMCError, ArithmeticError):
    """An estimation rule could not produce a valid proposal."""


class DegenerateCurvature(ProposalError):
    pass


class InvalidScale(ProposalError):
    pass


class GammaInvalid(ProposalError):
    pass


class DirichletInvalid(ProposalError):
    pass


# graph construction
class CycleDetected(NMCError, ValueError):
    pass


class UnknownParent(NMCError, KeyError):
    pass
