"""Exception hierarchy shared by every module of the package."""


class LabError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


class PolynomialSyntaxError(LabError, ValueError):
    pass


class DimensionMismatch(LabError, ValueError):
    pass


class InvalidRegion(LabError, ValueError):
    pass


class PreconditionError(LabError, ValueError):
    """An operation was called outside its documented domain."""


class FunctionVanishes(LabError):
    """Every sampled value of f underflowed: f is (numerically) zero on the box."""


class BudgetExhausted(LabError):
    """Shell estimates stayed too noisy for the sampling budget."""


class BadBracket(LabError):
    """Critical-exponent search bracket does not straddle the threshold."""


class DegenerateRay(LabError):
    """The restriction of f to the ray is identically zero."""


class EmptyAfterBudget(LabError):
    """Zero-set descent accepted too few points."""


class InsufficientSample(LabError):
    pass


class IdenticallyZeroSlice(LabError):
    pass
