"""Exception hierarchy shared by all modules."""


class DdaeError(Exception):
    """Base class for every error raised by ``ddae_hinf``."""


class DimensionMismatch(DdaeError, ValueError):
    pass


class NonpositiveDelay(DdaeError, ValueError):
    pass


class AssumptionOneViolated(DdaeError):
    """``U^T A_0 V`` is numerically singular (high index or advanced type)."""


class SingularAtLambda(DdaeError):
    """The characteristic matrix is singular at the requested point."""


class SingularAtTheta(DdaeError):
    """The difference part is singular at the requested phase vector."""


class AlgebraicLoop(DdaeError):
    pass


class CorrectionDiverged(DdaeError):
    pass


class MaxIterExceeded(CorrectionDiverged):
    pass


class EigSolverFailure(DdaeError):
    pass


class NotStable(DdaeError):
    pass


class MaxLevelsExceeded(DdaeError):
    pass


class NonsmoothPoint(DdaeError):
    pass


class InfeasibleStart(DdaeError):
    pass


class ParseError(DdaeError, ValueError):
    pass


class IndexOutOfRange(DdaeError, IndexError):
    pass
