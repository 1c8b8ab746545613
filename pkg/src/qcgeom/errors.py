"""Exception types raised by the library."""


class QCGeomError(Exception):
    pass


class DimensionMismatch(QCGeomError, ValueError):
    pass


class InversionAtOrigin(QCGeomError, ValueError):
    pass


class OutOfAnnulus(QCGeomError, ValueError):
    pass


class NonPositiveConformalFactor(QCGeomError, ValueError):
    pass


class DegenerateDenominator(QCGeomError, ArithmeticError):
    pass


class ProjectiveDenominatorUnderflow(QCGeomError, ArithmeticError):
    pass


class BoundaryPoint(QCGeomError, ValueError):
    pass


class SouthPole(QCGeomError, ValueError):
    pass


class NonSymplectic(QCGeomError, ValueError):
    pass


class CoincidentPoints(QCGeomError, ValueError):
    pass


class BudgetTooSmall(QCGeomError, RuntimeError):
    pass


class NonConvergent(QCGeomError, RuntimeError):
    pass


class AxisCollision(QCGeomError, ValueError):
    pass


class BudgetExceeded(QCGeomError, RuntimeError):
    pass


class InsufficientData(QCGeomError, ValueError):
    pass


class AtomProximity(QCGeomError, ValueError):
    pass
