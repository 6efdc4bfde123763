"""Exception hierarchy shared by every module of the package."""


class CompDeliveryError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(CompDeliveryError, ValueError):
    pass


class NegativeMass(CompDeliveryError, ValueError):
    pass


class NotNormalized(CompDeliveryError, ValueError):
    pass


class CoordOverlap(CompDeliveryError, ValueError):
    pass


class BudgetNegative(CompDeliveryError, ValueError):
    pass


class LengthMismatch(CompDeliveryError, ValueError):
    pass


class Infeasible(CompDeliveryError):
    """No auxiliary channel can meet the distortion budgets."""


class NonConvergence(CompDeliveryError):
    """Every restart ended without a feasible point."""


class TooLarge(CompDeliveryError):
    """The requested computation exceeds a configured resource budget."""
