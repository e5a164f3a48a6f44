"""Exception and warning types shared across the package."""


class KgciError(Exception):
    """Base class for package errors."""


class SingularDesign(KgciError):
    """The design matrix has (numerically) dependent columns."""


class DegenerateContrast(KgciError):
    """A contrast vector produced a non-positive variance constant."""


class KnotOrderError(KgciError):
    """Spline knots are not strictly increasing over [0, d]."""


class NonPositiveS(KgciError):
    """The half-width spline dips to zero or below on [0, d]."""


class QuadratureBudgetExceeded(KgciError):
    """Requested tolerance is unattainable at the configured node counts."""


class RootNotBracketed(KgciError):
    """A scalar root finder could not bracket a sign change."""


class Infeasible(KgciError):
    """No feasible point was found; the reverted start should always be feasible."""


class BothCovariancesZeroAmbiguous(UserWarning):
    """Both candidate contrasts are uncorrelated with the estimator; first returned."""
