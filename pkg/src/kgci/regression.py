"""Linear-model fitting, design constants, and realized confidence intervals.

The model is y = X beta + eps with iid N(0, sigma^2) errors.  The parameter
of interest is theta = a'beta; the uncertain prior information is that
tau = c'beta - t equals 0.  All solves go through the QR factorization of X;
(X'X)^{-1} is never formed explicitly.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import BothCovariancesZeroAmbiguous, DegenerateContrast, SingularDesign
from .special import t_quantile
from .splines import IntervalFamily

_RCOND = 1e-12


@dataclass(frozen=True)
class RegressionProblem:
    """Design matrix plus the two contrasts defining theta and tau."""

    X: np.ndarray
    a: np.ndarray
    c: np.ndarray
    t: float

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        a = np.asarray(self.a, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)
        n, p = X.shape
        if n <= p:
            raise ValueError(f"need n > p for residual degrees of freedom, got n={n}, p={p}")
        if a.shape != (p,) or c.shape != (p,):
            raise ValueError("a and c must be p-vectors matching X's columns")
        if not np.any(a):
            raise ValueError("a must be nonzero")
        if np.linalg.matrix_rank(np.column_stack([a, c])) < 2:
            raise ValueError("a and c must be linearly independent")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.n - self.p


@dataclass(frozen=True)
class DesignConstants:
    """Variance/covariance constants of (theta_hat, tau_hat) in sigma^2 units."""

    v11: float
    v22: float
    v12: float
    rho: float
    m: int


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    sigma_hat: float
    theta_hat: float
    tau_hat: float


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, value) -> bool:
        return self.lower <= value <= self.upper


def _qr(problem: RegressionProblem) -> np.ndarray:
    _, R = np.linalg.qr(problem.X)
    diag = np.abs(np.diag(R))
    if diag.min() <= _RCOND * max(diag.max(), 1.0):
        raise SingularDesign("X'X is numerically singular")
    return R


def design_constants(problem: RegressionProblem) -> DesignConstants:
    """v11, v22, v12 and rho from the QR factorization of X."""
    R = _qr(problem)
    ua = solve_triangular(R.T, problem.a, lower=True)
    uc = solve_triangular(R.T, problem.c, lower=True)
    v11 = float(ua @ ua)
    v22 = float(uc @ uc)
    v12 = float(ua @ uc)
    if v11 <= 0 or v22 <= 0:
        raise DegenerateContrast(f"non-positive variance constants v11={v11}, v22={v22}")
    rho = v12 / np.sqrt(v11 * v22)
    return DesignConstants(v11=v11, v22=v22, v12=v12, rho=float(rho), m=problem.m)


def fit(problem: RegressionProblem, y) -> FitResult:
    """Least squares via QR; sigma_hat = sqrt(RSS / (n - p))."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != (problem.n,):
        raise ValueError(f"y must have length {problem.n}, got {y.shape}")
    Q, R = np.linalg.qr(problem.X)
    diag = np.abs(np.diag(R))
    if diag.min() <= _RCOND * max(diag.max(), 1.0):
        raise SingularDesign("X'X is numerically singular")
    beta = solve_triangular(R, Q.T @ y)
    resid = y - problem.X @ beta
    rss = float(resid @ resid)
    return FitResult(
        beta_hat=beta,
        sigma_hat=float(np.sqrt(max(rss, 0.0) / problem.m)),
        theta_hat=float(problem.a @ beta),
        tau_hat=float(problem.c @ beta - problem.t),
    )


def standard_interval(fit_result: FitResult, consts: DesignConstants,
                      alpha: float) -> ConfidenceInterval:
    """theta_hat +- t(m) sqrt(v11) sigma_hat."""
    half = t_quantile(consts.m, alpha) * np.sqrt(consts.v11) * fit_result.sigma_hat
    return ConfidenceInterval(fit_result.theta_hat - half, fit_result.theta_hat + half)


def family_interval(fit_result: FitResult, consts: DesignConstants,
                    family: IntervalFamily) -> ConfidenceInterval:
    """The adaptive interval: data-dependent centre shift b and half-width s.

    Centre theta_hat - sqrt(v11) sigma_hat b(tau_hat / (sigma_hat sqrt(v22))),
    half-width sqrt(v11) sigma_hat s(|tau_hat| / (sigma_hat sqrt(v22))).
    Degenerates to [theta_hat, theta_hat] when sigma_hat = 0.
    """
    if fit_result.sigma_hat == 0.0:
        return ConfidenceInterval(fit_result.theta_hat, fit_result.theta_hat)
    scale = np.sqrt(consts.v11) * fit_result.sigma_hat
    stat = fit_result.tau_hat / (fit_result.sigma_hat * np.sqrt(consts.v22))
    centre = fit_result.theta_hat - scale * family.eval_b(stat)
    half = scale * family.eval_s(abs(stat))
    return ConfidenceInterval(centre - half, centre + half)


def naive_interval(problem: RegressionProblem, fit_result: FitResult,
                   consts: DesignConstants, alpha: float,
                   test_size: float | None = None) -> ConfidenceInterval:
    """Pre-test interval: standard interval if tau = 0 is rejected, otherwise
    the standard interval of the model constrained by c'beta = t.

    The accepted branch refits under the constraint: m + 1 residual degrees
    of freedom, quantile t(m+1), and Var(theta-tilde) = sigma^2 (v11 -
    v12^2 / v22).  ``test_size`` defaults to alpha.
    """
    if test_size is None:
        test_size = alpha
    if not 0.0 < test_size < 1.0:
        raise ValueError(f"test_size must be in (0, 1), got {test_size}")
    sd = fit_result.sigma_hat * np.sqrt(consts.v22)
    if sd > 0 and abs(fit_result.tau_hat) / sd > t_quantile(consts.m, test_size):
        return standard_interval(fit_result, consts, alpha)
    theta_c = fit_result.theta_hat - consts.v12 * fit_result.tau_hat / consts.v22
    rss_c = consts.m * fit_result.sigma_hat**2 + fit_result.tau_hat**2 / consts.v22
    sigma_c = np.sqrt(rss_c / (consts.m + 1))
    var_c = consts.v11 - consts.v12**2 / consts.v22
    half = t_quantile(consts.m + 1, alpha) * np.sqrt(var_c) * sigma_c
    return ConfidenceInterval(theta_c - half, theta_c + half)


def orthogonalize_tau(X, a, C, t2):
    """Combine two candidate contrasts into one uncorrelated with theta_hat.

    Given prior information psi = C'beta - t2 = 0 for a p x 2 matrix C,
    returns (c, t) defining tau = c'beta - t with Cov(theta_hat, tau_hat) = 0.
    If one column is already uncorrelated it is returned unchanged (a
    ``BothCovariancesZeroAmbiguous`` warning fires if both are); otherwise
    c = C1 - (cov1/cov2) C2 with the matching t.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    a = np.asarray(a, dtype=float).ravel()
    C = np.asarray(C, dtype=float)
    t2 = np.asarray(t2, dtype=float).ravel()
    if C.shape != (X.shape[1], 2) or t2.shape != (2,):
        raise ValueError("C must be p x 2 and t2 a 2-vector")
    if np.linalg.matrix_rank(C) < 2:
        raise ValueError("columns of C must be linearly independent")
    if np.linalg.matrix_rank(np.column_stack([C, a])) < 3:
        raise ValueError("a must not lie in the span of C's columns")

    _, R = np.linalg.qr(X)
    ua = solve_triangular(R.T, a, lower=True)
    u1 = solve_triangular(R.T, C[:, 0], lower=True)
    u2 = solve_triangular(R.T, C[:, 1], lower=True)
    cov1, cov2 = float(ua @ u1), float(ua @ u2)
    corr1 = cov1 / np.sqrt((ua @ ua) * (u1 @ u1))
    corr2 = cov2 / np.sqrt((ua @ ua) * (u2 @ u2))

    if abs(corr1) < 1e-12:
        if abs(corr2) < 1e-12:
            warnings.warn("both contrasts are uncorrelated with theta_hat; returning the first",
                          BothCovariancesZeroAmbiguous)
        return C[:, 0].copy(), float(t2[0])
    if abs(corr2) < 1e-12:
        return C[:, 1].copy(), float(t2[1])
    ratio = cov1 / cov2
    return C[:, 0] - ratio * C[:, 1], float(t2[0] - ratio * t2[1])


def load_problem(path):
    """Read a problem file: JSON with X (row-major), a, c, t, alpha."""
    with open(path) as fh:
        data = json.load(fh)
    missing = [k for k in ("X", "a", "c", "t", "alpha") if k not in data]
    if missing:
        raise KeyError(f"problem file {path} is missing fields: {', '.join(missing)}")
    problem = RegressionProblem(X=np.asarray(data["X"], dtype=float),
                                a=data["a"], c=data["c"], t=float(data["t"]))
    return problem, float(data["alpha"])


def factorial_2cubed_problem() -> RegressionProblem:
    """The 2^3 factorial design (no replication, 3-way interaction dropped).

    Columns: intercept, x1, x2, x3, x1x2, x1x3, x2x3.  theta is the contrast
    -2 b3 - 2 b13 + 2 b23 and tau = b23 - b13, giving rho = sqrt(2/3), m = 1.
    """
    rows = []
    for x1 in (-1, 1):
        for x2 in (-1, 1):
            for x3 in (-1, 1):
                rows.append([1, x1, x2, x3, x1 * x2, x1 * x3, x2 * x3])
    a = np.array([0.0, 0.0, 0.0, -2.0, 0.0, -2.0, 2.0])
    c = np.array([0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 1.0])
    return RegressionProblem(X=np.array(rows, dtype=float), a=a, c=c, t=0.0)
