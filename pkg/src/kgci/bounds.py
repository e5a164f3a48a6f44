"""Lower bound on the achievable expected-length gain when rho = 0.

The compromise weight lambda(m) balances excess length against coverage
slack; the corresponding closed-form half-width function attains the
minimum, and its coverage surplus at gamma = 0 (nu_m) yields the bound
e(0; s) >= 1 - eta_m with eta_m = nu_m (1 - lambda)/lambda.  eta_m -> 0 as
m grows, which is why the gain disappears for large residual degrees of
freedom when the estimators are uncorrelated.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import _window_nodes
from .errors import RootNotBracketed
from .performance import DEFAULT_QUAD, QuadSettings
from .special import (
    _leggauss,
    normal_cdf,
    normal_pdf,
    scaled_chi_mean,
    scaled_chi_pdf,
    scaled_chi_rule,
    t_quantile,
)

_EMPTY = np.empty(0)


def _defining_gap(lam: float, m: int, t_m: float, e_w: float) -> float:
    # A(lam) - (1 + t^2/m)^(m/2+1); A monotone decreasing, so one root in (0,1)
    a_val = np.sqrt(2.0 / np.pi) * (1.0 - lam) * t_m * e_w / lam
    return a_val - (1.0 + t_m * t_m / m) ** (0.5 * m + 1.0)


def lambda_weight(m: int, alpha: float, method: str = "bisection") -> float:
    """The weight in (0, 1) solving the calibration equation
    sqrt(m) sqrt((sqrt(2/pi)(1-lam) t(m) E(W)/lam)^(1/(m/2+1)) - 1) = t(m)."""
    t_m = t_quantile(m, alpha)
    e_w = scaled_chi_mean(m)
    lo, hi = 1e-300, 1.0 - 1e-16
    f_lo = _defining_gap(lo, m, t_m, e_w)
    f_hi = _defining_gap(hi, m, t_m, e_w)
    if not (f_lo > 0 > f_hi):
        raise RootNotBracketed(f"no sign change for m={m}, alpha={alpha}")
    if method == "bisection":
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if _defining_gap(mid, m, t_m, e_w) > 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    if method == "secant":
        x0, x1 = 0.25, 0.75
        f0, f1 = _defining_gap(x0, m, t_m, e_w), _defining_gap(x1, m, t_m, e_w)
        for _ in range(200):
            if f1 == f0:
                break
            x2 = min(max(x1 - f1 * (x1 - x0) / (f1 - f0), 1e-300), 1.0 - 1e-16)
            if x2 == x1:
                break
            x0, f0, x1 = x1, f1, x2
            f1 = _defining_gap(x1, m, t_m, e_w)
        return x1
    raise ValueError(f"unknown method {method!r}")


def defining_residual(lam: float, m: int, alpha: float) -> float:
    """|LHS - t(m)| of the calibration equation at the given weight."""
    t_m = t_quantile(m, alpha)
    e_w = scaled_chi_mean(m)
    a_val = np.sqrt(2.0 / np.pi) * (1.0 - lam) * t_m * e_w / lam
    inner = a_val ** (1.0 / (0.5 * m + 1.0)) - 1.0
    if inner < 0:
        return float("inf")
    return abs(np.sqrt(m * inner) - t_m)


def bound_halfwidth(x, m: int, alpha: float, d: float):
    """The minimizing half-width: sqrt(1 + x^2/m) t(m) on [0, d), t(m) beyond."""
    t_m = t_quantile(m, alpha)
    x = np.asarray(x, dtype=float)
    out = np.where(x < d, np.sqrt(1.0 + x * x / m) * t_m, t_m)
    return float(out) if out.ndim == 0 else out


def coverage_centered(gamma: float, s_of_x, m: int, alpha: float, d: float,
                      quad: QuadSettings = DEFAULT_QUAD) -> float:
    """Coverage of the centred interval (b = 0, rho = 0) for any half-width
    function ``s_of_x`` given as a vectorized callable on [0, d].

    Direct quadrature of
    1 - alpha + 2 int_0^d int_0^inf (Phi(s w) - Phi(t_m w))
                (phi(wx - gamma) + phi(wx + gamma)) w f_W dw dx,
    used for the closed-form bound half-width (no spline approximation) and
    as an independent cross-check of the kernel path.
    """
    t_m = t_quantile(m, alpha)
    rule = scaled_chi_rule(m, quad.eps, quad.w_panels, quad.w_order,
                           refine_below=6.0 / t_m)
    fw = scaled_chi_pdf(rule.nodes, m)
    gl_x, gl_w = _leggauss(quad.h_order)
    hscale = 2.0 * quad.half / quad.h_panels
    g = abs(gamma)
    acc = 0.0
    for w, wt, f in zip(rule.nodes, rule.weights, fw):
        lo = max((g - quad.half) / w, 0.0)
        hi = min((g + quad.half) / w, d)
        if lo >= hi:
            continue
        x, xw = _window_nodes(lo, hi, w, _EMPTY, hscale, gl_x, gl_w)
        vals = ((normal_cdf(s_of_x(x) * w) - normal_cdf(t_m * w))
                * (normal_pdf(w * x - g) + normal_pdf(w * x + g)))
        acc += wt * f * w * float(xw @ vals)
    return 1.0 - alpha + 2.0 * acc


@dataclass(frozen=True)
class BoundResult:
    m: int
    alpha: float
    d: float
    lambda_m: float
    nu_m: float
    eta_m: float
    lower_bound: float


def length_lower_bound(m: int, alpha: float, d: float,
                       quad: QuadSettings = DEFAULT_QUAD) -> BoundResult:
    """eta_m and the bound 1 - eta_m on e(0; s) over coverage-feasible s."""
    if d <= 0:
        raise ValueError(f"d must be positive, got {d}")
    lam = lambda_weight(m, alpha)
    nu = coverage_centered(
        0.0, lambda x: bound_halfwidth(x, m, alpha, d), m, alpha, d, quad) - (1.0 - alpha)
    eta = nu * (1.0 - lam) / lam
    return BoundResult(m=m, alpha=alpha, d=d, lambda_m=lam, nu_m=nu,
                       eta_m=eta, lower_bound=1.0 - eta)


def bound_sweep_csv(results, path) -> None:
    """CSV columns m, lambda_m, nu_m, eta_m, lower_bound."""
    with open(path, "w") as fh:
        fh.write("m,lambda_m,nu_m,eta_m,lower_bound\n")
        for r in results:
            fh.write(f"{r.m},{r.lambda_m:.17g},{r.nu_m:.17g},"
                     f"{r.eta_m:.17g},{r.lower_bound:.17g}\n")
