"""Probability kernels, quantiles, closed-form moment identities and quadrature rules.

Everything here is stateless.  ``W`` always denotes the sigma ratio
``sigma_hat / sigma`` for a Gaussian linear model with ``m`` residual degrees
of freedom; it is distributed as ``sqrt(Q/m)`` with ``Q ~ chi2_m``.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import betainc, chdtri, erf, gammaln

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
SQRT_2 = np.sqrt(2.0)


def normal_pdf(x):
    """Standard normal density, vectorized."""
    x = np.asarray(x, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def normal_cdf(x):
    """Standard normal distribution function via erf, |error| < 1e-14."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * (1.0 + erf(x / SQRT_2))
    return float(out) if out.ndim == 0 else out


def _t_two_sided(t, m):
    # P(|T| <= t) for T ~ t_m, via the regularized incomplete beta function
    if t <= 0.0:
        return 0.0
    return 1.0 - betainc(0.5 * m, 0.5, m / (m + t * t))


@lru_cache(maxsize=None)
def t_quantile(m: int, alpha: float) -> float:
    """Two-sided t quantile: the t with ``P(-t <= T <= t) = 1 - alpha``, T ~ t_m.

    Bisection on the incomplete-beta form of the CDF; the returned value
    satisfies ``|P(|T| <= t) - (1 - alpha)| < 1e-12``.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    target = 1.0 - alpha
    lo, hi = 0.0, 1.0
    for _ in range(2200):
        if _t_two_sided(hi, m) >= target:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise ArithmeticError("t_quantile bracket expansion failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _t_two_sided(mid, m) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=None)
def scaled_chi_mean(m: int) -> float:
    """E(W) = sqrt(2/m) * Gamma((m+1)/2) / Gamma(m/2), in log space for large m."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return float(np.exp(0.5 * np.log(2.0 / m) + gammaln((m + 1) / 2.0) - gammaln(m / 2.0)))


def scaled_chi_pdf(w, m: int):
    """Density of W = sqrt(Q/m), Q ~ chi2_m: f_W(w) = 2 m w f_chi2_m(m w^2)."""
    w = np.asarray(w, dtype=float)
    logc = np.log(2.0) + 0.5 * m * np.log(0.5 * m) - gammaln(0.5 * m)
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = logc + (m - 1) * np.log(w) - 0.5 * m * w * w
        out = np.where(w > 0.0, np.exp(logf), 2.0 * INV_SQRT_2PI if m == 1 else 0.0)
    return float(out) if out.ndim == 0 else out


def phi_w2_mean(x, m: int):
    """Closed form of ``E[phi(x W) W^2]``: ``(m/(x^2+m))^(m/2+1) / sqrt(2 pi)``."""
    x = np.asarray(x, dtype=float)
    out = INV_SQRT_2PI * np.exp(-(0.5 * m + 1.0) * np.log1p(x * x / m))
    return float(out) if out.ndim == 0 else out


def phi2_w2_mean(t, x, m: int):
    """Closed form of ``E[phi(t W) phi(x W) W^2]``: ``(m/(t^2+x^2+m))^(m/2+1) / (2 pi)``.

    Symmetric in (t, x); products of centred normal densities fold into a
    single density at radius sqrt(t^2+x^2), so this reduces to
    ``phi_w2_mean`` at that radius divided by sqrt(2 pi).
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = 0.5 / np.pi * np.exp(-(0.5 * m + 1.0) * np.log1p((t * t + x * x) / m))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Composite quadrature nodes/weights over a 1-D interval."""

    nodes: np.ndarray
    weights: np.ndarray
    domain: str = ""

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=None)
def _leggauss(order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def gauss_legendre_edges(edges, order: int) -> QuadratureRule:
    """Composite Gauss-Legendre rule over the panels defined by ``edges``."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be a strictly increasing 1-D array")
    if order < 2:
        raise ValueError(f"order must be >= 2, got {order}")
    ref_x, ref_w = _leggauss(order)
    half = 0.5 * np.diff(edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    nodes = (centers[:, None] + half[:, None] * ref_x[None, :]).ravel()
    weights = (half[:, None] * ref_w[None, :]).ravel()
    return QuadratureRule(nodes, weights, domain=f"[{edges[0]}, {edges[-1]}]")


def gauss_legendre_panels(a: float, b: float, panels: int, order: int) -> QuadratureRule:
    """Composite Gauss-Legendre rule: ``panels`` equal panels of the given order.

    Exact for polynomials of degree <= 2*order - 1 on each panel.
    """
    if not b > a:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    if panels < 1:
        raise ValueError(f"panels must be >= 1, got {panels}")
    return gauss_legendre_edges(np.linspace(a, b, panels + 1), order)


def scaled_chi_support(m: int, eps: float) -> tuple[float, float]:
    """Interval [w_lo, w_hi] outside which W carries mass < eps (chi2 quantiles)."""
    if not 0.0 < eps <= 1e-8:
        raise ValueError(f"eps must be in (0, 1e-8], got {eps}")
    w_hi = np.sqrt(chdtri(m, 0.5 * eps) / m)
    w_lo = np.sqrt(chdtri(m, 1.0 - 0.5 * eps) / m)
    return float(w_lo), float(w_hi)


def scaled_chi_rule(m: int, eps: float = 1e-10, panels: int = 24, order: int = 16,
                    refine_below: float | None = None) -> QuadratureRule:
    """Quadrature rule for ``integral g(w) f_W(w) dw`` over the truncated support.

    The density factor is *not* folded into the weights; integrate
    ``g(nodes) * scaled_chi_pdf(nodes, m)`` against ``weights``.

    ``refine_below`` grades the rule: half the panels go below that w.  Used
    for integrands with features on a scale ~1/t_m near w = 0, which is where
    small-m cases lose accuracy on a uniform rule.
    """
    w_lo, w_hi = scaled_chi_support(m, eps)
    if refine_below is None or refine_below <= w_lo or refine_below >= w_hi:
        rule = gauss_legendre_panels(w_lo, w_hi, panels, order)
    else:
        cut = min(refine_below, 0.5 * (w_lo + w_hi))
        k1 = max(panels // 2, 2)
        k2 = max(panels - k1, 2)
        edges = np.unique(np.concatenate(
            [np.linspace(w_lo, cut, k1 + 1), np.linspace(cut, w_hi, k2 + 1)]))
        rule = gauss_legendre_edges(edges, order)
    return QuadratureRule(rule.nodes, rule.weights, domain=f"scaled-chi({m})")
