"""Coverage probability, scaled expected length, and the optimization criteria.

All quantities are exact-quadrature evaluations in the pivotal
representation: W = sigma_hat/sigma (scaled chi, m df) independent of
H ~ N(gamma, 1), and the estimator pivot G | H = h ~ N(rho (h - gamma),
1 - rho^2).  Coverage and length enter as corrections to the reverted
interval, so the reverted family scores exactly 1 - alpha and 1.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import _kernels
from .special import (
    _leggauss,
    normal_cdf,
    phi_w2_mean,
    scaled_chi_mean,
    scaled_chi_pdf,
    scaled_chi_rule,
)
from .splines import IntervalFamily


@dataclass(frozen=True)
class QuadSettings:
    """Node budget for the nested quadrature.

    ``h_panels`` is the panel budget across the 2*half-wide Gaussian window
    of the inner integral; pieces never exceed ``2 half / h_panels`` in
    h = w*x units regardless of w.
    """

    w_panels: int = 24
    w_order: int = 16
    h_panels: int = 32
    h_order: int = 16
    eps: float = 1e-10
    half: float = 8.5

    @classmethod
    def fast(cls) -> "QuadSettings":
        """Cheaper preset used inside optimization loops (~1e-6 accuracy)."""
        return cls(w_panels=12, w_order=8, h_panels=12, h_order=8, eps=1e-9, half=7.5)


DEFAULT_QUAD = QuadSettings()


class _Engine:
    """Precomputed node data for one (m, d, knot layout, settings) combination."""

    def __init__(self, m, d, t_m, knots_b, knots_s, quad: QuadSettings):
        self.m = m
        self.d = d
        self.t_m = t_m
        self.quad = quad
        self.knots_b = np.asarray(knots_b, dtype=float)
        self.knots_s = np.asarray(knots_s, dtype=float)

        rule = scaled_chi_rule(m, quad.eps, quad.w_panels, quad.w_order,
                               refine_below=6.0 / t_m)
        fw = scaled_chi_pdf(rule.nodes, m)
        self.w_nodes = rule.nodes
        self.w_wfw = rule.weights * fw * rule.nodes
        self.w_wfw2 = rule.weights * fw * rule.nodes**2
        self.w_hi = float(rule.nodes[-1])
        gl = _leggauss(quad.h_order)
        self.gl_x, self.gl_w = gl[0], gl[1]
        self.hscale = 2.0 * quad.half / quad.h_panels
        interior = np.concatenate((self.knots_b[1:-1], self.knots_s[1:-1]))
        self.splits_cov = np.unique(interior[(interior > 0) & (interior < d)])
        ks = self.knots_s[1:-1]
        self.splits_s = ks[(ks > 0) & (ks < d)]
        self.e_w = scaled_chi_mean(m)

        # knot-aligned rule on [0, d] for the closed-form criterion
        edges = [0.0]
        for k in np.concatenate((self.knots_s[1:-1], [d])):
            base = edges[-1]
            seg = k - base
            pieces = int(np.ceil(seg / 1.0))
            edges.extend(base + seg * (j + 1) / pieces for j in range(pieces))
        edges = np.asarray(edges)
        ref_x, ref_w = _leggauss(16)
        h2 = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        self.crit_x = (mid[:, None] + h2[:, None] * ref_x[None, :]).ravel()
        self.crit_w = (h2[:, None] * ref_w[None, :]).ravel()
        self.crit_lemma = phi_w2_mean(self.crit_x, m)

    def coverage_delta(self, gammas, b_coefs, s_coefs, rho, backend=None):
        return _kernels.coverage_delta(
            np.asarray(gammas, dtype=float), self.w_nodes, self.w_wfw,
            self.knots_b, b_coefs, self.knots_s, s_coefs,
            self.d, self.t_m, float(rho), self.quad.half, self.hscale,
            self.gl_x, self.gl_w, self.splits_cov, backend=backend)

    def sel_delta(self, gammas, s_coefs, backend=None):
        raw = _kernels.sel_delta(
            np.asarray(gammas, dtype=float), self.w_nodes, self.w_wfw2,
            self.knots_s, s_coefs, self.d, self.t_m, self.quad.half,
            self.hscale, self.gl_x, self.gl_w, self.splits_s, backend=backend)
        return raw / (self.t_m * self.e_w)

    def criterion(self, s_coefs, xi):
        s_vals = _kernels._pp_eval_np(self.knots_s, s_coefs, self.crit_x)
        integrand = (s_vals - self.t_m) * (xi + self.crit_lemma)
        return 2.0 / (self.t_m * self.e_w) * float(np.dot(self.crit_w, integrand))

    def gamma_max(self):
        """gamma beyond which the family's corrections are exactly zero."""
        return self.d * self.w_hi + self.quad.half


@lru_cache(maxsize=64)
def _cached_engine(m, d, t_m, knots_b, knots_s, quad):
    return _Engine(m, d, t_m, np.asarray(knots_b), np.asarray(knots_s), quad)


def _engine(family: IntervalFamily, quad: QuadSettings) -> _Engine:
    return _cached_engine(family.m, family.d, family.t_m,
                          tuple(family.knots_b), tuple(family.knots_s), quad)


def coverage(gamma, family: IntervalFamily, rho: float,
             quad: QuadSettings = DEFAULT_QUAD, backend=None) -> float:
    """P(theta in interval) at standardized mismatch gamma, |rho| < 1."""
    if not abs(rho) < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    eng = _engine(family, quad)
    delta = eng.coverage_delta([gamma], family.b_coefs, family.s_coefs, rho,
                               backend=backend)
    return 1.0 - family.alpha + float(delta[0])


def coverage_grid(gammas, family: IntervalFamily, rho: float,
                  quad: QuadSettings = DEFAULT_QUAD, backend=None) -> np.ndarray:
    if not abs(rho) < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    eng = _engine(family, quad)
    delta = eng.coverage_delta(gammas, family.b_coefs, family.s_coefs, rho,
                               backend=backend)
    return 1.0 - family.alpha + delta


def scaled_length(gamma, family: IntervalFamily,
                  quad: QuadSettings = DEFAULT_QUAD, backend=None) -> float:
    """E(length of family interval) / E(length of standard interval)."""
    eng = _engine(family, quad)
    return 1.0 + float(eng.sel_delta([gamma], family.s_coefs, backend=backend)[0])


def scaled_length_grid(gammas, family: IntervalFamily,
                       quad: QuadSettings = DEFAULT_QUAD, backend=None) -> np.ndarray:
    eng = _engine(family, quad)
    return 1.0 + eng.sel_delta(gammas, family.s_coefs, backend=backend)


def length_criterion(family: IntervalFamily, xi: float,
                     quad: QuadSettings = DEFAULT_QUAD) -> float:
    """xi * integral(sel - 1) d gamma + (sel(0) - 1), in closed form.

    Integrating the Gaussian factors out of the length correction leaves a
    single x-integral of (s - t_m) against xi + E[phi(xW) W^2]; see
    ``special.phi_w2_mean``.
    """
    if xi < 0:
        raise ValueError(f"xi must be >= 0, got {xi}")
    eng = _engine(family, quad)
    return eng.criterion(family.s_coefs, xi)


def _gamma_rule(eng: _Engine, inner_step=2.0, outer_step=8.0):
    """Panel rule over [0, gamma_max] for integrals of sel(gamma) - 1."""
    from .special import gauss_legendre_panels

    gmax = eng.gamma_max()
    split = min(eng.d + 10.0, gmax)
    inner = gauss_legendre_panels(0.0, split, max(1, int(np.ceil(split / inner_step))), 12)
    if gmax > split + 1e-9:
        outer = gauss_legendre_panels(split, gmax, max(1, int(np.ceil((gmax - split) / outer_step))), 12)
        nodes = np.concatenate((inner.nodes, outer.nodes))
        weights = np.concatenate((inner.weights, outer.weights))
    else:
        nodes, weights = inner.nodes, inner.weights
    return nodes, weights


def integrated_excess_length(family: IntervalFamily,
                             quad: QuadSettings = DEFAULT_QUAD) -> float:
    """integral over the whole real line of (sel(gamma) - 1) d gamma."""
    eng = _engine(family, quad)
    nodes, weights = _gamma_rule(eng)
    return 2.0 * float(np.dot(weights, eng.sel_delta(nodes, family.s_coefs)))


def length_criterion_gaussian(family: IntervalFamily, xi: float, v: float,
                              quad: QuadSettings = DEFAULT_QUAD) -> float:
    """Variant criterion: xi * integral(sel-1) + integral (sel-1) N(0, v^2) density."""
    if v <= 0:
        raise ValueError(f"v must be > 0, got {v}")
    from .special import gauss_legendre_panels

    eng = _engine(family, quad)
    term1 = xi * integrated_excess_length(family, quad) if xi != 0.0 else 0.0
    hi = min(quad.half * v, eng.gamma_max())
    rule = gauss_legendre_panels(0.0, hi, 24, 12)
    dens = np.exp(-0.5 * (rule.nodes / v) ** 2) / (v * np.sqrt(2 * np.pi))
    excess = eng.sel_delta(rule.nodes, family.s_coefs)
    return term1 + 2.0 * float(np.dot(rule.weights, excess * dens))


def _golden_min(f, a, b, tol=1e-6, maxit=80):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d_ = a + invphi * (b - a)
    fc, fd = f(c), f(d_)
    for _ in range(maxit):
        if b - a < tol:
            break
        if fc < fd:
            b, d_, fd = d_, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d_, fd
            d_ = a + invphi * (b - a)
            fd = f(d_)
    x = c if fc < fd else d_
    return x, min(fc, fd)


class MinCoverage(NamedTuple):
    gamma: float
    coverage: float
    tail_bound: float  # envelope on |coverage - (1-alpha)| beyond the grid end


class MaxScaledLength(NamedTuple):
    gamma: float
    value: float


def tail_envelope(gamma: float, m: int, d: float,
                  quad: QuadSettings = DEFAULT_QUAD) -> float:
    """Bound on |coverage - (1-alpha)|: P(|H| < d W) mass still inside the cut-off."""
    rule = scaled_chi_rule(m, quad.eps, quad.w_panels, quad.w_order)
    fw = scaled_chi_pdf(rule.nodes, m)
    mass = normal_cdf(d * rule.nodes - gamma) - normal_cdf(-d * rule.nodes - gamma)
    return float(np.dot(rule.weights * fw, mass))


def min_coverage(family: IntervalFamily, rho: float,
                 quad: QuadSettings = DEFAULT_QUAD, gamma_grid=None,
                 refine: bool = True) -> MinCoverage:
    """Grid scan (+ golden-section polish) for the minimum coverage over gamma."""
    if gamma_grid is None:
        gamma_grid = np.arange(0.0, family.d + 10.0 + 1e-9, 0.25)
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    cov = coverage_grid(gamma_grid, family, rho, quad)
    i = int(np.argmin(cov))
    best_g, best_c = float(gamma_grid[i]), float(cov[i])
    if refine and len(gamma_grid) > 2:
        lo = gamma_grid[max(i - 1, 0)]
        hi = gamma_grid[min(i + 1, len(gamma_grid) - 1)]
        if hi > lo:
            g, c = _golden_min(lambda t: coverage(t, family, rho, quad), lo, hi,
                               tol=1e-4 * (hi - lo))
            if c < best_c:
                best_g, best_c = float(g), float(c)
    bound = tail_envelope(float(gamma_grid[-1]), family.m, family.d, quad)
    return MinCoverage(best_g, best_c, bound)


def max_scaled_length(family: IntervalFamily, quad: QuadSettings = DEFAULT_QUAD,
                      gamma_max=None, step: float = 0.5) -> MaxScaledLength:
    """Grid scan + golden-section refinement of sel over [0, gamma_max]."""
    if gamma_max is None:
        gamma_max = family.d + 10.0
    if gamma_max <= family.d:
        raise ValueError("gamma_max must exceed the cut-off d")
    grid = np.arange(0.0, gamma_max + 1e-9, step)
    sel = scaled_length_grid(grid, family, quad)
    i = int(np.argmax(sel))
    best_g, best_v = float(grid[i]), float(sel[i])
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        g, negv = _golden_min(lambda t: -scaled_length(t, family, quad), lo, hi,
                              tol=1e-4 * (hi - lo))
        if -negv > best_v:
            best_g, best_v = float(g), float(-negv)
    return MaxScaledLength(best_g, best_v)


@dataclass(frozen=True)
class PerformanceCurve:
    gamma_grid: np.ndarray
    coverage: np.ndarray
    sel: np.ndarray
    sel_squared: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("gamma,coverage,sel,sel_squared\n")
            for row in zip(self.gamma_grid, self.coverage, self.sel, self.sel_squared):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def performance_curves(family: IntervalFamily, rho: float, gamma_grid,
                       quad: QuadSettings = DEFAULT_QUAD) -> PerformanceCurve:
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    if len(gamma_grid) == 0 or np.any(np.diff(gamma_grid) <= 0) or gamma_grid[0] < 0:
        raise ValueError("gamma_grid must be increasing and >= 0")
    cov = coverage_grid(gamma_grid, family, rho, quad)
    sel = scaled_length_grid(gamma_grid, family, quad)
    return PerformanceCurve(gamma_grid, cov, sel, sel * sel)
