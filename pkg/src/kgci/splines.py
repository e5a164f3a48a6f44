"""Interval families: the (b, s) function pair that defines the adaptive interval.

Both functions are natural cubic splines on [0, d].  ``b`` is extended to an
odd function of x with ``b(x) = 0`` for |x| >= d; ``s`` is constant at the
reference t quantile ``t_m`` for x >= d.  Those tails make the interval
revert to the standard one when the pre-test statistic is large.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import KnotOrderError, NonPositiveS
from .special import t_quantile

SHAPE_GRID_POINTS = 2048


def _natural_coefs(knots: np.ndarray, values: np.ndarray) -> np.ndarray:
    """(4, nseg) natural-cubic coefficients, highest degree first."""
    if len(knots) == 2:
        # CubicSpline needs >= 3 points; two knots with zero end curvature
        # is the straight line through them.
        slope = (values[1] - values[0]) / (knots[1] - knots[0])
        return np.array([[0.0], [0.0], [slope], [values[0]]])
    return CubicSpline(knots, values, bc_type="natural").c.copy()


def _ppoly_eval(breaks: np.ndarray, coefs: np.ndarray, x: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(breaks, x, side="right") - 1, 0, coefs.shape[1] - 1)
    dx = x - breaks[idx]
    return ((coefs[0, idx] * dx + coefs[1, idx]) * dx + coefs[2, idx]) * dx + coefs[3, idx]


@dataclass(frozen=True, eq=False)
class IntervalFamily:
    """Immutable (b, s) pair; evaluation is pure and thread-safe."""

    d: float
    m: int
    alpha: float
    t_m: float
    knots_b: np.ndarray
    values_b: np.ndarray  # b at interior knots; b(0) = b(d) = 0 are forced
    knots_s: np.ndarray
    values_s: np.ndarray  # s at knots except the last; s(d) = t_m is forced
    b_coefs: np.ndarray = field(repr=False)
    s_coefs: np.ndarray = field(repr=False)

    def eval_b(self, x):
        """Odd extension of the b spline; 0 for |x| >= d."""
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        inner = _ppoly_eval(self.knots_b, self.b_coefs, np.minimum(ax, self.d))
        out = np.where(ax < self.d, np.sign(x) * inner, 0.0)
        return float(out) if out.ndim == 0 else out

    def eval_s(self, x):
        """Half-width spline on [0, d]; t_m for x >= d."""
        x = np.asarray(x, dtype=float)
        inner = _ppoly_eval(self.knots_s, self.s_coefs, np.minimum(x, self.d))
        out = np.where(x < self.d, inner, self.t_m)
        return float(out) if out.ndim == 0 else out

    @property
    def is_reverted(self) -> bool:
        """True when b = 0 and s = t_m identically (the standard interval)."""
        return not np.any(self.values_b) and bool(np.all(self.values_s == self.t_m))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "alpha": self.alpha,
            "knots_b": self.knots_b.tolist(),
            "values_b": self.values_b.tolist(),
            "knots_s": self.knots_s.tolist(),
            "values_s": self.values_s.tolist(),
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _check_knots(knots: np.ndarray, d: float, name: str) -> None:
    if knots.ndim != 1 or len(knots) < 2:
        raise KnotOrderError(f"{name}: need at least 2 knots, got {knots!r}")
    if not np.all(np.isfinite(knots)):
        raise KnotOrderError(f"{name}: knots must be finite")
    if np.any(np.diff(knots) <= 0):
        raise KnotOrderError(f"{name}: knots must be strictly increasing")
    if knots[0] != 0.0 or knots[-1] != d:
        raise KnotOrderError(f"{name}: knots must span [0, {d}], got [{knots[0]}, {knots[-1]}]")


def build_family(d, m, alpha, knots_b, values_b, knots_s, values_s) -> IntervalFamily:
    """Build the natural-cubic-spline family with forced endpoint values.

    ``values_b`` holds b at the interior knots of ``knots_b`` (endpoints are
    pinned to 0); ``values_s`` holds s at all knots except the last, where
    s(d) = t_m is pinned.  Raises NonPositiveS if the s spline dips to <= 0
    anywhere on the shape-check grid.
    """
    if d <= 0:
        raise ValueError(f"d must be positive, got {d}")
    knots_b = np.asarray(knots_b, dtype=float)
    knots_s = np.asarray(knots_s, dtype=float)
    _check_knots(knots_b, d, "knots_b")
    _check_knots(knots_s, d, "knots_s")
    values_b = np.asarray(values_b, dtype=float)
    values_s = np.asarray(values_s, dtype=float)
    if values_b.shape != (len(knots_b) - 2,):
        raise ValueError(f"values_b must have length {len(knots_b) - 2} (interior knots)")
    if values_s.shape != (len(knots_s) - 1,):
        raise ValueError(f"values_s must have length {len(knots_s) - 1} (all knots but x=d)")
    if not (np.all(np.isfinite(values_b)) and np.all(np.isfinite(values_s))):
        raise ValueError("spline values must be finite")

    t_m = t_quantile(int(m), float(alpha))
    full_b = np.concatenate(([0.0], values_b, [0.0]))
    full_s = np.concatenate((values_s, [t_m]))
    family = IntervalFamily(
        d=float(d),
        m=int(m),
        alpha=float(alpha),
        t_m=t_m,
        knots_b=knots_b,
        values_b=values_b,
        knots_s=knots_s,
        values_s=values_s,
        b_coefs=_natural_coefs(knots_b, full_b),
        s_coefs=_natural_coefs(knots_s, full_s),
    )
    grid = np.linspace(0.0, d, SHAPE_GRID_POINTS)
    if np.min(family.eval_s(grid)) <= 0.0:
        raise NonPositiveS("s spline dips to <= 0 on [0, d]")
    return family


def reverted_family(d, m, alpha, knots_b=None, knots_s=None) -> IntervalFamily:
    """The family with b = 0 and s = t_m: the interval equals the standard one."""
    if knots_b is None:
        knots_b = [0.0, d]
    if knots_s is None:
        knots_s = [0.0, d]
    t_m = t_quantile(int(m), float(alpha))
    return build_family(
        d, m, alpha,
        knots_b, np.zeros(len(knots_b) - 2),
        knots_s, np.full(len(knots_s) - 1, t_m),
    )


def load_family(path) -> IntervalFamily:
    with open(path) as fh:
        data = json.load(fh)
    return build_family(
        data["d"], data["m"], data["alpha"],
        data["knots_b"], data["values_b"], data["knots_s"], data["values_s"],
    )


def family_curve_csv(family: IntervalFamily, path, points: int = 512) -> None:
    """CSV with columns x, b(x), s(x) on a uniform grid over [0, d]."""
    x = np.linspace(0.0, family.d, points)
    b = family.eval_b(x)
    s = family.eval_s(x)
    with open(path, "w") as fh:
        fh.write("x,b,s\n")
        for row in zip(x, b, s):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _rise_after_fall(vals: np.ndarray, tol: float) -> float:
    """Total strict rise occurring after any strict fall (0 for unimodal)."""
    viol = 0.0
    falling = False
    for diff in np.diff(vals):
        if diff < -tol:
            falling = True
        elif diff > tol and falling:
            viol += diff
    return viol


@dataclass(frozen=True)
class ShapeReport:
    s_unimodal: bool
    b_unimodal_on_0d: bool
    s_positive: bool
    max_violation: float


def shape_report(family: IntervalFamily, grid_points: int = SHAPE_GRID_POINTS) -> ShapeReport:
    """Grid check of the shape restrictions used by the optimizer.

    Monotone or constant functions count as unimodal.  ``b`` may be
    single-peaked or single-troughed (it can be negative); ``s`` must be
    single-peaked.  ``max_violation`` is the largest total back-tracking
    seen, 0.0 when every check passes.
    """
    if grid_points < 100:
        raise ValueError("grid_points must be >= 100")
    grid = np.linspace(0.0, family.d, grid_points)
    s_vals = family.eval_s(grid)
    b_vals = family.eval_b(grid)

    s_tol = 1e-12 * max(1.0, np.max(np.abs(s_vals)))
    b_tol = 1e-12 * max(1.0, np.max(np.abs(b_vals)))
    s_viol = _rise_after_fall(s_vals, s_tol)
    b_viol = min(_rise_after_fall(b_vals, b_tol), _rise_after_fall(-b_vals, b_tol))
    s_min = float(np.min(s_vals))
    positive = s_min > 0.0

    return ShapeReport(
        s_unimodal=s_viol <= s_tol,
        b_unimodal_on_0d=b_viol <= b_tol,
        s_positive=positive,
        max_violation=float(max(s_viol, b_viol, -s_min if not positive else 0.0)),
    )
