"""Quadrature inner loops for coverage and scaled-expected-length.

Both quantities are computed as *corrections* to the reverted interval, whose
coverage is exactly 1 - alpha and whose scaled length is exactly 1:

  coverage(g) - (1-a) = int_w int_x D(w, x, g) phi(w x - g) w f_W(w) dx dw
  (sel(g) - 1) * t_m E(W) = int_w int_x (s(x) - t_m)
                              (phi(w x - g) + phi(w x + g)) w^2 f_W(w) dx dw

with x restricted to (-d, d) resp. (0, d) where the family differs from the
reverted one, and D the difference of conditional-normal interval
probabilities between the family and the reverted interval:

  D = Phi((w(b+s) - r u)/q) - Phi((w(b-s) - r u)/q)
      - Phi((w t_m - r u)/q) + Phi((-w t_m - r u)/q),
  u = w x - g,  q = sqrt(1 - r^2).

The inner x-integral is split at spline knots and at the window edges
(g +- half)/w, then subdivided so no piece exceeds ``hscale`` in h = w*x
units, which keeps the Gaussian factor resolved at every w.

Two implementations with identical node sets: numba (default) and numpy
(``KGCI_BACKEND=numpy``).  Results agree to floating-point roundoff.
"""

import math

import numpy as np

from ._backend import BACKEND

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
SQRT1_2 = math.sqrt(0.5)

# ---------------------------------------------------------------------------
# numpy implementation
# ---------------------------------------------------------------------------


def _pp_eval_np(breaks, coefs, x):
    idx = np.clip(np.searchsorted(breaks, x, side="right") - 1, 0, coefs.shape[1] - 1)
    dx = x - breaks[idx]
    return ((coefs[0, idx] * dx + coefs[1, idx]) * dx + coefs[2, idx]) * dx + coefs[3, idx]


def _phi_np(u):
    return INV_SQRT_2PI * np.exp(-0.5 * u * u)


def _Phi_np(z):
    from scipy.special import erfc

    return 0.5 * erfc(-z * SQRT1_2)


def _window_nodes(lo, hi, w, splits, hscale, gl_x, gl_w):
    """GL nodes/weights on [lo, hi] split at `splits` with h-resolved pieces."""
    inside = splits[(splits > lo) & (splits < hi)]
    edges = np.concatenate(([lo], inside, [hi]))
    widths = np.diff(edges)
    npieces = np.floor(widths * w / hscale).astype(np.int64) + 1
    starts = np.repeat(edges[:-1], npieces)
    pw = np.repeat(widths / npieces, npieces)
    offs = np.concatenate([np.arange(n) for n in npieces])
    half_pw = 0.5 * pw
    centers = starts + (offs + 0.5) * pw
    nodes = (centers[:, None] + half_pw[:, None] * gl_x[None, :]).ravel()
    weights = (half_pw[:, None] * gl_w[None, :]).ravel()
    return nodes, weights


def _coverage_delta_np(gammas, w_nodes, w_wfw, b_breaks, b_coefs, s_breaks, s_coefs,
                       d, t_m, rho, half, hscale, gl_x, gl_w, splits):
    out = np.zeros(len(gammas))
    rr = math.sqrt(1.0 - rho * rho)
    neg = np.concatenate((-splits[::-1], [0.0], splits))
    for ig, g in enumerate(np.asarray(gammas, dtype=float)):
        xs, wts, wid = [], [], []
        for k, w in enumerate(w_nodes):
            lo = max((g - half) / w, -d)
            hi = min((g + half) / w, d)
            if lo >= hi:
                continue
            nodes, weights = _window_nodes(lo, hi, w, neg, hscale, gl_x, gl_w)
            xs.append(nodes)
            wts.append(weights)
            wid.append(np.full(len(nodes), k, dtype=np.int64))
        if not xs:
            continue
        x = np.concatenate(xs)
        wt = np.concatenate(wts)
        kk = np.concatenate(wid)
        w = w_nodes[kk]
        ax = np.abs(x)
        bx = np.sign(x) * _pp_eval_np(b_breaks, b_coefs, ax)
        sx = _pp_eval_np(s_breaks, s_coefs, ax)
        u = w * x - g
        if rho == 0.0:
            delta = (_Phi_np(w * (bx + sx)) - _Phi_np(w * (bx - sx))
                     - 2.0 * _Phi_np(w * t_m) + 1.0)
        else:
            ru = rho * u
            delta = (_Phi_np((w * (bx + sx) - ru) / rr) - _Phi_np((w * (bx - sx) - ru) / rr)
                     - _Phi_np((w * t_m - ru) / rr) + _Phi_np((-w * t_m - ru) / rr))
        out[ig] = np.sum(wt * delta * _phi_np(u) * w_wfw[kk])
    return out


def _sel_delta_np(gammas, w_nodes, w_wfw2, s_breaks, s_coefs,
                  d, t_m, half, hscale, gl_x, gl_w, splits):
    out = np.zeros(len(gammas))
    for ig, gamma in enumerate(np.asarray(gammas, dtype=float)):
        g = abs(gamma)
        xs, wts, wid = [], [], []
        for k, w in enumerate(w_nodes):
            lo = max((g - half) / w, 0.0)
            hi = min((g + half) / w, d)
            if lo >= hi:
                continue
            nodes, weights = _window_nodes(lo, hi, w, splits, hscale, gl_x, gl_w)
            xs.append(nodes)
            wts.append(weights)
            wid.append(np.full(len(nodes), k, dtype=np.int64))
        if not xs:
            continue
        x = np.concatenate(xs)
        wt = np.concatenate(wts)
        kk = np.concatenate(wid)
        w = w_nodes[kk]
        sx = _pp_eval_np(s_breaks, s_coefs, x)
        out[ig] = np.sum(wt * (sx - t_m) * (_phi_np(w * x - g) + _phi_np(w * x + g))
                         * w_wfw2[kk])
    return out


# ---------------------------------------------------------------------------
# numba implementation
# ---------------------------------------------------------------------------

if BACKEND == "numba":
    from numba import njit, prange

    @njit(cache=True, inline="always")
    def _pp_eval(breaks, coefs, x):
        n = coefs.shape[1]
        i = 0
        while i < n - 1 and x >= breaks[i + 1]:
            i += 1
        dx = x - breaks[i]
        return ((coefs[0, i] * dx + coefs[1, i]) * dx + coefs[2, i]) * dx + coefs[3, i]

    @njit(cache=True, inline="always")
    def _phi(u):
        return INV_SQRT_2PI * math.exp(-0.5 * u * u)

    @njit(cache=True, inline="always")
    def _Phi(z):
        return 0.5 * math.erfc(-z * SQRT1_2)

    @njit(cache=True, inline="always")
    def _breakpoints(lo, hi, splits, buf):
        nb = 0
        buf[nb] = lo
        nb += 1
        ns = splits.shape[0]
        for j in range(ns - 1, -1, -1):
            v = -splits[j]
            if lo < v < hi:
                buf[nb] = v
                nb += 1
        if lo < 0.0 < hi:
            buf[nb] = 0.0
            nb += 1
        for j in range(ns):
            v = splits[j]
            if lo < v < hi:
                buf[nb] = v
                nb += 1
        buf[nb] = hi
        nb += 1
        return nb

    @njit(cache=True, parallel=True)
    def _coverage_delta_nb(gammas, w_nodes, w_wfw, b_breaks, b_coefs, s_breaks, s_coefs,
                           d, t_m, rho, half, hscale, gl_x, gl_w, splits):
        ng = gammas.shape[0]
        out = np.zeros(ng)
        nw = w_nodes.shape[0]
        order = gl_x.shape[0]
        rr = math.sqrt(1.0 - rho * rho)
        for ig in prange(ng):
            g = gammas[ig]
            buf = np.empty(2 * splits.shape[0] + 3)
            acc_g = 0.0
            for k in range(nw):
                w = w_nodes[k]
                lo = (g - half) / w
                hi = (g + half) / w
                if lo < -d:
                    lo = -d
                if hi > d:
                    hi = d
                if lo >= hi:
                    continue
                nb = _breakpoints(lo, hi, splits, buf)
                kdag = 2.0 * _Phi(w * t_m) - 1.0
                acc_w = 0.0
                for seg in range(nb - 1):
                    a1 = buf[seg]
                    b1 = buf[seg + 1]
                    width = b1 - a1
                    npiece = int(width * w / hscale) + 1
                    pw = width / npiece
                    h2 = 0.5 * pw
                    for p in range(npiece):
                        c = a1 + (p + 0.5) * pw
                        for q in range(order):
                            x = c + h2 * gl_x[q]
                            ax = abs(x)
                            bx = _pp_eval(b_breaks, b_coefs, ax)
                            if x < 0.0:
                                bx = -bx
                            sx = _pp_eval(s_breaks, s_coefs, ax)
                            u = w * x - g
                            if rho == 0.0:
                                delta = _Phi(w * (bx + sx)) - _Phi(w * (bx - sx)) - kdag
                            else:
                                ru = rho * u
                                delta = (_Phi((w * (bx + sx) - ru) / rr)
                                         - _Phi((w * (bx - sx) - ru) / rr)
                                         - _Phi((w * t_m - ru) / rr)
                                         + _Phi((-w * t_m - ru) / rr))
                            acc_w += gl_w[q] * h2 * delta * _phi(u)
                acc_g += w_wfw[k] * acc_w
            out[ig] = acc_g
        return out

    @njit(cache=True, parallel=True)
    def _sel_delta_nb(gammas, w_nodes, w_wfw2, s_breaks, s_coefs,
                      d, t_m, half, hscale, gl_x, gl_w, splits):
        ng = gammas.shape[0]
        out = np.zeros(ng)
        nw = w_nodes.shape[0]
        order = gl_x.shape[0]
        for ig in prange(ng):
            g = abs(gammas[ig])
            buf = np.empty(splits.shape[0] + 2)
            acc_g = 0.0
            for k in range(nw):
                w = w_nodes[k]
                lo = (g - half) / w
                hi = (g + half) / w
                if lo < 0.0:
                    lo = 0.0
                if hi > d:
                    hi = d
                if lo >= hi:
                    continue
                nb = 0
                buf[nb] = lo
                nb += 1
                for j in range(splits.shape[0]):
                    v = splits[j]
                    if lo < v < hi:
                        buf[nb] = v
                        nb += 1
                buf[nb] = hi
                nb += 1
                acc_w = 0.0
                for seg in range(nb - 1):
                    a1 = buf[seg]
                    b1 = buf[seg + 1]
                    width = b1 - a1
                    npiece = int(width * w / hscale) + 1
                    pw = width / npiece
                    h2 = 0.5 * pw
                    for p in range(npiece):
                        c = a1 + (p + 0.5) * pw
                        for q in range(order):
                            x = c + h2 * gl_x[q]
                            sx = _pp_eval(s_breaks, s_coefs, x)
                            u = w * x
                            acc_w += (gl_w[q] * h2 * (sx - t_m)
                                      * (_phi(u - g) + _phi(u + g)))
                acc_g += w_wfw2[k] * acc_w
            out[ig] = acc_g
        return out


def coverage_delta(gammas, w_nodes, w_wfw, b_breaks, b_coefs, s_breaks, s_coefs,
                   d, t_m, rho, half, hscale, gl_x, gl_w, splits, backend=None):
    """coverage(gamma) - (1 - alpha) for each gamma, via nested quadrature."""
    impl = backend or BACKEND
    if impl == "numba":
        return _coverage_delta_nb(gammas, w_nodes, w_wfw, b_breaks, b_coefs,
                                  s_breaks, s_coefs, d, t_m, rho, half, hscale,
                                  gl_x, gl_w, splits)
    return _coverage_delta_np(gammas, w_nodes, w_wfw, b_breaks, b_coefs,
                              s_breaks, s_coefs, d, t_m, rho, half, hscale,
                              gl_x, gl_w, splits)


def sel_delta(gammas, w_nodes, w_wfw2, s_breaks, s_coefs,
              d, t_m, half, hscale, gl_x, gl_w, splits, backend=None):
    """(sel(gamma) - 1) * t_m * E(W) for each gamma (unnormalized correction)."""
    impl = backend or BACKEND
    if impl == "numba":
        return _sel_delta_nb(gammas, w_nodes, w_wfw2, s_breaks, s_coefs,
                             d, t_m, half, hscale, gl_x, gl_w, splits)
    return _sel_delta_np(gammas, w_nodes, w_wfw2, s_breaks, s_coefs,
                         d, t_m, half, hscale, gl_x, gl_w, splits)
