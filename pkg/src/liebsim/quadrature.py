"""Quadrature routines shared by the kernel and chain modules.

Two families live here:

* ``adaptive_simpson`` for vectorised integrands known analytically (presets),
  split at user-supplied breakpoints so kinks never sit inside a panel.
* composite Gauss-Legendre rules (uniform or graded toward the endpoints)
  for vectorised integrands and for discretising measures.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    pass


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50, max_panels=4_000_000):
    """Integrate ``f`` over ``[a, b]`` with adaptive Simpson refinement.

    ``f`` must be vectorised. Panels are refined breadth-first: every level
    evaluates all unresolved panels in one call. ``tol`` is an absolute
    tolerance on the whole interval, halved at each bisection. The
    integrand may be complex valued.
    """
    if a == b:
        return 0.0
    if not (math.isfinite(a) and math.isfinite(b)):
        raise QuadratureError("adaptive_simpson needs finite limits")
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    # start from a few panels so a lucky coarse agreement cannot end the search
    edges = np.linspace(a, b, 9)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    vals = f(np.concatenate([lo, mid, hi]))
    flo, fmid, fhi = np.split(np.asarray(vals), 3)
    whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
    ptol = np.full(lo.shape, tol / lo.size)
    total = 0.0
    for _ in range(max_depth):
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        fl, fr = np.split(np.asarray(f(np.concatenate([lm, rm]))), 2)
        left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi)
        delta = left + right - whole
        done = np.abs(delta) <= 15.0 * ptol
        total += np.sum((left + right + delta / 15.0)[done])
        keep = ~done
        if not np.any(keep):
            break
        if 2 * np.count_nonzero(keep) > max_panels:
            raise QuadratureError("adaptive_simpson exceeded its panel budget")
        lo, mid, hi = lo[keep], mid[keep], hi[keep]
        flo, fmid, fhi = flo[keep], fmid[keep], fhi[keep]
        lm, rm, fl, fr = lm[keep], rm[keep], fl[keep], fr[keep]
        left, right, ptol = left[keep], right[keep], 0.5 * ptol[keep]
        lo, mid, hi = np.concatenate([lo, mid]), np.concatenate([lm, rm]), np.concatenate([mid, hi])
        flo, fmid, fhi = np.concatenate([flo, fmid]), np.concatenate([fl, fr]), np.concatenate([fmid, fhi])
        whole = np.concatenate([left, right])
        ptol = np.concatenate([ptol, ptol])
    else:
        # depth exhausted: accept the Richardson-corrected estimate
        total += np.sum(whole)
    if not np.isfinite(total):
        raise QuadratureError("non-finite quadrature result")
    return sign * total


def integrate(f, a, b, breakpoints=(), tol=1e-10):
    """Adaptive Simpson over ``[a, b]`` split at the breakpoints inside it."""
    if b <= a:
        return 0.0
    cuts = sorted(p for p in breakpoints if a < p < b)
    edges = [a, *cuts, b]
    n = len(edges) - 1
    return sum(adaptive_simpson(f, lo, hi, tol / n) for lo, hi in zip(edges[:-1], edges[1:]))


@lru_cache(maxsize=64)
def gauss_legendre(n):
    """Nodes and weights of the ``n``-point rule on ``[-1, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_gauss_legendre(edges, n=16):
    """Nodes and weights for the composite ``n``-point rule on consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(n)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def graded_edges(a, b, panels, levels=24, ratio=0.15):
    """Uniform panel edges on ``[a, b]`` with geometric refinement at both ends.

    The refinement resolves algebraic endpoint singularities such as the
    square-root edge of a semicircle density.
    """
    core = np.linspace(a, b, panels + 1)
    h = core[1] - core[0]
    left = [a + h * ratio**k for k in range(1, levels + 1)]
    right = [b - h * ratio**k for k in range(1, levels + 1)]
    return np.unique(np.concatenate([core, left, right]))


def panel_rule(a, b, panels=64, n=32, graded=True):
    if graded:
        edges = graded_edges(a, b, panels)
    else:
        edges = np.linspace(a, b, panels + 1)
    return composite_gauss_legendre(edges, n)


def split_rule(lo, hi, cuts, n=16, panels=4):
    """Vectorised composite rule on rows ``[lo_i, hi_i]`` split at ``cuts``.

    Returns node and weight arrays of shape ``(len(lo), m)``. Cut points are
    inserted per row so that integrands with kinks at fixed locations keep
    full Gauss-Legendre order; rows not containing a cut get zero-weight
    padding in the unused slots.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    cuts = np.sort(np.asarray(list(cuts), dtype=float))
    # per-row edge list: lo, clipped cuts, hi -> segments of possibly zero length
    inner = np.clip(cuts[None, :], lo[:, None], hi[:, None]) if cuts.size else np.empty((lo.size, 0))
    edges = np.concatenate([lo[:, None], inner, hi[:, None]], axis=1)
    x, w = gauss_legendre(n)
    t = (np.arange(panels + 1) / panels)
    nodes, weights = [], []
    for k in range(edges.shape[1] - 1):
        a, b = edges[:, k:k + 1], edges[:, k + 1:k + 2]
        sub = a + (b - a) * t[None, :]
        sa, sb = sub[:, :-1, None], sub[:, 1:, None]
        half = 0.5 * (sb - sa)
        nodes.append(((sa + sb) * 0.5 + half * x).reshape(lo.size, -1))
        weights.append((half * w).reshape(lo.size, -1))
    return np.concatenate(nodes, axis=1), np.concatenate(weights, axis=1)
