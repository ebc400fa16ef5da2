"""Memory kernels: continuous part plus weighted Dirac atoms.

A kernel is ``K(tau) = K_c(tau) + sum_j k_j delta(tau - T_j)``. The
continuous part is either an analytic preset or a uniformly sampled grid
with linear interpolation. Everything here is immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import linprog

from .quadrature import QuadratureError, adaptive_simpson, composite_gauss_legendre, integrate, split_rule

QUAD_TOL = 1e-10
TRUNCATION = 1e-14  # presets are cut where the envelope drops below this fraction of the peak
MERGE_TOL = 1e-12
MAX_GRID_POINTS = 1 << 21


class KernelError(ValueError):
    pass


class DivergentKernelError(KernelError):
    pass


# --------------------------------------------------------------------------
# continuous parts


class ContinuousPart:
    """Complex-valued function of the lag with compact (truncated) support."""

    kind = "abstract"
    breakpoints: tuple = ()

    @property
    def support(self):
        raise NotImplementedError

    def __call__(self, tau):
        raise NotImplementedError

    def is_zero(self):
        return False

    def abs_integral(self, a=-math.inf, b=math.inf, tol=QUAD_TOL):
        lo, hi = self.support
        a, b = max(a, lo), min(b, hi)
        if b <= a or self.is_zero():
            return 0.0
        return self._integrate(lambda x: abs(self(x)), a, b, (), tol).real

    def integrate_against(self, g, a=-math.inf, b=math.inf, breaks=(), tol=QUAD_TOL):
        """``int K_c(tau) g(tau) dtau`` over ``[a, b]`` intersected with the support."""
        lo, hi = self.support
        a, b = max(a, lo), min(b, hi)
        if b <= a or self.is_zero():
            return 0j
        return self._integrate(lambda x: self(x) * g(x), a, b, breaks, tol)

    def _integrate(self, fn, a, b, breaks, tol):
        pts = [*self.breakpoints, *breaks]
        try:
            val = integrate(fn, a, b, pts, tol)
        except QuadratureError as exc:
            raise DivergentKernelError(str(exc)) from exc
        if not np.isfinite(val):
            raise DivergentKernelError("kernel integral is not finite")
        return val

    def sample(self, step):
        lo, hi = self.support
        n = int(math.ceil((hi - lo) / step)) + 1
        if n > MAX_GRID_POINTS:
            raise KernelError(f"sampling would need {n} grid points")
        if n < 2:
            return GridPart(lo, step, np.zeros(2, dtype=complex))
        t = lo + step * np.arange(n)
        return GridPart(lo, step, self(t))

    def to_dict(self):
        raise NotImplementedError


class ZeroPart(ContinuousPart):
    kind = "zero"

    @property
    def support(self):
        return (0.0, 0.0)

    def __call__(self, tau):
        return np.zeros(np.shape(tau), dtype=complex)

    def is_zero(self):
        return True

    def to_dict(self):
        return {"preset": "zero", "params": {}}


@dataclass(frozen=True)
class ExponentialPart(ContinuousPart):
    """``amplitude * exp(-gamma |tau|)``; amplitude defaults to ``gamma / 2``."""

    gamma: float
    amplitude: complex | None = None
    kind = "exponential"
    breakpoints = (0.0,)

    def __post_init__(self):
        if not self.gamma > 0:
            raise KernelError("exponential preset needs gamma > 0")
        if self.amplitude is None:
            object.__setattr__(self, "amplitude", self.gamma / 2)

    @property
    def radius(self):
        return math.log(1 / TRUNCATION) / self.gamma

    @property
    def support(self):
        return (-self.radius, self.radius)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = self.amplitude * np.exp(-self.gamma * np.abs(tau))
        return np.where(np.abs(tau) <= self.radius, out, 0).astype(complex)

    def to_dict(self):
        amp = complex(self.amplitude)
        return {"preset": "exponential",
                "params": {"gamma": self.gamma, "amplitude_re": amp.real, "amplitude_im": amp.imag}}


@dataclass(frozen=True)
class OhmicPart(ContinuousPart):
    """Zero-temperature Ohmic bath with exponential cutoff.

    ``V(tau) = alpha wc^2 / (1 + i wc tau)^2``, the inverse transform of the
    spectral density ``2 pi alpha w exp(-w / wc)`` for ``w > 0``.
    """

    alpha: float
    cutoff: float
    kind = "ohmic"

    def __post_init__(self):
        if not (self.alpha > 0 and self.cutoff > 0):
            raise KernelError("ohmic preset needs alpha > 0 and cutoff > 0")

    @property
    def radius(self):
        return math.sqrt(1 / TRUNCATION - 1) / self.cutoff

    @property
    def support(self):
        return (-self.radius, self.radius)

    @property
    def breakpoints(self):
        # geometric ladder guides the adaptive rule through the algebraic tail
        r = [10.0**k / self.cutoff for k in range(-1, 8)]
        return tuple(sorted([0.0, *r, *(-x for x in r)]))

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = self.alpha * self.cutoff**2 / (1 + 1j * self.cutoff * tau) ** 2
        return np.where(np.abs(tau) <= self.radius, out, 0)

    def to_dict(self):
        return {"preset": "ohmic", "params": {"alpha": self.alpha, "cutoff": self.cutoff}}


@dataclass(frozen=True)
class BoxPart(ContinuousPart):
    """Constant ``value`` on ``[-half_width, half_width]``."""

    value: float
    half_width: float
    kind = "box"

    @property
    def support(self):
        return (-self.half_width, self.half_width)

    @property
    def breakpoints(self):
        return (-self.half_width, self.half_width)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.where(np.abs(tau) <= self.half_width, self.value, 0).astype(complex)

    def abs_integral(self, a=-math.inf, b=math.inf, tol=QUAD_TOL):
        lo, hi = max(a, -self.half_width), min(b, self.half_width)
        return max(hi - lo, 0.0) * abs(self.value)

    def to_dict(self):
        return {"preset": "box", "params": {"value": self.value, "half_width": self.half_width}}


class GridPart(ContinuousPart):
    """Uniform samples with linear interpolation, zero outside the grid."""

    kind = "grid"

    def __init__(self, start, step, values):
        values = np.asarray(values, dtype=complex)
        if values.ndim != 1 or values.size < 2:
            raise KernelError("grid needs at least two samples")
        if not step > 0:
            raise KernelError("grid step must be positive")
        if not np.all(np.isfinite(values)):
            raise DivergentKernelError("grid values must be finite")
        self.start = float(start)
        self.step = float(step)
        self.values = values
        self.values.setflags(write=False)

    @property
    def times(self):
        return self.start + self.step * np.arange(self.values.size)

    @property
    def support(self):
        return (self.start, self.start + self.step * (self.values.size - 1))

    @property
    def breakpoints(self):
        return self.support

    def is_zero(self):
        return not np.any(self.values)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        t = self.times
        re = np.interp(tau, t, self.values.real, left=0.0, right=0.0)
        im = np.interp(tau, t, self.values.imag, left=0.0, right=0.0)
        return re + 1j * im

    def _cells(self, a, b, breaks=()):
        t = self.times
        inside = t[(t > a) & (t < b)]
        extra = [x for x in breaks if a < x < b]
        return np.unique(np.concatenate([[a, b], inside, extra]))

    def abs_integral(self, a=-math.inf, b=math.inf, tol=QUAD_TOL):
        lo, hi = self.support
        a, b = max(a, lo), min(b, hi)
        if b <= a:
            return 0.0
        x, w = composite_gauss_legendre(self._cells(a, b), 6)
        return float(np.sum(w * np.abs(self(x))))

    def integrate_against(self, g, a=-math.inf, b=math.inf, breaks=(), tol=QUAD_TOL):
        lo, hi = self.support
        a, b = max(a, lo), min(b, hi)
        if b <= a:
            return 0j
        x, w = composite_gauss_legendre(self._cells(a, b, breaks), 8)
        return complex(np.sum(w * self(x) * g(x)))

    def to_dict(self):
        return {"grid": {"start": self.start, "step": self.step,
                         "re": self.values.real.tolist(), "im": self.values.imag.tolist()}}


class MaxAbsPart(ContinuousPart):
    """Pointwise ``max_k |K_k(tau)|``, evaluated lazily from the members."""

    kind = "max_abs"

    def __init__(self, parts):
        self.parts = tuple(p for p in parts if not p.is_zero())

    def is_zero(self):
        return not self.parts

    @property
    def support(self):
        if not self.parts:
            return (0.0, 0.0)
        return (min(p.support[0] for p in self.parts), max(p.support[1] for p in self.parts))

    @property
    def breakpoints(self):
        return tuple(sorted({b for p in self.parts for b in p.breakpoints}))

    def __call__(self, tau):
        if not self.parts:
            return np.zeros(np.shape(tau), dtype=complex)
        vals = np.stack([np.abs(p(tau)) for p in self.parts])
        return vals.max(axis=0).astype(complex)

    def abs_integral(self, a=-math.inf, b=math.inf, tol=QUAD_TOL):
        if len(self.parts) == 1:
            return self.parts[0].abs_integral(a, b, tol)
        return super().abs_integral(a, b, tol)

    def to_dict(self):
        return {"max_abs": [p.to_dict() for p in self.parts]}


class ScaledPart(ContinuousPart):
    """``factor * part``."""

    kind = "scaled"

    def __init__(self, part, factor):
        self.part = part
        self.factor = complex(factor)

    @property
    def support(self):
        return self.part.support

    @property
    def breakpoints(self):
        return self.part.breakpoints

    def is_zero(self):
        return self.factor == 0 or self.part.is_zero()

    def __call__(self, tau):
        return self.factor * self.part(tau)

    def abs_integral(self, a=-math.inf, b=math.inf, tol=QUAD_TOL):
        return abs(self.factor) * self.part.abs_integral(a, b, tol / max(abs(self.factor), 1e-300))

    def to_dict(self):
        return {"scaled": {"factor_re": self.factor.real, "factor_im": self.factor.imag,
                           "part": self.part.to_dict()}}


PRESETS = {
    "zero": lambda: ZeroPart(),
    "exponential": lambda gamma, amplitude_re=None, amplitude_im=0.0: ExponentialPart(
        gamma, None if amplitude_re is None else complex(amplitude_re, amplitude_im)),
    "ohmic": lambda alpha, cutoff: OhmicPart(alpha, cutoff),
    "box": lambda value, half_width: BoxPart(value, half_width),
}


def part_from_dict(d):
    if "preset" in d:
        name = d["preset"]
        if name not in PRESETS:
            raise KernelError(f"unknown preset {name!r}")
        return PRESETS[name](**d.get("params", {}))
    if "grid" in d:
        g = d["grid"]
        values = np.asarray(g["re"], float) + 1j * np.asarray(g.get("im", [0.0] * len(g["re"])), float)
        return GridPart(g["start"], g["step"], values)
    if "max_abs" in d:
        return MaxAbsPart([part_from_dict(p) for p in d["max_abs"]])
    if "scaled" in d:
        sd = d["scaled"]
        return ScaledPart(part_from_dict(sd["part"]), complex(sd.get("factor_re", 1.0), sd.get("factor_im", 0.0)))
    raise KernelError("continuous part needs 'preset' or 'grid'")


# --------------------------------------------------------------------------
# kernels


def _merge_atoms(atoms, combine=lambda a, b: a + b):
    out = []
    for k, loc in sorted(((complex(k), float(loc)) for k, loc in atoms), key=lambda a: a[1]):
        if not math.isfinite(loc):
            raise KernelError("atom locations must be finite")
        if out and abs(loc - out[-1][1]) < MERGE_TOL:
            out[-1] = (combine(out[-1][0], k), out[-1][1])
        else:
            out.append((k, loc))
    return tuple(out)


@dataclass(frozen=True)
class MemoryKernel:
    continuous: ContinuousPart = field(default_factory=ZeroPart)
    atoms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", _merge_atoms(self.atoms))

    def __call__(self, tau):
        """Continuous part only; atoms are not pointwise values."""
        return self.continuous(tau)

    @property
    def support(self):
        lo, hi = self.continuous.support if not self.continuous.is_zero() else (math.inf, -math.inf)
        for _, loc in self.atoms:
            lo, hi = min(lo, loc), max(hi, loc)
        if lo > hi:
            return (0.0, 0.0)
        return (lo, hi)

    def is_zero(self):
        return self.continuous.is_zero() and all(k == 0 for k, _ in self.atoms)

    def abs(self):
        return MemoryKernel(MaxAbsPart([self.continuous]), tuple((abs(k), t) for k, t in self.atoms))

    def to_dict(self):
        d = dict(self.continuous.to_dict())
        d["atoms"] = [{"re": k.real, "im": k.imag, "location": t} for k, t in self.atoms]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("schema", None)
        atoms = [(complex(a.get("re", 0.0), a.get("im", 0.0)), a["location"]) for a in d.pop("atoms", [])]
        part = part_from_dict(d) if {"preset", "grid", "max_abs", "scaled"} & set(d) else ZeroPart()
        return cls(part, tuple(atoms))


def _grid_args(part, step=None):
    lo, hi = part.support
    if step is None:
        step = max(hi - lo, 1.0) * 2.0**-10
    g = part.sample(step)
    return g.start, g.step, g.values


class UpperBoundKernel(MemoryKernel):
    """Nonnegative kernel dominating a family of kernels."""

    def __post_init__(self):
        object.__setattr__(self, "atoms", _merge_atoms(self.atoms, combine=lambda a, b: complex(max(abs(a), abs(b)))))
        for k, _ in self.atoms:
            if k.imag != 0 or k.real < 0:
                raise KernelError("upper-bound atoms must be nonnegative reals")


def exponential_kernel(gamma=1.0, amplitude=None):
    return MemoryKernel(ExponentialPart(gamma, amplitude))


def ohmic_kernel(alpha, cutoff):
    return MemoryKernel(OhmicPart(alpha, cutoff))


def dirac_kernel(weight=1.0, location=0.0):
    return MemoryKernel(ZeroPart(), ((weight, location),))


def zero_kernel():
    return MemoryKernel()


def grid_kernel(start, step, values, atoms=()):
    return MemoryKernel(GridPart(start, step, values), tuple(atoms))


def scaled_kernel(kernel, factor):
    if factor == 1:
        return kernel
    return MemoryKernel(ScaledPart(kernel.continuous, factor), tuple((factor * k, t) for k, t in kernel.atoms))


def sampled(kernel, step=None):
    """Replace an analytic continuous part by its grid samples."""
    if kernel.continuous.is_zero():
        return kernel
    return type(kernel)(GridPart(*_grid_args(kernel.continuous, step)), kernel.atoms)


# --------------------------------------------------------------------------
# total variation and windows


def atom_weight(loc, a, b):
    """Indicator with half weight on the boundary of the closed interval."""
    if a < loc < b:
        return 1.0
    if loc == a or loc == b:
        return 0.5
    return 0.0


def total_variation(kernel, interval=None, tol=QUAD_TOL):
    if interval is None:
        a, b = -math.inf, math.inf
    else:
        a, b = map(float, interval)
        if a > b:
            raise KernelError("interval must satisfy a <= b")
    cont = kernel.continuous.abs_integral(a, b, tol)
    if not math.isfinite(cont):
        raise DivergentKernelError("continuous part is not integrable")
    if interval is None:
        disc = sum(abs(k) for k, _ in kernel.atoms)
    else:
        disc = sum(abs(k) * atom_weight(t, a, b) for k, t in kernel.atoms)
    return float(cont + disc)


def mu_window(upper, a, b, s, tol=QUAD_TOL):
    """``int_a^b U(s - s') ds'``, i.e. the mass of ``U`` on ``[s - b, s - a]``."""
    if a > b:
        raise KernelError("mu_window needs a <= b")
    return total_variation(upper, (s - b, s - a), tol)


def window_tv_sum(kernel, centres, half_width, tol=QUAD_TOL):
    """``sum_c TV(K_c; [c - w, c + w])`` over the centres (continuous part only)."""
    cont = MemoryKernel(kernel.continuous)
    return sum(total_variation(cont, (c - half_width, c + half_width), tol) for c in centres)


# --------------------------------------------------------------------------
# upper bounds


def build_upper_bound(kernels):
    kernels = list(kernels)
    if not kernels:
        raise KernelError("build_upper_bound needs at least one kernel")
    atoms = []
    for K in kernels:
        atoms.extend((abs(k), t) for k, t in K.atoms)
    return UpperBoundKernel(MaxAbsPart([K.continuous for K in kernels]), tuple(atoms))


# --------------------------------------------------------------------------
# mollifiers


@lru_cache(maxsize=1)
def bump_normalisation():
    """``A0`` such that ``A0 exp(-1/(1-x^2))`` has unit mass on ``(-1, 1)``."""
    def raw_bump(x):
        out = np.zeros_like(x)
        m = np.abs(x) < 1
        out[m] = np.exp(-1 / (1 - x[m] ** 2))
        return out

    raw = 2 * adaptive_simpson(raw_bump, 0.0, 1.0, 1e-15)
    return 1.0 / raw


def standard_bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    out[m] = bump_normalisation() * np.exp(-1 / (1 - x[m] ** 2))
    return out


@dataclass(frozen=True)
class Mollifier:
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise KernelError("mollifier width must be positive")

    def __call__(self, x):
        return standard_bump(np.asarray(x, dtype=float) / self.width) / self.width

    def mass(self):
        return adaptive_simpson(self, -self.width, self.width, 1e-12)


class PairMollifier:
    """``eta_{d1} * eta_{d2}``, tabulated once and cubic-spline interpolated."""

    def __init__(self, d1, d2, nodes=4097):
        self.a, self.b = Mollifier(d1), Mollifier(d2)
        self.width = d1 + d2
        s = np.linspace(-self.width, self.width, nodes)
        self._spline = CubicSpline(s, self.direct(s), bc_type="clamped")

    def direct(self, s):
        """Convolution by quadrature, no interpolation."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        d1, d2 = self.a.width, self.b.width
        lo = np.maximum(-d2, -d1 - s)
        hi = np.minimum(d2, d1 - s)
        ok = hi > lo
        out = np.zeros_like(s)
        if np.any(ok):
            x, w = split_rule(lo[ok], hi[ok], (), n=32, panels=4)
            out[ok] = np.sum(w * self.a(s[ok, None] + x) * self.b(x), axis=1)
        return out

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = self._spline(s)
        return np.where(np.abs(s) < self.width, np.maximum(out, 0.0), 0.0)


def mollify(kernel, delta, delta2=None, step=None):
    """Convolve ``kernel`` with ``eta_delta * eta_delta2``; the result has no atoms."""
    if delta2 is None:
        delta2 = delta
    if not (delta > 0 and delta2 > 0):
        raise KernelError("mollifier widths must be positive")
    if kernel.is_zero():
        return MemoryKernel()
    pair = PairMollifier(delta, delta2)
    w = pair.width
    lo, hi = kernel.support
    lo, hi = lo - w, hi + w
    if step is None:
        base = kernel.continuous.support
        span = base[1] - base[0] if not kernel.continuous.is_zero() else 0.0
        step = min(span * 2.0**-10 if span > 0 else math.inf, w / 32)
    n = int(math.ceil((hi - lo) / step)) + 1
    if n > MAX_GRID_POINTS:
        raise KernelError(f"mollified grid would need {n} points; increase the step")
    tau = lo + step * np.arange(n)
    vals = np.zeros(n, dtype=complex)
    for k, T in kernel.atoms:
        m = np.abs(tau - T) < w
        vals[m] += k * pair(tau[m] - T)
    part = kernel.continuous
    if not part.is_zero():
        plo, phi = part.support
        m = (tau + w > plo) & (tau - w < phi)
        t = tau[m]
        a, b = np.maximum(t - w, plo), np.minimum(t + w, phi)
        cuts = [c for c in part.breakpoints if plo <= c <= phi]
        for chunk in np.array_split(np.arange(t.size), max(1, t.size // 2048)):
            x, wt = split_rule(a[chunk], b[chunk], cuts, n=16, panels=4)
            vals[np.flatnonzero(m)[chunk]] += np.sum(wt * part(x) * pair(t[chunk, None] - x), axis=1)
    out = MemoryKernel(GridPart(lo, step, vals))
    tv = total_variation(kernel)
    sup = float(np.max(np.abs(vals)))
    if sup > min(1 / delta, 1 / delta2) * tv + 1e-8:
        raise KernelError(f"mollified sup-norm {sup} exceeds min(1/d, 1/d')*TV = {min(1/delta, 1/delta2)*tv}")
    return out


# --------------------------------------------------------------------------
# closeness on piecewise-C1 test functions


class PiecewiseFunction:
    """Test function that is C1 between its breakpoints.

    ``pieces[k]`` (and ``derivatives[k]``) are used on the k-th open interval
    between consecutive breakpoints. Sup norms are estimated on ``span``
    unless given explicitly.
    """

    def __init__(self, breakpoints, pieces, derivatives, span=(-50.0, 50.0),
                 sup_norm=None, deriv_norm=None, samples=20001):
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints))
        if len(pieces) != len(self.breakpoints) + 1 or len(derivatives) != len(pieces):
            raise KernelError("need one piece (and derivative) per interval")
        self.pieces = tuple(pieces)
        self.derivatives = tuple(derivatives)
        x = np.linspace(span[0], span[1], samples)
        self.sup_norm = float(np.max(np.abs(self(x)))) if sup_norm is None else float(sup_norm)
        self.deriv_norm = (float(np.max(np.abs(self.derivative(x)))) if deriv_norm is None
                           else float(deriv_norm))

    def _eval(self, funcs, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right")
        out = np.zeros(x.shape, dtype=complex)
        for k, f in enumerate(funcs):
            m = idx == k
            if np.any(m):
                out[m] = f(x[m])
        return out

    def __call__(self, x):
        return self._eval(self.pieces, x)

    def derivative(self, x):
        return self._eval(self.derivatives, x)

    def limits(self, x):
        """Left and right limits at ``x``."""
        k = int(np.searchsorted(self.breakpoints, x, side="left"))
        k_right = int(np.searchsorted(self.breakpoints, x, side="right"))
        arr = np.array([x])
        return complex(self.pieces[k](arr)[0]), complex(self.pieces[k_right](arr)[0])

    def average(self, x):
        left, right = self.limits(x)
        return 0.5 * (left + right)


def smooth_function(f, df, **kw):
    return PiecewiseFunction((), (f,), (df,), **kw)


def kernel_action(kernel, f, tol=QUAD_TOL):
    """``int K f``, atoms acting on the average of left/right limits."""
    cont = kernel.continuous.integrate_against(f, breaks=f.breakpoints, tol=tol)
    disc = sum(k * f.average(t) for k, t in kernel.atoms)
    return complex(cont + disc)


@dataclass
class ClosenessResult:
    lambda0: float
    lambda1: float
    errors: np.ndarray
    sup_norms: np.ndarray
    deriv_norms: np.ndarray

    def __iter__(self):
        yield self.lambda0
        yield self.lambda1

    def bound(self, l0, l1):
        return l0 * self.sup_norms + l1 * self.deriv_norms

    def violations(self, l0, l1):
        """Indices of test functions whose error exceeds ``l0 |f| + l1 |f'|``."""
        return np.flatnonzero(self.errors > self.bound(l0, l1))


def closeness_test(K, K2, breakpoints, test_functions, tol=QUAD_TOL):
    """Measure ``|int (K - K2) f|`` over a family and fit the smallest bound.

    The reported pair minimises ``lambda0 + lambda1`` subject to
    ``lambda0 |f|_inf + lambda1 |f'|_inf >= |int (K - K2) f|`` for every f.
    """
    allowed = set(float(b) for b in breakpoints)
    errs, a, b = [], [], []
    for f in test_functions:
        stray = [x for x in f.breakpoints if x not in allowed]
        if stray:
            raise KernelError(f"test function discontinuous at {stray}, outside the declared breakpoints")
        errs.append(abs(kernel_action(K, f, tol) - kernel_action(K2, f, tol)))
        a.append(f.sup_norm)
        b.append(f.deriv_norm)
    errs, a, b = map(np.asarray, (errs, a, b))
    if not np.any(errs > 0):
        return ClosenessResult(0.0, 0.0, errs, a, b)
    res = linprog(c=[1.0, 1.0], A_ub=-np.column_stack([a, b]), b_ub=-errs,
                  bounds=[(0, None), (0, None)], method="highs")
    if not res.success:
        raise KernelError(f"closeness fit failed: {res.message}")
    return ClosenessResult(float(res.x[0]), float(res.x[1]), errs, a, b)


def mollifier_closeness_constants(kernel, breakpoints, width, tol=QUAD_TOL):
    """Closeness constants for mollification of total width ``width``.

    ``lambda0 = 2 sum_t TV(K_c; [t - w, t + w])`` and ``lambda1 = w TV(K)``.
    """
    l0 = 2 * window_tv_sum(kernel, breakpoints, width, tol)
    l1 = width * total_variation(kernel, tol=tol)
    return l0, l1
