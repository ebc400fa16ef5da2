"""Discrete-mode dilation of vacuum baths: spectral densities, chain
coefficients from the Stieltjes recursion, and the associated error and
mode-count estimates."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .kernels import (BoxPart, ExponentialPart, GridPart, KernelError, MemoryKernel, OhmicPart, ScaledPart,
                      ZeroPart, bump_normalisation, standard_bump, total_variation)
from .quadrature import composite_gauss_legendre, panel_rule

NEGATIVE_TOL = 1e-8
MAX_FOURIER_NODES = 1 << 22
CHUNK = 1 << 22


class ChainError(ValueError):
    pass


class RankDeficiencyError(ChainError):
    def __init__(self, largest_valid, requested):
        self.largest_valid = largest_valid
        self.requested = requested
        super().__init__(f"discretised measure supports at most N_m = {largest_valid} modes "
                         f"({requested} requested)")


# --------------------------------------------------------------------------
# Fourier transforms  Vhat(w) = int V(t) exp(i w t) dt


def _analytic_fourier(part, omega):
    if isinstance(part, ZeroPart):
        return np.zeros_like(omega, dtype=complex)
    if isinstance(part, ExponentialPart):
        g = part.gamma
        return part.amplitude * 2 * g / (g**2 + omega**2)
    if isinstance(part, OhmicPart):
        w = np.maximum(omega, 0.0)
        return (2 * math.pi * part.alpha * w * np.exp(-w / part.cutoff)).astype(complex)
    if isinstance(part, BoxPart):
        a = part.half_width
        return part.value * 2 * a * np.sinc(omega * a / math.pi).astype(complex)
    if isinstance(part, ScaledPart):
        inner = _analytic_fourier(part.part, omega)
        return None if inner is None else part.factor * inner
    return None


def _fourier_nodes(part, omega_max):
    lo, hi = part.support
    if hi <= lo:
        return np.empty(0), np.empty(0)
    if isinstance(part, GridPart):
        cells = part.times
        sub = max(1, int(math.ceil(part.step * omega_max / 2)))
        edges = np.linspace(cells[:-1], cells[1:], sub + 1, axis=1)
        edges = np.concatenate([edges[:, :-1].ravel(), [cells[-1]]])
        return composite_gauss_legendre(edges, 8)
    cuts = sorted({lo, hi, *(b for b in part.breakpoints if lo < b < hi)})
    h = min((hi - lo) / 64, 2.0 / max(omega_max, 1e-12))
    edges = [lo]
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(1, int(math.ceil((b - a) / h)))
        edges.extend(np.linspace(a, b, n + 1)[1:])
        if len(edges) * 16 > MAX_FOURIER_NODES:
            raise KernelError("kernel support too wide for quadrature Fourier transform; "
                              "use an analytic preset or a coarser grid")
    return composite_gauss_legendre(np.asarray(edges), 16)


def fourier_transform(kernel, omega, route="auto"):
    """``int V(t) e^{i w t} dt`` with atoms contributing ``k e^{i w T}`` exactly.

    ``route`` is ``"auto"`` (analytic when the preset has one),
    ``"analytic"`` or ``"quadrature"``.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.zeros(omega.shape, dtype=complex)
    for k, T in kernel.atoms:
        out += k * np.exp(1j * omega * T)
    part = kernel.continuous
    if part.is_zero():
        return out
    cont = None if route == "quadrature" else _analytic_fourier(part, omega)
    if cont is None:
        if route == "analytic":
            raise KernelError(f"no analytic transform for {part.kind}")
        x, w = _fourier_nodes(part, float(np.max(np.abs(omega), initial=0.0)))
        fx = w * part(x)
        cont = np.zeros(omega.shape, dtype=complex)
        step = max(1, CHUNK // max(x.size, 1))
        for s in range(0, omega.size, step):
            cont[s:s + step] = np.exp(1j * np.outer(omega[s:s + step], x)) @ fx
    return out + cont


@lru_cache(maxsize=1)
def _bump_rule():
    return composite_gauss_legendre(np.linspace(-1, 1, 65), 16)


def bump_fourier(k):
    """``int eta(x) cos(k x) dx`` for the unit-mass standard bump."""
    k = np.asarray(k, dtype=float)
    x, w = _bump_rule()
    weights = w * standard_bump(x)
    flat = k.ravel()
    out = np.empty(flat.shape)
    step = max(1, CHUNK // x.size)
    for s in range(0, flat.size, step):
        out[s:s + step] = np.cos(np.outer(flat[s:s + step], x)) @ weights
    return out.reshape(k.shape)


# --------------------------------------------------------------------------
# spectral densities


class SpectralDensity:
    """Nonnegative weight on the frequency axis.

    ``func`` is vectorised. ``support`` limits where the Stieltjes rule puts
    nodes and where endpoint refinement is applied. ``omegas``/``values``
    hold the tabulation the density was checked on, if any.
    """

    def __init__(self, func, support=(-math.inf, math.inf), origin="", omegas=None, values=None):
        self.func = func
        self.support = (float(support[0]), float(support[1]))
        self.origin = origin
        self.omegas = None if omegas is None else np.asarray(omegas, dtype=float)
        self.values = None if values is None else np.asarray(values, dtype=float)

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        lo, hi = self.support
        inside = (omega >= lo) & (omega <= hi)
        return np.where(inside, self.func(omega), 0.0)

    @classmethod
    def semicircle(cls, radius=1.0, scale=1.0):
        r = float(radius)
        return cls(lambda w: scale * np.sqrt(np.maximum(1 - (w / r) ** 2, 0.0)), (-r, r), "semicircle")

    @classmethod
    def flat(cls, half_width=1.0, height=1.0):
        return cls(lambda w: np.full(np.shape(w), float(height)), (-half_width, half_width), "flat")

    @classmethod
    def ohmic(cls, alpha, cutoff):
        return cls(lambda w: 2 * math.pi * alpha * np.maximum(w, 0) * np.exp(-np.maximum(w, 0) / cutoff),
                   (0.0, math.inf), "ohmic")

    def scaled(self, c):
        return SpectralDensity(lambda w: c * self.func(w), self.support, self.origin)

    def shifted(self, s):
        return SpectralDensity(lambda w: self.func(w - s), (self.support[0] + s, self.support[1] + s),
                               self.origin)


def _check_values(vals, bound=None):
    vals = np.asarray(vals)
    if np.any(np.abs(vals.imag) > NEGATIVE_TOL * max(1.0, float(np.max(np.abs(vals), initial=0)))):
        raise ChainError("spectral density is not real; kernel is not a valid commutator kernel")
    vals = vals.real
    if np.any(vals < -NEGATIVE_TOL):
        raise ChainError(f"spectral density reaches {vals.min():.3g} < 0; not a valid vacuum-bath kernel")
    vals = np.maximum(vals, 0.0)
    if bound is not None and np.max(vals, initial=0.0) > bound + NEGATIVE_TOL:
        raise ChainError(f"spectral density exceeds TV(V) = {bound}")
    return vals


def spectral_density(V, delta, grid, route="auto"):
    """Mollified spectral density ``Vhat(w) |etahat(w delta)|^2``.

    ``delta = 0`` gives the unmollified transform. The transform is checked
    on ``grid`` for nonnegativity and for the bound ``max Vhat <= TV(V)``.
    """
    if delta < 0:
        raise ChainError("delta must be nonnegative")
    grid = np.asarray(grid, dtype=float)
    tv = total_variation(V)

    def func(w):
        w = np.asarray(w, dtype=float)
        raw = fourier_transform(V, w.ravel(), route).reshape(w.shape)
        if delta > 0:
            raw = raw * bump_fourier(w * delta) ** 2
        return _check_values(raw, tv)

    values = func(grid)
    return SpectralDensity(func, origin="kernel", omegas=grid, values=values)


# --------------------------------------------------------------------------
# Stieltjes / Lanczos


@dataclass(frozen=True)
class ChainCoefficients:
    g: float
    omegas: tuple
    hoppings: tuple

    def __post_init__(self):
        object.__setattr__(self, "omegas", tuple(float(x) for x in self.omegas))
        object.__setattr__(self, "hoppings", tuple(float(x) for x in self.hoppings))
        if len(self.hoppings) != max(len(self.omegas) - 1, 0):
            raise ChainError("need N_m - 1 hoppings for N_m modes")
        if self.g < 0:
            raise ChainError("coupling must be nonnegative")

    @property
    def n_modes(self):
        return len(self.omegas)

    @property
    def mass(self):
        return 2 * math.pi * self.g**2

    def jacobi(self):
        J = np.diag(np.asarray(self.omegas))
        h = np.asarray(self.hoppings)
        return J + np.diag(h, 1) + np.diag(h, -1)

    def truncated(self, n):
        if n > self.n_modes:
            raise ChainError(f"chain has only {self.n_modes} modes")
        return ChainCoefficients(self.g, self.omegas[:n], self.hoppings[:max(n - 1, 0)])

    def to_dict(self):
        return {"g": self.g, "omegas": list(self.omegas), "hoppings": list(self.hoppings)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["g"]), tuple(d["omegas"]), tuple(d["hoppings"]))

    def to_json(self):
        return json.dumps({"schema": "liebsim.chain/1", **self.to_dict()}, indent=1)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "omega", "hopping", "g"])
        for j, om in enumerate(self.omegas):
            hop = self.hoppings[j] if j < len(self.hoppings) else ""
            w.writerow([j + 1, f"{om:.12g}", f"{hop:.12g}" if hop != "" else "", f"{self.g:.12g}" if j == 0 else ""])
        return buf.getvalue()


def discretise(sd, omega_c, panels=64, nodes=32):
    """Composite Gauss-Legendre nodes and measure weights on the cut-off support."""
    if not omega_c > 0:
        raise ChainError("omega_c must be positive")
    a, b = max(-omega_c, sd.support[0]), min(omega_c, sd.support[1])
    if not b > a:
        raise ChainError("measure has no support inside [-omega_c, omega_c]")
    x, w = panel_rule(a, b, panels, nodes, graded=True)
    dens = sd(x)
    if np.any(dens < -NEGATIVE_TOL):
        raise ChainError("spectral density is negative on the cutoff interval")
    return x, w * np.maximum(dens, 0.0)


def lanczos_basis(x, weights, n_modes, reorthogonalize=False):
    """Stieltjes recursion in normalised form.

    Returns ``(A, beta, Q)`` where ``Q[:, j] = sqrt(weights) p_j / |p_j|`` and
    ``beta[j] = sqrt(B_{j+1})`` (so ``B_j = beta[j-1]**2``).
    """
    x = np.asarray(x, dtype=float)
    weights = np.asarray(weights, dtype=float)
    support = int(np.count_nonzero(weights > 0))
    if n_modes < 1:
        raise ChainError("need at least one mode")
    if support == 0:
        raise ChainError("measure has zero mass")
    if n_modes > support:
        raise RankDeficiencyError(support, n_modes)
    Q = np.zeros((x.size, n_modes))
    A = np.zeros(n_modes)
    beta = np.zeros(max(n_modes - 1, 0))
    q = np.sqrt(weights)
    q /= np.linalg.norm(q)
    Q[:, 0] = q
    prev, b_prev = np.zeros_like(q), 0.0
    scale = float(np.max(np.abs(x[weights > 0])))
    for j in range(n_modes):
        v = x * Q[:, j]
        A[j] = Q[:, j] @ v
        if j == n_modes - 1:
            break
        v -= A[j] * Q[:, j] + b_prev * prev
        if reorthogonalize:
            for _ in range(2):
                v -= Q[:, :j + 1] @ (Q[:, :j + 1].T @ v)
        b = float(np.linalg.norm(v))
        if not b > 1e-12 * max(scale, 1e-300):
            raise RankDeficiencyError(j + 1, n_modes)
        beta[j] = b
        prev, b_prev = Q[:, j], b
        Q[:, j + 1] = v / b
    return A, beta, Q


def lanczos_chain(sd, omega_c, n_modes, reorthogonalize=False, panels=64, nodes=32):
    """Chain coefficients for the measure ``sd(w) dw`` restricted to ``[-omega_c, omega_c]``."""
    x, w = discretise(sd, omega_c, panels, nodes)
    mass = float(np.sum(w))
    if not mass > 0:
        raise ChainError("measure has zero mass on the cutoff interval")
    A, beta, _ = lanczos_basis(x, w, n_modes, reorthogonalize)
    return ChainCoefficients(math.sqrt(mass / (2 * math.pi)), tuple(A), tuple(beta))


def chain_measure(chain):
    """Nodes and weights of the quadrature encoded by the Jacobi matrix."""
    theta, vecs = np.linalg.eigh(chain.jacobi())
    return theta, chain.mass * vecs[0] ** 2


# --------------------------------------------------------------------------
# dilation parameters and error bounds


@dataclass(frozen=True)
class DilationParams:
    delta: float
    omega_c: float
    n_modes: int

    def __post_init__(self):
        if not (self.delta > 0 and self.omega_c > 0 and self.n_modes >= 1):
            raise ChainError("need delta > 0, omega_c > 0, N_m >= 1")

    @classmethod
    def from_mode_count(cls, n_modes, t, eps_tilde=0.5):
        """``omega_c = N/(2 e^2 t)`` and ``delta = 2 e^2 t N^{-eps_tilde}``."""
        if not (t > 0 and 0 < eps_tilde < 1):
            raise ChainError("need t > 0 and 0 < eps_tilde < 1")
        e2 = math.e**2
        return cls(2 * e2 * t * n_modes**-eps_tilde, n_modes / (2 * e2 * t), int(n_modes))

    def to_dict(self):
        return {"delta": self.delta, "omega_c": self.omega_c, "n_modes": self.n_modes}


def build_chain(V, params, reorthogonalize=False):
    sd = spectral_density(V, params.delta, np.linspace(-params.omega_c, params.omega_c, 257))
    return lanczos_chain(sd, params.omega_c, params.n_modes, reorthogonalize)


def regularization_error_bound(t, n_terms, tv_v, tv_vc_windows, delta):
    """``tv_vc_windows`` is ``sum_{t' in {0, t}} TV(V_c; [t' - 2 delta, t' + 2 delta])``."""
    lam0 = 4 * tv_vc_windows
    lam1 = 2 * (2 * delta) * tv_v
    return 8 * t * n_terms * lam0 + 8 * t * n_terms * (1 + (4 * t + 32 * t * tv_v) * n_terms) * lam1


def regularization_windows(V, t, delta):
    cont = MemoryKernel(V.continuous)
    w = 2 * delta
    return sum(total_variation(cont, (c - w, c + w)) for c in (0.0, t))


def regularization_error_for_kernel(V, t, n_terms, delta):
    return regularization_error_bound(t, n_terms, total_variation(V), regularization_windows(V, t, delta), delta)


@lru_cache(maxsize=1)
def M0():
    """``sup_{w > 0} w^2 exp(-sqrt(w))``."""
    res = minimize_scalar(lambda w: -(w**2) * math.exp(-math.sqrt(w)), bounds=(1e-6, 400.0),
                          method="bounded", options={"xatol": 1e-12})
    return -res.fun


@lru_cache(maxsize=1)
def gamma0():
    return 2**10 * bump_normalisation() ** 2 * M0() / (math.e**2 * math.pi)


def freq_cutoff_error_bound(t, n_terms, o_norm, tv_v, delta, omega_c):
    pre = 4 * math.sqrt(gamma0()) / math.sqrt(delta**3 * omega_c)
    return pre * t**2 * n_terms * o_norm * tv_v * math.exp(-0.5 * math.sqrt(omega_c * delta / (16 * math.e)))


def chain_truncation_error_bound(t, n_terms, o_norm, tv_v, n_modes, delta, omega_c):
    if t == 0:
        return 0.0
    log_base = math.log(2 * math.e * omega_c * t / n_modes)
    factor = math.exp(0.5 * n_modes * log_base)
    return 2 * math.sqrt(2) * t**2 * n_terms * o_norm * tv_v * (n_modes / delta) * factor


# --------------------------------------------------------------------------
# mode-count estimate


def window_mass(U_c, kappa, t, tol=1e-13):
    cont = MemoryKernel(U_c.continuous if isinstance(U_c, MemoryKernel) else U_c)
    return sum(total_variation(cont, (c - kappa, c + kappa), tol) for c in (0.0, t))


def kappa0_solve(x, U_c, t, tol=1e-10):
    """Smallest ``kappa`` with ``sum_{tau in {0, t}} int_{tau-kappa}^{tau+kappa} |U_c| = 1/x``."""
    if not x > 0:
        raise ChainError("kappa0 needs x > 0")
    target = 1.0 / x
    cont = MemoryKernel(U_c.continuous if isinstance(U_c, MemoryKernel) else U_c)
    tv = total_variation(cont, tol=1e-13)
    if target > 2 * tv:
        raise ChainError(f"no solution: 1/x = {target:.6g} exceeds 2 TV(U_c) = {2 * tv:.6g}")
    lo_s, hi_s = cont.support
    hi = max(abs(lo_s), abs(hi_s)) + abs(t) + 1.0
    if window_mass(cont, hi, t) < target - tol:
        raise ChainError("no solution: windows saturate below 1/x")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = window_mass(cont, mid, t)
        if abs(val - target) < tol * 0.1:
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, hi):
            break
    mid = 0.5 * (lo + hi)
    if abs(window_mass(cont, mid, t) - target) >= tol:
        raise ChainError("kappa0 bisection did not reach the residual target")
    return mid


@dataclass(frozen=True)
class ModeCountEstimate:
    terms: tuple
    kappa0: float
    x: float

    @property
    def total(self):
        return sum(self.terms)

    @property
    def estimate(self):
        return int(math.ceil(self.total))


def prop2_mode_count(eps, t, d, U_c):
    """Order-of-magnitude mode count with unit constants and vanishing o(1) exponents."""
    if not 0 < eps < 1 or not t > 0:
        raise ChainError("need 0 < eps < 1 and t > 0")
    inv = 1.0 / eps
    log_inv = math.log(inv)
    x = inv * t ** (d + 1) + t * log_inv**d
    kappa = kappa0_solve(x, U_c, t)
    terms = (inv * t ** (2 * d + 3), inv * log_inv, t / kappa)
    return ModeCountEstimate(terms, kappa, x)
