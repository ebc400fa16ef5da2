"""Qudit lattices with local terms, their geometry, restrictions and the
light-cone bound calculators."""

from __future__ import annotations

import base64
import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .kernels import KernelError, MemoryKernel, UpperBoundKernel, build_upper_bound, scaled_kernel, total_variation
from .quadrature import adaptive_simpson

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-9

# |K^{nu,nu'}| = |V| / 2 for every quadrature pair of a vacuum bath
VACUUM_QUADRATURE_FACTOR = 0.5


class ModelError(ValueError):
    pass


# --------------------------------------------------------------------------
# time dependence


@lru_cache(maxsize=1)
def _bump_area():
    def raw(s):
        out = np.zeros_like(s)
        m = (s > 0) & (s < 1)
        out[m] = np.exp(-1 / (1 - (2 * s[m] - 1) ** 2))
        return out

    return adaptive_simpson(raw, 0.0, 1.0, 1e-15)


PULSE_SHAPES = ("bump", "sine2")


@dataclass(frozen=True)
class Window:
    """``value`` on ``[t0, t1)``, zero elsewhere."""

    t0: float = -math.inf
    t1: float = math.inf
    value: float = 1.0

    def __call__(self, t):
        return self.value if self.t0 <= t < self.t1 else 0.0

    def checkpoints(self):
        return [x for x in (self.t0, self.t1) if math.isfinite(x)] or [0.0]

    @property
    def span(self):
        return (self.t0, self.t1)

    def to_dict(self):
        return {"kind": "window", "t0": _num(self.t0), "t1": _num(self.t1), "value": self.value}


@dataclass(frozen=True)
class Pulse:
    """Smooth bump on ``[start, start + duration]`` with the given area.

    The profile is ``exp(-1 / (1 - (2s - 1)^2))`` in the scaled time ``s``,
    normalised numerically.
    """

    start: float
    duration: float
    area: float
    shape: str = "bump"

    def __post_init__(self):
        if not self.duration > 0:
            raise ModelError("pulse duration must be positive")
        if self.shape not in PULSE_SHAPES:
            raise ModelError(f"unknown pulse shape {self.shape!r}")

    def profile(self, s):
        """Unit-area profile on ``[0, 1]``."""
        if self.shape == "sine2":
            return 2.0 * math.sin(math.pi * s) ** 2 if 0 < s < 1 else 0.0
        den = 1 - (2 * s - 1) ** 2
        if not (0 < s < 1 and den > 0):
            return 0.0
        return math.exp(-1 / den) / _bump_area()

    @property
    def peak(self):
        return self.area / self.duration * self.profile(0.5)

    def __call__(self, t):
        return self.area / self.duration * self.profile((t - self.start) / self.duration)

    def checkpoints(self):
        return [self.start, self.start + 0.5 * self.duration, self.start + self.duration]

    @property
    def span(self):
        return (self.start, self.start + self.duration)

    def to_dict(self):
        return {"kind": "pulse", "start": self.start, "duration": self.duration, "area": self.area,
                "shape": self.shape}


def _num(x):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def envelope_from_dict(d):
    kind = d.get("kind", "window")
    if kind == "window":
        return Window(float(d.get("t0", "-inf")), float(d.get("t1", "inf")), float(d.get("value", 1.0)))
    if kind == "pulse":
        return Pulse(float(d["start"]), float(d["duration"]), float(d["area"]), d.get("shape", "bump"))
    raise ModelError(f"unknown envelope kind {kind!r}")


class Schedule:
    """``A(t) = sum_k f_k(t) M_k`` for scalar envelopes ``f_k``."""

    def __init__(self, pieces):
        self.pieces = tuple((env, np.asarray(m, dtype=complex)) for env, m in pieces)
        if not self.pieces:
            raise ModelError("schedule needs at least one piece")
        dims = {m.shape for _, m in self.pieces}
        if len(dims) != 1 or self.pieces[0][1].ndim != 2 or self.pieces[0][1].shape[0] != self.pieces[0][1].shape[1]:
            raise ModelError("schedule matrices must be square with a common shape")
        for _, m in self.pieces:
            if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
                raise ModelError("schedule matrices must be Hermitian")

    @classmethod
    def constant(cls, matrix):
        return cls([(Window(), matrix)])

    @property
    def dim(self):
        return self.pieces[0][1].shape[0]

    @property
    def is_static(self):
        return all(isinstance(e, Window) and e.t0 == -math.inf and e.t1 == math.inf for e, _ in self.pieces)

    def at(self, t):
        out = np.zeros_like(self.pieces[0][1])
        for env, m in self.pieces:
            c = env(t)
            if c:
                out = out + c * m
        return out

    def checkpoints(self):
        return sorted({c for env, _ in self.pieces for c in env.checkpoints()})

    def max_norm(self):
        """Largest spectral norm over the interval endpoints and pulse peaks."""
        best = 0.0
        for t in self.checkpoints():
            for probe in (t, np.nextafter(t, -math.inf), np.nextafter(t, math.inf)):
                best = max(best, np.linalg.norm(self.at(probe), 2))
        return best

    def to_list(self):
        return [{"envelope": env.to_dict(), "matrix": matrix_to_json(m)} for env, m in self.pieces]

    @classmethod
    def from_json(cls, d):
        if isinstance(d, dict) and ("re" in d or "b64" in d):
            return cls.constant(matrix_from_json(d))
        if isinstance(d, list) and d and isinstance(d[0], dict) and "matrix" in d[0]:
            return cls([(envelope_from_dict(p.get("envelope", {})), matrix_from_json(p["matrix"])) for p in d])
        return cls.constant(matrix_from_json(d))


def matrix_to_json(m):
    m = np.asarray(m, dtype=complex)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_json(d):
    if isinstance(d, dict) and "b64" in d:
        raw = base64.b64decode(d["b64"])
        return np.frombuffer(raw, dtype="<c16").reshape(d["shape"]).copy()
    if isinstance(d, dict):
        re = np.asarray(d["re"], dtype=float)
        im = np.asarray(d.get("im", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    return np.asarray(d, dtype=complex)


def _as_schedule(x):
    if x is None or isinstance(x, Schedule):
        return x
    return Schedule.constant(x)


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class InteractionTerm:
    """Local term ``h + B^x R^x + B^p R^p`` on the sites in ``support``.

    Matrices act on the sites of the support in sorted order.
    """

    support: tuple
    h: Schedule | None = None
    rx: Schedule | None = None
    rp: Schedule | None = None
    kernel_id: str | None = None
    name: str = ""

    def __post_init__(self):
        support = tuple(sorted({tuple(int(c) for c in site) for site in self.support}))
        if not support:
            raise ModelError("term support must be nonempty")
        object.__setattr__(self, "support", support)
        for attr in ("h", "rx", "rp"):
            object.__setattr__(self, attr, _as_schedule(getattr(self, attr)))

    @property
    def coupled(self):
        return self.kernel_id is not None and (self.rx is not None or self.rp is not None)


@dataclass(frozen=True)
class LatticeModel:
    extents: tuple
    qudit_dim: int = 2
    terms: tuple = ()
    kernels: dict = field(default_factory=dict)
    periodic: tuple = ()
    check_norms: bool = True

    def __post_init__(self):
        extents = tuple(int(e) for e in self.extents)
        if not extents or any(e < 1 for e in extents):
            raise ModelError("extents must be positive integers")
        object.__setattr__(self, "extents", extents)
        periodic = tuple(bool(p) for p in self.periodic) or (False,) * len(extents)
        if len(periodic) != len(extents):
            raise ModelError("periodic flags must match the dimension")
        object.__setattr__(self, "periodic", periodic)
        if self.qudit_dim < 2:
            raise ModelError("qudit dimension must be at least 2")
        terms = []
        for i, term in enumerate(self.terms):
            if not term.name:
                term = replace(term, name=f"t{i}")
            terms.append(term)
        object.__setattr__(self, "terms", tuple(terms))
        names = [t.name for t in terms]
        if len(set(names)) != len(names):
            raise ModelError("term names must be unique")
        for term in terms:
            for site in term.support:
                if not self.contains(site):
                    raise ModelError(f"site {site} lies outside the lattice")
            want = self.qudit_dim ** len(term.support)
            for attr in ("h", "rx", "rp"):
                sched = getattr(term, attr)
                if sched is None:
                    continue
                if sched.dim != want:
                    raise ModelError(f"{term.name}.{attr} has dimension {sched.dim}, expected {want}")
                if self.check_norms and sched.max_norm() > 1 + NORM_TOL:
                    raise ModelError(f"{term.name}.{attr} has spectral norm above 1")
            if term.kernel_id is not None and term.kernel_id not in self.kernels:
                raise ModelError(f"{term.name} refers to unknown kernel {term.kernel_id!r}")

    @property
    def dimension(self):
        return len(self.extents)

    @property
    def sites(self):
        return list(itertools.product(*(range(e) for e in self.extents)))

    @property
    def n_sites(self):
        return math.prod(self.extents)

    def contains(self, site):
        return len(site) == self.dimension and all(0 <= c < e for c, e in zip(site, self.extents))

    def distance(self, x, y):
        """Chebyshev distance, wrapping on periodic axes."""
        best = 0
        for a, b, e, p in zip(x, y, self.extents, self.periodic):
            d = abs(a - b)
            if p:
                d = min(d, e - d)
            best = max(best, d)
        return best

    def diameter(self, sites):
        sites = list(sites)
        return max((self.distance(a, b) for a, b in itertools.combinations(sites, 2)), default=0)

    def term(self, name):
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def upper_bound(self):
        """Kernel dominating every quadrature-pair kernel of the model."""
        members = []
        for ident in sorted({t.kernel_id for t in self.terms if t.coupled}):
            entry = self.kernels[ident]
            if isinstance(entry, MemoryKernel):
                members.append(scaled_kernel(entry, VACUUM_QUADRATURE_FACTOR))
            else:
                members.extend(entry.values())
        if not members:
            return UpperBoundKernel()
        return build_upper_bound(members)


def site_index(model, site):
    return model.sites.index(tuple(site))


@dataclass(frozen=True)
class GeometryStats:
    a0: int
    Z: int

    def __iter__(self):
        yield self.a0
        yield self.Z


def geometry_stats(model):
    if not model.terms:
        return GeometryStats(0, 1)
    supports = [set(t.support) for t in model.terms]
    a0 = max(model.diameter(s) for s in supports)
    Z = max(sum(1 for t in supports if s & t) for s in supports)
    return GeometryStats(a0, Z)


def neighbourhood(model, X, l):
    """All sites within Chebyshev distance ``l`` of ``X``."""
    X = [tuple(x) for x in X]
    return {s for s in model.sites if min(model.distance(s, x) for x in X) <= l}


def restrict(model, X, l):
    """Keep the terms whose support meets the ``l``-neighbourhood of ``X``."""
    X = [tuple(int(c) for c in x) for x in X]
    if not X:
        raise ModelError("X must be nonempty")
    if l < 0:
        raise ModelError("l must be nonnegative")
    for x in X:
        if not model.contains(x):
            raise ModelError(f"site {x} lies outside the lattice")
    region = neighbourhood(model, X, l)
    kept = tuple(t for t in model.terms if region.intersection(t.support))
    used = {t.kernel_id for t in kept if t.kernel_id is not None}
    kernels = {k: v for k, v in model.kernels.items() if k in used}
    return replace(model, terms=kept, kernels=kernels, check_norms=False)


# --------------------------------------------------------------------------
# bound calculators


def lr_velocity(a0, Z, tv_u):
    if min(a0, Z, tv_u) < 0:
        raise ModelError("velocity inputs must be nonnegative")
    return math.e * a0 * Z * (1 + 56 * tv_u)


def prop1_bound(o_norm, diam_x, l, t_minus_tprime, a0, Z, tv_u, d):
    """Light-cone bound on the restriction error for ``|t - t'|``."""
    if a0 <= 0:
        raise ModelError("prop1_bound needs a0 > 0; single-site supports give a degenerate geometry")
    if l < 0 or t_minus_tprime < 0:
        raise ModelError("need l >= 0 and t >= t'")
    v = lr_velocity(a0, Z, tv_u)
    shell = (diam_x + 2 * l + a0) ** d - (diam_x + 2 * l) ** d
    if o_norm == 0 or t_minus_tprime == 0:
        return 0.0
    try:
        growth = math.expm1(v * t_minus_tprime / a0)
    except OverflowError:
        return math.inf
    return o_norm * math.exp(-1) * a0**d * Z / v * shell * math.exp(-l / a0) * growth


def log_prop1_bound(o_norm, diam_x, l, t_minus_tprime, a0, Z, tv_u, d):
    """Natural log of :func:`prop1_bound`, usable where the bound overflows."""
    if a0 <= 0:
        raise ModelError("prop1_bound needs a0 > 0")
    if o_norm == 0 or t_minus_tprime == 0:
        return -math.inf
    v = lr_velocity(a0, Z, tv_u)
    shell = (diam_x + 2 * l + a0) ** d - (diam_x + 2 * l) ** d
    x = v * t_minus_tprime / a0
    growth = x + math.log1p(-math.exp(-x)) if x > 30 else math.log(math.expm1(x))
    return math.log(o_norm * math.exp(-1) * a0**d * Z / v * shell) - l / a0 + growth


# --------------------------------------------------------------------------
# json


SCHEMA = "liebsim.model/1"


def model_to_dict(model):
    terms = []
    for t in model.terms:
        d = {"name": t.name, "support": [list(s) for s in t.support]}
        for attr in ("h", "rx", "rp"):
            sched = getattr(t, attr)
            if sched is not None:
                d[attr] = sched.to_list()
        if t.kernel_id is not None:
            d["kernel"] = t.kernel_id
        terms.append(d)
    kernels = {}
    for k, v in model.kernels.items():
        if isinstance(v, MemoryKernel):
            kernels[k] = {"vacuum": v.to_dict()}
        else:
            kernels[k] = {pair: K.to_dict() for pair, K in v.items()}
    return {"schema": SCHEMA, "extents": list(model.extents), "qudit_dim": model.qudit_dim,
            "periodic": list(model.periodic), "terms": terms, "kernels": kernels}


MODEL_KEYS = {"schema", "dimension", "extents", "qudit_dim", "periodic", "terms", "kernels"}
TERM_KEYS = {"name", "support", "h", "rx", "rp", "kernel"}


def model_from_dict(d, check_norms=True):
    unknown = set(d) - MODEL_KEYS
    if unknown:
        raise ModelError(f"unknown model keys: {sorted(unknown)}")
    if "dimension" in d and int(d["dimension"]) != len(d["extents"]):
        raise ModelError("dimension does not match extents")
    kernels = {}
    for k, v in d.get("kernels", {}).items():
        if "vacuum" in v:
            kernels[k] = MemoryKernel.from_dict(v["vacuum"])
        else:
            kernels[k] = {pair: MemoryKernel.from_dict(kd) for pair, kd in v.items()}
    terms = []
    for td in d.get("terms", []):
        unknown = set(td) - TERM_KEYS
        if unknown:
            raise ModelError(f"unknown term keys: {sorted(unknown)}")
        terms.append(InteractionTerm(
            support=tuple(tuple(s) for s in td["support"]),
            h=Schedule.from_json(td["h"]) if "h" in td else None,
            rx=Schedule.from_json(td["rx"]) if "rx" in td else None,
            rp=Schedule.from_json(td["rp"]) if "rp" in td else None,
            kernel_id=td.get("kernel"),
            name=td.get("name", ""),
        ))
    return LatticeModel(tuple(d["extents"]), int(d.get("qudit_dim", 2)), tuple(terms), kernels,
                        tuple(d.get("periodic", ())), check_norms)


# --------------------------------------------------------------------------
# common builders


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def heisenberg_pair(jx=1.0, jy=1.0, jz=1.0):
    """``(jx XX + jy YY + jz ZZ)`` scaled to unit spectral norm."""
    m = jx * np.kron(PAULI["X"], PAULI["X"]) + jy * np.kron(PAULI["Y"], PAULI["Y"]) + jz * np.kron(PAULI["Z"], PAULI["Z"])
    return m / np.linalg.norm(m, 2)


def chain_model(n, pair=None, onsite=None, rx=None, rp=None, kernel=None, periodic=False):
    """1D qubit chain with nearest-neighbour pair terms and optional on-site bath couplings.

    Each site gets its own on-site term ``s{i}`` carrying ``onsite`` and, when
    ``kernel`` is given, a bath coupling through ``rx``/``rp``.
    """
    terms = []
    if pair is not None:
        for i in range(n - 1 + (1 if periodic and n > 2 else 0)):
            terms.append(InteractionTerm(((i,), ((i + 1) % n,)), h=pair, name=f"p{i}"))
    kernels = {}
    if kernel is not None:
        kernels["bath"] = kernel
    if onsite is not None or kernel is not None:
        for i in range(n):
            terms.append(InteractionTerm(
                ((i,),), h=onsite,
                rx=rx if kernel is not None else None,
                rp=rp if kernel is not None else None,
                kernel_id="bath" if kernel is not None else None, name=f"s{i}"))
    return LatticeModel((n,), 2, tuple(terms), kernels, (periodic,))
