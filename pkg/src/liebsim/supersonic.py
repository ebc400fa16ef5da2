"""Supersonic excitation transport through pumped oscillators.

A chain of ``n`` qubits is coupled to ``n - 1`` single-mode baths; bath
``a`` interacts with qubits ``a`` and ``a + 1``. The protocol pumps ``T``
photons into every oscillator, flips the first qubit and then hands the
excitation down the chain in slots of length ``1/sqrt(T)``.

Qubits and oscillators are numbered from 1 in reports, sites from 0 in the
underlying lattice model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .chain import ChainCoefficients
from .dynamics import EvolutionConfig, QuantumState, evolve
from .hamiltonian import Layout, LocalPiece, assemble, build_dilated_hamiltonian, dilated_layout, local_pieces
from .kernels import BoxPart, MemoryKernel
from .lattice import (InteractionTerm, LatticeModel, ModelError, Pulse, Schedule, Window, geometry_stats,
                      log_prop1_bound, restrict)
from .quadrature import adaptive_simpson

SPLIT_TOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
NUMBER = np.diag([0.0, 1.0]).astype(complex)


class ProtocolError(ValueError):
    pass


def xi(s, shape="bump"):
    """Pulse of area pi/2 supported on [0, 1]."""
    return Pulse(0.0, 1.0, math.pi / 2, shape)(s)


def xi_constant():
    """Prefactor ``c`` of ``c exp(-1/(1-(2s-1)^2))``."""
    return Pulse(0.0, 1.0, math.pi / 2).peak * math.e


def _coupling_pair(L):
    """``L a + L^dag a^dag = x R^x + p R^p``."""
    rx = (L + L.conj().T) / math.sqrt(2)
    rp = 1j * (L - L.conj().T) / math.sqrt(2)
    return rx, rp


@dataclass(frozen=True)
class Protocol:
    m: int
    n: int
    shape: str = "bump"

    def __post_init__(self):
        if self.m < 1:
            raise ProtocolError("m must be at least 1")
        if self.n < self.distance + 1:
            raise ProtocolError(f"need at least {self.distance + 1} qubits for m = {self.m}")

    @property
    def T(self):
        return self.m * self.m

    @property
    def distance(self):
        """``T sqrt(T)``: the number of hand-offs."""
        return self.m**3

    @property
    def target(self):
        """1-based index of the qubit that receives the excitation."""
        return self.distance + 1

    @property
    def duration(self):
        return 3 * self.T + 1

    @property
    def n_baths(self):
        return self.n - 1

    # pulses ---------------------------------------------------------------

    def omega_pulses(self):
        return [Pulse(2.0 * j, 1.0, math.pi / 2, self.shape) for j in range(self.T)]

    def g_pulses(self):
        return [Pulse(2.0 * j + 1, 1.0, math.pi / 2 / math.sqrt(j + 1), self.shape) for j in range(self.T)]

    def ex_pulse(self):
        return Pulse(2.0 * self.T, 1.0, math.pi / 2, self.shape)

    def prop_pulse(self, i):
        """Slot of block ``i`` (1-based): qubits ``i, i+1`` and oscillator ``i``."""
        w = 1.0 / self.m
        return Pulse(2.0 * self.T + 1 + (i - 1) * w, w, math.pi / 2 * w, self.shape)

    def Omega(self, t):
        return sum(p(t) for p in self.omega_pulses())

    def g(self, t):
        return sum(p(t) for p in self.g_pulses())

    def g_i(self, i, t):
        return self.prop_pulse(i)(t) if 1 <= i <= self.distance else 0.0

    # model ----------------------------------------------------------------

    def model(self):
        """Lattice model with one coupling term per bath.

        Pulse peaks exceed unit norm, so the norm check is disabled. Each
        bath kernel has modulus 1 at all lags; it is stored truncated to the
        protocol window.
        """
        lower = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
        jc_rx, jc_rp = _coupling_pair(lower.conj().T)  # a^dag sigma + h.c.
        L2 = np.zeros((4, 4), dtype=complex)
        L2[1, 2] = 1.0  # |0_i 1_{i+1}><1_i 0_{i+1}|
        hop_rx, hop_rp = _coupling_pair(L2)
        eye = np.eye(2)
        terms = []
        for q in range(1, self.n):
            terms.append(InteractionTerm(((q - 1,),), h=Schedule([(p, SIGMA_X) for p in self.omega_pulses()]),
                                         name=f"pump{q}"))
        terms.append(InteractionTerm(((0,),), h=Schedule([(self.ex_pulse(), SIGMA_X)]), name="ex"))
        for a in range(1, self.n):
            rx = [(p, np.kron(jc_rx, eye)) for p in self.g_pulses()]
            rp = [(p, np.kron(jc_rp, eye)) for p in self.g_pulses()]
            if a <= self.distance:
                rx.append((self.prop_pulse(a), hop_rx))
                rp.append((self.prop_pulse(a), hop_rp))
            terms.append(InteractionTerm(((a - 1,), (a,)), rx=Schedule(rx), rp=Schedule(rp),
                                         kernel_id="mode", name=f"bath{a}"))
        kernel = MemoryKernel(BoxPart(1.0, float(self.duration)))
        return LatticeModel((self.n,), 2, tuple(terms), {"mode": kernel}, check_norms=False)

    def chains(self, model=None):
        model = model or self.model()
        single = ChainCoefficients(1.0, (0.0,), ())
        return {t.name: single for t in model.terms if t.coupled}


def build_protocol(m, n=None, shape="bump"):
    """Protocol for ``T = m^2``; ``n`` defaults to ``T sqrt(T) + 2`` qubits."""
    if m < 1:
        raise ProtocolError("m must be at least 1")
    return Protocol(int(m), int(n) if n is not None else m**3 + 2, shape)


# --------------------------------------------------------------------------
# block-product simulation


@dataclass
class BlockRecord:
    t0: float
    t1: float
    factors: list
    pieces: list
    before: np.ndarray
    after: np.ndarray


@dataclass
class ProductState:
    """State as a list of ``(factor ids, amplitudes)`` tensor factors."""

    dims: list
    parts: list

    @classmethod
    def vacuum(cls, dims):
        parts = []
        for f, d in enumerate(dims):
            v = np.zeros(d, dtype=complex)
            v[0] = 1.0
            parts.append(([f], v))
        return cls(list(dims), parts)

    def part_of(self, f):
        for k, (ids, _) in enumerate(self.parts):
            if f in ids:
                return k
        raise KeyError(f)

    def merge(self, factor_ids):
        """Combine the parts holding ``factor_ids`` into one part; returns its index."""
        idx = sorted({self.part_of(f) for f in factor_ids})
        ids, vec = [], np.ones(1, dtype=complex)
        for k in idx:
            ids = ids + self.parts[k][0]
            vec = np.kron(vec, self.parts[k][1])
        order = sorted(range(len(ids)), key=lambda j: ids[j])
        tens = vec.reshape([self.dims[f] for f in ids]).transpose(order).reshape(-1)
        ids = [ids[j] for j in order]
        self.parts = [p for k, p in enumerate(self.parts) if k not in idx] + [(ids, tens)]
        return len(self.parts) - 1

    def split(self, k, tol=SPLIT_TOL):
        """Split single factors off part ``k`` while they are unentangled.

        Returns the smallest single-factor purity seen.
        """
        ids, vec = self.parts.pop(k)
        worst = 1.0
        pending = [(ids, vec)]
        done = []
        while pending:
            ids, vec = pending.pop()
            if len(ids) == 1:
                done.append((ids, vec))
                continue
            shape = [self.dims[f] for f in ids]
            tens = vec.reshape(shape)
            for j, f in enumerate(ids):
                mat = np.moveaxis(tens, j, 0).reshape(shape[j], -1)
                u, s, vh = np.linalg.svd(mat, full_matrices=False)
                purity = float(np.sum(s**4) / np.sum(s**2) ** 2)
                worst = min(worst, purity)
                if s.size < 2 or s[1] ** 2 <= tol * s[0] ** 2:
                    rest = [g for g in ids if g != f]
                    pending.append(([f], u[:, 0] * s[0]))
                    pending.append((rest, vh[0]))
                    break
            else:
                done.append((ids, vec))
        self.parts.extend(done)
        return worst

    def full(self):
        k = self.merge(list(range(len(self.dims))))
        return self.parts[k][1]

    def populations(self, f):
        ids, vec = self.parts[self.part_of(f)]
        tens = vec.reshape([self.dims[g] for g in ids])
        probs = np.abs(np.moveaxis(tens, ids.index(f), 0)) ** 2
        return probs.reshape(self.dims[f], -1).sum(axis=1)

    def norm(self):
        return math.prod(float(np.linalg.norm(v)) for _, v in self.parts)


def _active(env, a, b):
    lo, hi = env.span
    if isinstance(env, Window) and env.value == 0:
        return False
    return lo < b and hi > a


def strip_identities(piece, dims, tol=1e-14):
    """Drop factors on which the piece acts as the identity."""
    op, factors = np.asarray(piece.op), list(piece.factors)
    changed = True
    while changed and len(factors) > 1:
        changed = False
        shape = [dims[f] for f in factors]
        k = len(factors)
        tens = op.reshape(shape + shape)
        for j in range(k):
            d = shape[j]
            reduced = np.trace(tens, axis1=j, axis2=k + j) / d
            rest = shape[:j] + shape[j + 1:]
            red = reduced.reshape(math.prod(rest), math.prod(rest))
            rebuilt = np.moveaxis(np.multiply.outer(np.eye(d), reduced), [0, 1], [j, k + j])
            if np.max(np.abs(rebuilt - tens)) <= tol * max(1.0, np.max(np.abs(op))):
                op, factors = red, factors[:j] + factors[j + 1:]
                changed = True
                break
    return LocalPiece(piece.env, op, factors)


def _blocks(pieces):
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p in pieces:
        root = find(p.factors[0])
        for f in p.factors[1:]:
            parent[find(f)] = root
    groups = {}
    for p in pieces:
        groups.setdefault(find(p.factors[0]), []).append(p)
    return list(groups.values())


def _block_assembly(pieces, ids, dims, layout, n_max):
    local = {f: k for k, f in enumerate(ids)}
    sub_dims = [dims[f] for f in ids]
    modes = {name: [local[f] for f in fs if f in local] for name, fs in layout.mode_factors.items()}
    sub_layout = Layout(sub_dims, {}, {k: v for k, v in modes.items() if v})
    shifted = [LocalPiece(p.env, p.op, [local[f] for f in p.factors]) for p in pieces]
    return assemble(sub_layout, shifted, n_max)


def _block_key(block, ids, dims, a, b, vec):
    local = {f: k for k, f in enumerate(ids)}
    parts = tuple(sorted((repr(p.env), np.asarray(p.op).tobytes(), tuple(local[f] for f in p.factors))
                         for p in block))
    return a, b, tuple(dims[f] for f in ids), parts, vec.tobytes()


@dataclass
class BlockRun:
    state: ProductState
    layout: Layout
    records: list = field(default_factory=list)
    min_purity: float = 1.0
    max_norm_error: float = 0.0


def simulate_blocks(model, chains, n_max, t0, t1, cfg=None, state=None, keep_records=True):
    """Evolve a product state, one connected block of active terms at a time.

    Between consecutive envelope checkpoints the active terms are grouped
    into connected blocks of tensor factors; each block is merged, evolved
    and split back into single factors wherever it is unentangled.
    """
    cfg = cfg or EvolutionConfig(n_max=n_max, leakage="error")
    layout = dilated_layout(model, chains, n_max)
    pieces = [strip_identities(p, layout.dims) for p in local_pieces(model, chains, n_max, layout)]
    state = state or ProductState.vacuum(layout.dims)
    run = BlockRun(state, layout)
    cuts = {t0, t1}
    for p in pieces:
        lo, hi = p.env.span
        cuts.update(x for x in (lo, hi) if t0 < x < t1)
    cuts = sorted(cuts)
    memo = {}
    for a, b in zip(cuts[:-1], cuts[1:]):
        active = [p for p in pieces if _active(p.env, a, b)]
        for block in _blocks(active):
            ids = sorted({f for p in block for f in p.factors})
            k = state.merge(ids)
            ids, vec = state.parts[k]
            # identical blocks (same pieces, window and input) recur across the chain
            key = _block_key(block, ids, layout.dims, a, b, vec)
            out = memo.get(key)
            if out is None:
                asm = _block_assembly(block, ids, layout.dims, layout, n_max)
                out = evolve(asm, QuantumState(vec, asm.dims), a, b, cfg).amplitudes
                memo[key] = out
            out = out.copy()
            run.max_norm_error = max(run.max_norm_error, abs(np.linalg.norm(out) - np.linalg.norm(vec)))
            if keep_records:
                run.records.append(BlockRecord(a, b, list(ids), block, vec.copy(), out.copy()))
            state.parts[k] = (ids, out)
            run.min_purity = min(run.min_purity, state.split(k))
    return run


def _envelope_area(env, a, b):
    if isinstance(env, Window):
        lo, hi = max(a, env.t0), min(b, env.t1)
        return env.value * max(hi - lo, 0.0)
    lo, hi = max(a, env.span[0]), min(b, env.span[1])
    if hi <= lo:
        return 0.0
    return adaptive_simpson(np.vectorize(env), lo, hi, 1e-14)


def oracle_block(record, dims, layout, n_max):
    """Reference propagation of one block record.

    Mutually commuting pieces are exponentiated exactly from their
    integrated envelopes; otherwise the Schroedinger equation is integrated
    with a high-order Runge-Kutta method.
    """
    asm = _block_assembly(record.pieces, record.factors, dims, layout, n_max)
    mats = [M.toarray() for _, M in asm.pieces]
    static = asm.static.toarray()
    commuting = all(np.max(np.abs(A @ B - B @ A), initial=0.0) < 1e-12
                    for i, A in enumerate(mats + [static]) for B in (mats + [static])[i + 1:])
    if commuting:
        gen = static * (record.t1 - record.t0)
        for (env, _), M in zip(asm.pieces, mats):
            gen = gen + _envelope_area(env, record.t0, record.t1) * M
        return expm(-1j * gen) @ record.before

    def rhs(t, y):
        return -1j * (asm.at(t) @ y)

    sol = solve_ivp(rhs, (record.t0, record.t1), record.before, method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1]


def verify_blocks(run, n_max):
    """Largest deviation between recorded block outputs and the oracle."""
    worst, memo = 0.0, {}
    for rec in run.records:
        key = _block_key(rec.pieces, rec.factors, run.layout.dims, rec.t0, rec.t1, rec.before)
        if key not in memo:
            memo[key] = oracle_block(rec, run.layout.dims, run.layout, n_max)
        worst = max(worst, float(np.linalg.norm(memo[key] - rec.after)))
    return worst


# --------------------------------------------------------------------------
# protocol runs


@dataclass
class ProtocolResult:
    qubits: np.ndarray  # <n_k> for qubits 1..n
    oscillators: np.ndarray  # <a^dag a> for oscillators 1..n-1
    min_purity: float = 1.0
    max_norm_error: float = 0.0
    run: BlockRun | None = None


def _occupations(state, layout, model):
    qubits = np.array([state.populations(layout.site_factor[s])[1] for s in model.sites])
    osc = []
    for a in range(1, model.n_sites):
        fs = layout.mode_factors.get(f"bath{a}")
        if fs is None:
            osc.append(0.0)
            continue
        pops = state.populations(fs[0])
        osc.append(float(np.arange(pops.size) @ pops))
    return qubits, np.array(osc)


def _default_cfg(p, n_max):
    return EvolutionConfig(dt=1.0 / (64 * p.m), n_max=n_max, leakage="error")


def simulate_protocol(p, n_max=None, t_end=None, cfg=None, keep_records=True):
    """Block-product simulation of the full protocol up to ``t_end``."""
    n_max = p.T + 2 if n_max is None else n_max
    if n_max < p.T + 2:
        raise ProtocolError(f"n_max must be at least T + 2 = {p.T + 2}")
    model = p.model()
    chains = p.chains(model)
    t_end = p.duration if t_end is None else t_end
    run = simulate_blocks(model, chains, n_max, 0.0, t_end, cfg or _default_cfg(p, n_max),
                          keep_records=keep_records)
    q, o = _occupations(run.state, run.layout, model)
    return ProtocolResult(q, o, run.min_purity, run.max_norm_error, run)


def simulate_full_space(p, n_max=None, cfg=None):
    """Reference run on the whole Hilbert space (small ``m`` only)."""
    n_max = p.T + 2 if n_max is None else n_max
    model = p.model()
    asm = build_dilated_hamiltonian(model, p.chains(model), n_max)
    psi = np.zeros(asm.dimension, dtype=complex)
    psi[0] = 1.0
    out = evolve(asm, QuantumState(psi, asm.dims), 0.0, p.duration, cfg or _default_cfg(p, n_max))
    qubits = np.array([out.populations(asm.site_factor[s])[1] for s in model.sites])
    osc = np.array([float(np.arange(n_max) @ out.populations(asm.mode_factors[f"bath{a}"][0]))
                    for a in range(1, p.n)])
    return ProtocolResult(qubits, osc)


def simulate_restricted(p, l, n_max=None, cfg=None):
    """Evolution under the terms within distance ``l`` of the target qubit."""
    if l < 0 or l >= p.distance:
        raise ProtocolError(f"need 0 <= l < T sqrt(T) = {p.distance}; larger l would include the excitation pulse")
    n_max = p.T + 2 if n_max is None else n_max
    model = restrict(p.model(), [(p.target - 1,)], l)
    chains = p.chains(model)
    run = simulate_blocks(model, chains, n_max, 0.0, p.duration, cfg or _default_cfg(p, n_max),
                          keep_records=False)
    q, o = _occupations(run.state, run.layout, model)
    if np.max(q) > 1e-9:
        raise ProtocolError(f"restricted dynamics excited a qubit (population {np.max(q):.3g})")
    return ProtocolResult(q, o, run.min_purity, run.max_norm_error, run)


def critical_m(tv, Z=5, a0=1):
    """Smallest ``m`` for which the light-cone bound at ``l = m^3 - 1``, ``t = 3m^2 + 1`` drops below 1."""
    def log_bound(m):
        return log_prop1_bound(1.0, 0, m**3 - 1, 3 * m * m + 1, a0, Z, tv, 1)

    hi = 1
    while log_bound(hi) >= 0:
        hi *= 2
        if hi > 1 << 40:
            raise ProtocolError("no crossover found")
    lo = max(1, hi // 2)
    while lo < hi:
        mid = (lo + hi) // 2
        if log_bound(mid) < 0:
            hi = mid
        else:
            lo = mid + 1
    return lo


@dataclass
class ViolationReport:
    m: int
    l: int
    t: float
    n_full: float
    n_restricted: float
    rows: list  # (tv, log10 bound, critical m)

    @property
    def delta(self):
        return abs(self.n_full - self.n_restricted)

    def to_dict(self):
        return {"schema": "liebsim.violation/1", "m": self.m, "l": self.l, "t": self.t,
                "n_full": self.n_full, "n_restricted": self.n_restricted, "delta": self.delta,
                "surrogates": [{"tv": tv, "log10_bound": lb, "critical_m": cm} for tv, lb, cm in self.rows]}


def bound_violation_report(p, l, full, restricted, tv_values=(1.0, 10.0, 100.0, 1e3, 1e4)):
    """Observed deviation against the light-cone bound for finite TV surrogates.

    For each surrogate the bound is evaluated at this ``(l, t)`` and the
    smallest protocol size at which it would fall below 1 is listed: the
    protocol exceeds it for every larger ``m``.
    """
    model = p.model()
    a0, Z = geometry_stats(model)
    t = float(p.duration)
    k = p.target - 1
    rows = []
    for tv in tv_values:
        lb = log_prop1_bound(1.0, 0, l, t, a0, Z, tv, 1) / math.log(10)
        rows.append((float(tv), lb, critical_m(tv, Z, a0)))
    return ViolationReport(p.m, int(l), t, float(full.qubits[k]), float(restricted.qubits[k]), rows)
