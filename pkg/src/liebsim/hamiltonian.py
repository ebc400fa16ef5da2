"""Sparse assembly of the dilated Hamiltonian on sites plus chain modes."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lattice import Window

DEFAULT_DIM_CAP = 1 << 24
HERMITIAN_TOL = 1e-12


class DimensionCapError(ValueError):
    def __init__(self, dim, cap, what="composite space"):
        self.dim, self.cap = dim, cap
        super().__init__(f"{what} has dimension {dim}, above the cap {cap}")


def dimension_cap(override=None):
    if override is not None:
        return int(override)
    env = os.environ.get("LIEBSIM_DIM_CAP")
    return int(env) if env else DEFAULT_DIM_CAP


# --------------------------------------------------------------------------
# local operators


def annihilation(n_max):
    return np.diag(np.sqrt(np.arange(1, n_max, dtype=float)), 1).astype(complex)


def quadratures(n_max):
    b = annihilation(n_max)
    x = (b + b.conj().T) / math.sqrt(2)
    p = (b - b.conj().T) / (math.sqrt(2) * 1j)
    return x, p


def embed(op, factors, dims):
    """Sparse ``op`` acting on ``factors`` (increasing order) of the product space ``dims``."""
    factors = list(factors)
    if factors != sorted(factors) or len(set(factors)) != len(factors):
        raise ValueError("factors must be distinct and increasing")
    dims = list(dims)
    local = [dims[f] for f in factors]
    op = sp.coo_matrix(op)
    if op.shape != (math.prod(local),) * 2:
        raise ValueError("operator shape does not match the factor dimensions")
    strides = np.ones(len(dims), dtype=np.int64)
    for k in range(len(dims) - 2, -1, -1):
        strides[k] = strides[k + 1] * dims[k + 1]

    def offsets(idx_factors):
        sub = [dims[f] for f in idx_factors]
        digits = np.indices(sub).reshape(len(sub), -1) if sub else np.zeros((0, 1), dtype=np.int64)
        return (strides[idx_factors, None] * digits).sum(axis=0) if sub else np.zeros(1, dtype=np.int64)

    rest = [f for f in range(len(dims)) if f not in factors]
    off_rest = offsets(np.asarray(rest, dtype=np.int64))
    loc = offsets(np.asarray(factors, dtype=np.int64))
    rows = (off_rest[:, None] + loc[op.row][None, :]).ravel()
    cols = (off_rest[:, None] + loc[op.col][None, :]).ravel()
    vals = np.broadcast_to(op.data, (off_rest.size, op.data.size)).ravel()
    D = math.prod(dims)
    return sp.csr_matrix((vals, (rows, cols)), shape=(D, D))


# --------------------------------------------------------------------------
# assembly


@dataclass
class HamiltonianAssembly:
    """``H(t) = static + sum_k f_k(t) M_k`` on a product space.

    ``site_factor`` maps lattice sites to factor indices, ``mode_factors``
    maps a term name to the factor indices of its chain modes.
    """

    dims: list
    static: sp.csr_matrix
    pieces: list = field(default_factory=list)
    site_factor: dict = field(default_factory=dict)
    mode_factors: dict = field(default_factory=dict)
    n_max: int = 0

    @property
    def dimension(self):
        return math.prod(self.dims)

    @property
    def is_static(self):
        return not self.pieces

    def at(self, t):
        H = self.static
        for env, M in self.pieces:
            c = env(t)
            if c:
                H = H + c * M
        return H

    def checkpoints(self):
        pts = set()
        for env, _ in self.pieces:
            lo, hi = env.span
            pts.update(x for x in (lo, hi) if math.isfinite(x))
        return sorted(pts)

    def mode_factor_list(self):
        return [f for fs in self.mode_factors.values() for f in fs]

    def dense(self, t=0.0):
        return self.at(t).toarray()


def _is_constant(env):
    return isinstance(env, Window) and env.t0 == -math.inf and env.t1 == math.inf


@dataclass
class LocalPiece:
    """``env(t) * op`` acting on the listed factors (increasing order)."""

    env: object
    op: np.ndarray
    factors: list


@dataclass
class Layout:
    dims: list
    site_factor: dict
    mode_factors: dict

    @property
    def dimension(self):
        return math.prod(self.dims)


def dilated_layout(model, chains, n_max, sites=None):
    """Factor order: sites (lattice order), then each coupled term's chain modes in term order."""
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    if sites is None:
        sites = model.sites
    else:
        wanted = {tuple(s) for s in sites}
        sites = [s for s in model.sites if s in wanted]
    site_factor = {s: i for i, s in enumerate(sites)}
    dims = [model.qudit_dim] * len(sites)
    mode_factors = {}
    for term in model.terms:
        if not term.coupled:
            continue
        if term.name not in chains:
            raise ValueError(f"no chain supplied for coupled term {term.name}")
        n = chains[term.name].n_modes
        mode_factors[term.name] = list(range(len(dims), len(dims) + n))
        dims.extend([n_max] * n)
    return Layout(dims, site_factor, mode_factors)


def local_pieces(model, chains, n_max, layout):
    x, p = quadratures(n_max)
    b = annihilation(n_max)
    num = b.conj().T @ b
    hop = np.kron(b.conj().T, b)
    hop = hop + hop.conj().T
    out = []
    for term in model.terms:
        try:
            fs = [layout.site_factor[s] for s in term.support]
        except KeyError as exc:
            raise ValueError(f"term {term.name} acts outside the selected sites") from exc
        if term.h is not None:
            out.extend(LocalPiece(env, M, fs) for env, M in term.h.pieces)
        if not term.coupled:
            continue
        chain = chains[term.name]
        modes = layout.mode_factors[term.name]
        for sched, quad in ((term.rx, x), (term.rp, p)):
            if sched is None or chain.g == 0:
                continue
            out.extend(LocalPiece(env, chain.g * np.kron(M, quad), fs + [modes[0]]) for env, M in sched.pieces)
        for j, om in enumerate(chain.omegas):
            if om:
                out.append(LocalPiece(Window(), om * num, [modes[j]]))
        for j, tj in enumerate(chain.hoppings):
            out.append(LocalPiece(Window(), tj * hop, [modes[j], modes[j + 1]]))
    return out


def assemble(layout, pieces, n_max=0, check_hermitian=True):
    """Embed local pieces; constant pieces are summed into the static part."""
    D = layout.dimension
    static = sp.csr_matrix((D, D), dtype=complex)
    timed = []
    for piece in pieces:
        M = embed(piece.op, piece.factors, layout.dims)
        if _is_constant(piece.env):
            static = static + piece.env.value * M
        else:
            timed.append((piece.env, M))
    static = static.tocsr()
    static.sum_duplicates()
    asm = HamiltonianAssembly(list(layout.dims), static, timed, dict(layout.site_factor),
                              dict(layout.mode_factors), n_max)
    if check_hermitian:
        assert_hermitian(asm)
    return asm


def build_dilated_hamiltonian(model, chains, n_max, sites=None, dim_cap=None, check_hermitian=True):
    """Dilated Hamiltonian with one chain per coupled term.

    ``chains`` maps term names to :class:`ChainCoefficients`. ``sites``
    restricts the site factors to a subset; every term must act inside it.
    """
    layout = dilated_layout(model, chains, n_max, sites)
    cap = dimension_cap(dim_cap)
    if layout.dimension > cap:
        raise DimensionCapError(layout.dimension, cap)
    return assemble(layout, local_pieces(model, chains, n_max, layout), n_max, check_hermitian)


def assert_hermitian(asm, tol=HERMITIAN_TOL):
    mats = [asm.static] + [M for _, M in asm.pieces]
    for M in mats:
        diff = M - M.conj().T
        if diff.nnz and np.max(np.abs(diff.data)) > tol:
            raise ValueError("assembled Hamiltonian is not Hermitian")


def touched_sites(model, X=()):
    """Sites acted on by some term of ``model``, together with ``X``."""
    out = {tuple(x) for x in X}
    for t in model.terms:
        out.update(t.support)
    return [s for s in model.sites if s in out]


def planned_dimension(model, chains, n_max, sites=None):
    n_sites = len(model.sites if sites is None else sites)
    modes = sum(chains[t.name].n_modes for t in model.terms if t.coupled)
    return model.qudit_dim**n_sites * n_max**modes


def chains_for_model(model, build):
    """One chain per coupled term; ``build(kernel)`` is called once per kernel id."""
    cache = {}
    out = {}
    for term in model.terms:
        if not term.coupled:
            continue
        if term.kernel_id not in cache:
            kernel = model.kernels[term.kernel_id]
            if not hasattr(kernel, "continuous"):
                raise ValueError("chain mapping needs a vacuum commutator kernel")
            cache[term.kernel_id] = build(kernel)
        out[term.name] = cache[term.kernel_id]
    return out

