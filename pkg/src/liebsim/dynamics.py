"""Pure-state evolution of dilated models and the light-cone experiment."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import DimensionCapError, build_dilated_hamiltonian, dimension_cap, planned_dimension, touched_sites
from .krylov import krylov_expm
from .lattice import geometry_stats, model_to_dict, prop1_bound, restrict
from .kernels import total_variation

NORM_TOL = 1e-9


class StiffnessError(RuntimeError):
    pass


class FockLeakageError(RuntimeError):
    pass


class FockLeakageWarning(RuntimeWarning):
    pass


@dataclass
class QuantumState:
    amplitudes: np.ndarray
    dims: list

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        self.dims = list(self.dims)
        if self.amplitudes.size != math.prod(self.dims):
            raise ValueError("amplitude count does not match the factor dimensions")

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self):
        return self.amplitudes.reshape(self.dims)

    def populations(self, factor):
        """Diagonal of the reduced density matrix on one factor."""
        probs = np.abs(self.tensor()) ** 2
        axes = tuple(k for k in range(len(self.dims)) if k != factor)
        return probs.sum(axis=axes)

    def reduced(self, factors):
        factors = list(factors)
        psi = np.moveaxis(self.tensor(), factors, list(range(len(factors))))
        d = math.prod(self.dims[f] for f in factors)
        psi = psi.reshape(d, -1)
        return psi @ psi.conj().T


@dataclass
class EvolutionConfig:
    dt: float = 0.05
    krylov_dim: int = 30
    tol: float = 1e-9
    krylov_tol: float = 1e-12
    n_max: int = 3
    dim_cap: int | None = None
    leakage_tol: float = 1e-6
    leakage: str = "warn"  # "warn", "error" or "ignore"
    max_halvings: int = 20

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2")
        if self.leakage not in ("warn", "error", "ignore"):
            raise ValueError("leakage must be 'warn', 'error' or 'ignore'")


def product_state(asm, site_states=None):
    """Product of local site vectors (default ``|0>``) with the chain vacuum."""
    site_states = site_states or {}
    psi = np.ones(1, dtype=complex)
    for site, f in sorted(asm.site_factor.items(), key=lambda kv: kv[1]):
        v = np.zeros(asm.dims[f], dtype=complex)
        if site in site_states:
            v = np.asarray(site_states[site], dtype=complex)
            v = v / np.linalg.norm(v)
        else:
            v[0] = 1.0
        psi = np.kron(psi, v)
    n_modes = len(asm.dims) - len(asm.site_factor)
    if n_modes:
        vac = np.zeros(math.prod(asm.dims[len(asm.site_factor):]), dtype=complex)
        vac[0] = 1.0
        psi = np.kron(psi, vac)
    return QuantumState(psi, asm.dims)


def _check_leakage(asm, state, cfg):
    if cfg.leakage == "ignore":
        return 0.0
    worst = 0.0
    for f in asm.mode_factor_list():
        worst = max(worst, float(state.populations(f)[-1]))
    if worst > cfg.leakage_tol:
        msg = f"top Fock level population {worst:.3g} exceeds {cfg.leakage_tol:.3g}; increase n_max"
        if cfg.leakage == "error":
            raise FockLeakageError(msg)
        warnings.warn(msg, FockLeakageWarning, stacklevel=3)
    return worst


DENSE_STEP_LIMIT = 256


def _hamiltonian_at(asm):
    """Callable ``t -> H(t)``; small spaces use cached dense matrices."""
    if asm.dimension > DENSE_STEP_LIMIT:
        return asm.at
    static = asm.static.toarray()
    pieces = [(env, M.toarray()) for env, M in asm.pieces]

    def at(t):
        H = static.copy()
        for env, M in pieces:
            c = env(t)
            if c:
                H += c * M
        return H

    return at


def _step(H_at, psi, t, h, cfg):
    return krylov_expm(H_at(t + 0.5 * h), psi, h, cfg.krylov_dim, cfg.krylov_tol)


def _evolve_segment(asm, psi, t0, t1, cfg):
    asm = _hamiltonian_at(asm)
    h = min(cfg.dt, t1 - t0)
    h_min = cfg.dt * 2.0**-cfg.max_halvings
    t = t0
    while t1 - t > 1e-14 * max(1.0, abs(t1)):
        h = min(h, t1 - t)
        full = _step(asm, psi, t, h, cfg)
        half = _step(asm, _step(asm, psi, t, 0.5 * h, cfg), t + 0.5 * h, 0.5 * h, cfg)
        # midpoint rule is second order: the two results differ by 3/4 of the coarse local error
        err = 4.0 / 3.0 * np.linalg.norm(full - half)
        extrapolated = half + (half - full) / 3.0
        drift = abs(np.linalg.norm(extrapolated) - 1.0)
        if err <= cfg.tol and drift < NORM_TOL:
            psi = extrapolated / np.linalg.norm(extrapolated)
            t += h
            if err < cfg.tol / 16:
                h = min(cfg.dt, 2 * h)
            continue
        h *= 0.5
        if h < h_min:
            raise StiffnessError(f"step halved below dt*2^-{cfg.max_halvings} at t = {t:.6g}")
    return psi


def evolve(asm, psi0, t0, t1, cfg=None):
    """State at ``t1`` from ``psi0`` at ``t0`` under the (possibly time-dependent) assembly."""
    cfg = cfg or EvolutionConfig()
    if t1 < t0:
        raise ValueError("need t1 >= t0")
    if list(psi0.dims) != list(asm.dims):
        raise ValueError("state and Hamiltonian dimensions differ")
    psi = psi0.amplitudes.copy()
    if t1 > t0:
        if asm.is_static:
            psi = krylov_expm(asm.static, psi, t1 - t0, cfg.krylov_dim, cfg.krylov_tol)
        else:
            cuts = [c for c in asm.checkpoints() if t0 < c < t1]
            edges = [t0, *cuts, t1]
            for a, b in zip(edges[:-1], edges[1:]):
                psi = _evolve_segment(asm, psi, a, b, cfg)
    out = QuantumState(psi, asm.dims)
    if abs(out.norm - 1.0) > NORM_TOL:
        raise StiffnessError(f"norm drifted to {out.norm:.12g}")
    _check_leakage(asm, out, cfg)
    return out


def apply_local(state, op, factors):
    """``(op on factors) |psi>`` without forming the full matrix."""
    factors = list(factors)
    psi = np.moveaxis(state.tensor(), factors, list(range(len(factors))))
    shape = psi.shape
    d = math.prod(shape[:len(factors)])
    out = (np.asarray(op) @ psi.reshape(d, -1)).reshape(shape)
    return np.moveaxis(out, list(range(len(factors))), factors).reshape(-1)


def expectation(state, op, factors, tol=1e-10):
    op = np.asarray(op, dtype=complex)
    if np.max(np.abs(op - op.conj().T), initial=0.0) > 1e-12:
        raise ValueError("observable is not Hermitian")
    val = np.vdot(state.amplitudes, apply_local(state, op, factors))
    if abs(val.imag) > tol * max(1.0, np.linalg.norm(op, 2)):
        raise ValueError(f"expectation has imaginary part {val.imag:.3g}")
    return float(val.real)


def site_expectation(asm, state, op, X):
    return expectation(state, op, [asm.site_factor[tuple(x)] for x in X])


# --------------------------------------------------------------------------
# light cone


@dataclass
class LightconeResult:
    rows: list
    metadata: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l", "t", "delta", "bound"])
        for l, t, d, b in self.rows:
            w.writerow([l, f"{t:.12g}", f"{d:.12g}", f"{b:.12g}"])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"schema": "liebsim.lightcone/1", "metadata": self.metadata,
                           "rows": [{"l": l, "t": t, "delta": d, "bound": b} for l, t, d, b in self.rows]},
                          indent=1, sort_keys=True)

    def deltas(self, l):
        return [d for ll, _, d, _ in self.rows if ll == l]


def model_hash(model):
    text = json.dumps(model_to_dict(model), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _trajectory(model, chains, sites, O, X, t_values, site_states, cfg):
    asm = build_dilated_hamiltonian(model, chains, cfg.n_max, sites=sites, dim_cap=cfg.dim_cap)
    state = product_state(asm, site_states)
    out, t_prev = [], 0.0
    for t in t_values:
        state = evolve(asm, state, t_prev, t, cfg)
        t_prev = t
        out.append(site_expectation(asm, state, O, X))
    return out


def _restricted_job(args):
    model, chains, X, l, O, t_values, site_states, cfg = args
    sub = restrict(model, X, l)
    sites = touched_sites(sub, X)
    sub_chains = {t.name: chains[t.name] for t in sub.terms if t.coupled}
    dim = planned_dimension(sub, sub_chains, cfg.n_max, sites)
    if dim > dimension_cap(cfg.dim_cap):
        raise DimensionCapError(dim, dimension_cap(cfg.dim_cap), f"restriction at l = {l}")
    return _trajectory(sub, sub_chains, sites, O, X, t_values, site_states, cfg)


def lightcone_experiment(model, chains, O, X, l_values, t_values, site_states=None, cfg=None, jobs=1):
    """Deviation between full and restricted evolutions of ``<O_X>`` from a product state.

    ``chains`` maps coupled term names to chain coefficients; ``O`` acts on
    the sites of ``X`` in lattice order.
    """
    cfg = cfg or EvolutionConfig()
    X = [tuple(x) for x in X]
    t_values = sorted(float(t) for t in t_values)
    if any(t < 0 for t in t_values):
        raise ValueError("times must be nonnegative (t' = 0)")
    dim = planned_dimension(model, chains, cfg.n_max)
    if dim > dimension_cap(cfg.dim_cap):
        raise DimensionCapError(dim, dimension_cap(cfg.dim_cap), "full model")
    full = _trajectory(model, chains, None, O, X, t_values, site_states, cfg)
    jobs_args = [(model, chains, X, l, O, t_values, site_states, cfg) for l in l_values]
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            restricted = list(pool.map(_restricted_job, jobs_args))
    else:
        restricted = [_restricted_job(a) for a in jobs_args]
    a0, Z = geometry_stats(model)
    tv_u = total_variation(model.upper_bound())
    o_norm = float(np.linalg.norm(O, 2))
    diam = model.diameter(X)
    rows = []
    for l, traj in zip(l_values, restricted):
        for t, f, r in zip(t_values, full, traj):
            bound = prop1_bound(o_norm, diam, l, t, a0, Z, tv_u, model.dimension)
            rows.append((int(l), t, abs(f - r), bound))
    meta = {"model_hash": model_hash(model), "n_max": cfg.n_max, "a0": a0, "Z": Z, "tv_u": tv_u,
            "chains": {k: v.to_dict() for k, v in sorted(chains.items())}}
    return LightconeResult(rows, meta)


def fock_convergence_check(model, chains, O, X, t, n_max_list, site_states=None, cfg=None):
    """Observable at time ``t`` for each cutoff with successive differences."""
    cfg = cfg or EvolutionConfig()
    rows, prev = [], None
    for n in n_max_list:
        c = EvolutionConfig(**{**cfg.__dict__, "n_max": n, "leakage": "ignore"})
        val = _trajectory(model, chains, None, O, [tuple(x) for x in X], [t], site_states, c)[0]
        diff = None if prev is None else abs(val - prev)
        rows.append({"n_max": n, "value": val, "difference": diff,
                     "converged": diff is not None and diff < 1e-6})
        prev = val
    return rows
