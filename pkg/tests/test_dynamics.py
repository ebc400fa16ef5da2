import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liebsim import lattice as lat
from liebsim.chain import ChainCoefficients
from liebsim.dynamics import (EvolutionConfig, FockLeakageError, QuantumState, evolve, expectation,
                              fock_convergence_check, lightcone_experiment, product_state, site_expectation)
from liebsim.hamiltonian import (DimensionCapError, annihilation, build_dilated_hamiltonian, embed,
                                 planned_dimension, quadratures)
from liebsim.kernels import exponential_kernel
from liebsim.krylov import dense_expm_apply, krylov_expm

X, Y, Z = lat.PAULI["X"], lat.PAULI["Y"], lat.PAULI["Z"]
RAISE = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|
NUM = np.diag([0.0, 1.0]).astype(complex)


def jc_model():
    rx = (RAISE + RAISE.conj().T) / math.sqrt(2)
    rp = 1j * (RAISE - RAISE.conj().T) / math.sqrt(2)
    term = lat.InteractionTerm(((0,),), rx=rx, rp=rp, kernel_id="k", name="jc")
    return lat.LatticeModel((1,), 2, (term,), {"k": exponential_kernel()})


def random_hermitian(rng, n, norm=None):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = a + a.conj().T
    return h / np.linalg.norm(h, 2) * (norm or 1.0)


def random_state(rng, dims):
    v = rng.normal(size=math.prod(dims)) + 1j * rng.normal(size=math.prod(dims))
    return QuantumState(v / np.linalg.norm(v), dims)


# --------------------------------------------------------------------------
# assembly


def test_embed_matches_kron():
    rng = np.random.default_rng(1)
    dims = [2, 3, 2, 4]
    op = random_hermitian(rng, 2 * 4)
    got = embed(op, [0, 3], dims).toarray()
    # permute (0,3,1,2) ordering into (0,1,2,3)
    full = np.kron(op, np.eye(6)).reshape([2, 4, 3, 2] * 2)
    full = full.transpose(0, 2, 3, 1, 4, 6, 7, 5).reshape(48, 48)
    assert np.allclose(got, full)


def test_quadratures_commutator():
    x, p = quadratures(6)
    c = x @ p - p @ x
    # canonical away from the truncation edge
    assert np.allclose(c[:5, :5], 1j * np.eye(5))


def test_no_bath_gives_system_hamiltonian():
    m = lat.chain_model(3, pair=lat.heisenberg_pair(), onsite=0.3 * Z)
    asm = build_dilated_hamiltonian(m, {}, 3)
    I = np.eye(2)
    hp = lat.heisenberg_pair()
    H = np.kron(hp, I) + np.kron(I, hp) + 0.3 * sum(
        np.kron(np.kron(*(Z if k == j else I for k in range(2))), Z if j == 2 else I) for j in range(3))
    assert np.allclose(asm.dense(), H)


def test_zero_coupling_chain_decouples():
    m = lat.chain_model(1, onsite=Z, rx=X, kernel=exponential_kernel())
    asm = build_dilated_hamiltonian(m, {"s0": ChainCoefficients(0.0, (1.0,), ())}, 3)
    b = annihilation(3)
    H = np.kron(Z, np.eye(3)) + np.kron(np.eye(2), b.conj().T @ b)
    assert np.allclose(asm.dense(), H)


def test_rabi_hamiltonian():
    g, w = 0.7, 1.3
    m = lat.LatticeModel((1,), 2, (lat.InteractionTerm(((0,),), rx=X, kernel_id="k", name="r"),),
                         {"k": exponential_kernel()})
    asm = build_dilated_hamiltonian(m, {"r": ChainCoefficients(g, (w,), ())}, 5)
    b = annihilation(5)
    x = (b + b.conj().T) / math.sqrt(2)
    assert np.allclose(asm.dense(), g * np.kron(X, x) + w * np.kron(np.eye(2), b.conj().T @ b))


@given(st.integers(0, 10_000), st.integers(1, 2), st.integers(2, 3))
@settings(max_examples=15, deadline=None)
def test_random_models_hermitian(seed, n_modes, n_max):
    rng = np.random.default_rng(seed)
    terms = (lat.InteractionTerm(((0,), (1,)), h=random_hermitian(rng, 4), name="p"),
             lat.InteractionTerm(((0,),), rx=random_hermitian(rng, 2), rp=random_hermitian(rng, 2),
                                 kernel_id="k", name="b0"),
             lat.InteractionTerm(((1,),), h=random_hermitian(rng, 2, 0.5), rx=random_hermitian(rng, 2),
                                 kernel_id="k", name="b1"))
    m = lat.LatticeModel((2,), 2, terms, {"k": exponential_kernel()})
    chains = {n: ChainCoefficients(rng.uniform(0.1, 1), rng.normal(size=n_modes),
                                   rng.uniform(0.1, 1, n_modes - 1)) for n in ("b0", "b1")}
    H = build_dilated_hamiltonian(m, chains, n_max).dense()
    assert np.max(np.abs(H - H.conj().T)) < 1e-12


def test_dimension_cap():
    m = lat.chain_model(4, rx=X, kernel=exponential_kernel())
    chains = {f"s{i}": ChainCoefficients(1.0, (0.0, 0.0), (1.0,)) for i in range(4)}
    assert planned_dimension(m, chains, 3) == 16 * 3**8
    with pytest.raises(DimensionCapError):
        build_dilated_hamiltonian(m, chains, 3, dim_cap=1000)


# --------------------------------------------------------------------------
# propagation


@pytest.mark.parametrize("dim", [10, 65, 200, 512])
def test_krylov_matches_dense(dim):
    rng = np.random.default_rng(dim)
    H = random_hermitian(rng, dim, norm=5.0)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)
    for t in (0.1, 1.0, 3.0):
        assert np.linalg.norm(krylov_expm(H, v, t, dense_limit=0) - dense_expm_apply(H, v, t)) < 1e-8


def test_zero_hamiltonian_is_identity():
    m = lat.LatticeModel((2,), 2, ())
    asm = build_dilated_hamiltonian(m, {}, 2)
    psi = random_state(np.random.default_rng(0), asm.dims)
    out = evolve(asm, psi, 0.0, 2.0)
    assert np.allclose(out.amplitudes, psi.amplitudes)


@pytest.mark.parametrize("timed", [False, True])
def test_pi_pulse(timed):
    h = (math.pi / 2) * X
    sched = lat.Schedule([(lat.Window(0.0, 1.0), h)]) if timed else h
    m = lat.LatticeModel((1,), 2, (lat.InteractionTerm(((0,),), h=sched),), check_norms=False)
    asm = build_dilated_hamiltonian(m, {}, 2)
    out = evolve(asm, product_state(asm), 0.0, 1.0)
    assert abs(out.populations(0)[1] - 1.0) < 1e-8
    assert abs(out.amplitudes[1] - (-1j)) < 1e-8


def test_jaynes_cummings_single_excitation():
    g = 0.8
    m = jc_model()
    asm = build_dilated_hamiltonian(m, {"jc": ChainCoefficients(g, (0.0,), ())}, 3)
    state = product_state(asm, {(0,): [0, 1]})
    t_prev = 0.0
    for t in np.linspace(0, 2 * math.pi / g, 25):
        state = evolve(asm, state, t_prev, t)
        t_prev = t
        assert abs(site_expectation(asm, state, NUM, [(0,)]) - math.cos(g * t) ** 2) < 1e-6


def test_energy_conserved_for_static_hamiltonian():
    m = lat.chain_model(3, pair=lat.heisenberg_pair(), onsite=0.4 * Z, rx=X, kernel=exponential_kernel())
    chains = {f"s{i}": ChainCoefficients(0.5, (1.0,), ()) for i in range(3)}
    asm = build_dilated_hamiltonian(m, chains, 3)
    H = asm.static
    psi = product_state(asm, {(0,): [1, 1], (1,): [0, 1]})
    e0 = np.vdot(psi.amplitudes, H @ psi.amplitudes).real
    cfg = EvolutionConfig(leakage="ignore")
    for t in (0.5, 1.0, 2.0):
        out = evolve(asm, psi, 0.0, t, cfg)
        assert abs(out.norm - 1) < 1e-9
        assert abs(np.vdot(out.amplitudes, H @ out.amplitudes).real - e0) < 1e-8 * abs(e0)


def test_time_dependent_matches_dense_product():
    """Piecewise-constant drive: exact answer is a product of dense exponentials."""
    m = lat.LatticeModel((2,), 2, (
        lat.InteractionTerm(((0,), (1,)), h=lat.heisenberg_pair(), name="p"),
        lat.InteractionTerm(((0,),), h=lat.Schedule([(lat.Window(0.3, 0.8), X)]), name="d"),
    ))
    asm = build_dilated_hamiltonian(m, {}, 2)
    psi = product_state(asm)
    out = evolve(asm, psi, 0.0, 1.2)
    ref = psi.amplitudes
    for a, b in ((0.0, 0.3), (0.3, 0.8), (0.8, 1.2)):
        ref = dense_expm_apply(asm.dense(0.5 * (a + b)), ref, b - a)
    assert np.linalg.norm(out.amplitudes - ref) < 1e-8


def test_smooth_drive_unitary_and_converged():
    pulse = lat.Pulse(0.0, 2.0, 1.3)
    m = lat.LatticeModel((1,), 2, (lat.InteractionTerm(((0,),), h=lat.Schedule([(pulse, X)])),), check_norms=False)
    asm = build_dilated_hamiltonian(m, {}, 2)
    out = evolve(asm, product_state(asm), 0.0, 2.0)
    # [H(t), H(t')] = 0: rotation by the pulse area
    assert abs(out.populations(0)[1] - math.sin(1.3) ** 2) < 1e-8
    assert abs(out.norm - 1.0) < 1e-9


def test_leakage_error_mode():
    m = lat.LatticeModel((1,), 2, (lat.InteractionTerm(((0,),), rx=X, kernel_id="k", name="r"),),
                         {"k": exponential_kernel()})
    asm = build_dilated_hamiltonian(m, {"r": ChainCoefficients(2.0, (0.0,), ())}, 2)
    with pytest.raises(FockLeakageError):
        evolve(asm, product_state(asm), 0.0, 1.0, EvolutionConfig(leakage="error"))


# --------------------------------------------------------------------------
# observables


def test_expectation_trivial_cases():
    rng = np.random.default_rng(3)
    psi = random_state(rng, [2, 2, 3])
    assert abs(expectation(psi, np.eye(4), [0, 1]) - 1.0) < 1e-12
    one = QuantumState(np.kron([0, 1], [1, 0]), [2, 2])
    assert expectation(one, NUM, [0]) == 1.0


def test_expectation_matches_dense():
    rng = np.random.default_rng(4)
    dims = [2, 3, 2]
    psi = random_state(rng, dims)
    O = random_hermitian(rng, 4)
    dense = embed(O, [0, 2], dims).toarray()
    ref = np.vdot(psi.amplitudes, dense @ psi.amplitudes).real
    assert abs(expectation(psi, O, [0, 2]) - ref) < 1e-10


def test_expectation_rejects_non_hermitian():
    psi = QuantumState([1, 0], [2])
    with pytest.raises(ValueError):
        expectation(psi, RAISE, [0])


# --------------------------------------------------------------------------
# light cone and Fock convergence


def small_lightcone_model():
    return lat.chain_model(4, pair=lat.heisenberg_pair(), onsite=0.5 * Z, rx=X, kernel=exponential_kernel())


def test_lightcone_full_restriction_and_t0():
    m = small_lightcone_model()
    chains = {f"s{i}": ChainCoefficients(0.6, (0.0,), ()) for i in range(4)}
    states = {(0,): [0, 1], (2,): [1, 1j]}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = lightcone_experiment(m, chains, NUM, [(0,)], [1, 5], [0.0, 0.2, 0.4], states,
                                   EvolutionConfig(leakage="ignore"))
    for l, t, d, b in res.rows:
        if t == 0:
            assert d < 1e-12 and b == 0
        if l == 5:
            assert d < 1e-9
        assert d <= b + 1e-12
    assert "model_hash" in res.metadata
    assert res.to_csv().splitlines()[0] == "l,t,delta,bound"


def test_lightcone_cap_error():
    m = small_lightcone_model()
    chains = {f"s{i}": ChainCoefficients(0.6, (0.0,), ()) for i in range(4)}
    with pytest.raises(DimensionCapError, match="full model"):
        lightcone_experiment(m, chains, NUM, [(0,)], [0], [0.1], cfg=EvolutionConfig(dim_cap=100))


def test_fock_decoupled_exact():
    m = lat.chain_model(2, pair=lat.heisenberg_pair(), rx=X, kernel=exponential_kernel())
    chains = {f"s{i}": ChainCoefficients(0.0, (1.0,), ()) for i in range(2)}
    rows = fock_convergence_check(m, chains, NUM, [(0,)], 1.0, [2, 3, 4], {(0,): [0, 1]})
    assert all(r["difference"] == 0.0 for r in rows[1:])


def test_fock_jc_converged_at_two():
    rows = fock_convergence_check(jc_model(), {"jc": ChainCoefficients(0.8, (0.0,), ())}, NUM, [(0,)], 1.3,
                                  [2, 3, 4], {(0,): [0, 1]})
    assert all(r["converged"] for r in rows[1:])


def test_fock_driven_monotone():
    m = lat.LatticeModel((1,), 2, (lat.InteractionTerm(((0,),), h=0.5 * X, rx=X, kernel_id="b", name="q"),),
                         {"b": exponential_kernel()})
    rows = fock_convergence_check(m, {"q": ChainCoefficients(0.5, (1.0,), ())}, NUM, [(0,)], 2.0,
                                  [2, 3, 4, 5, 6, 7])
    diffs = [r["difference"] for r in rows[1:]]
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    assert rows[-1]["converged"]
