import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liebsim import kernels as km
from liebsim.quadrature import adaptive_simpson, integrate

from helpers import exp_plus_atom, piecewise_family


def test_tv_unit_atom():
    assert km.total_variation(km.dirac_kernel(1.0, 1.0)) == 1.0


def test_tv_boundary_atom_half_weight():
    assert km.total_variation(km.dirac_kernel(1.0, 1.0), (1.0, 2.0)) == 0.5


def test_tv_exponential_against_quadrature():
    K = km.exponential_kernel(1.0)
    assert abs(km.total_variation(K) - 1.0) < 1e-8
    brute = 2 * adaptive_simpson(lambda t: np.abs(K.continuous(t)), 0.0, 60.0, 1e-13)
    assert abs(km.total_variation(K) - brute) < 1e-9


@given(st.floats(0.2, 5.0))
@settings(max_examples=20, deadline=None)
def test_exponential_preset_has_unit_tv(gamma):
    assert abs(km.total_variation(km.exponential_kernel(gamma)) - 1.0) < 1e-8


def test_tv_interval_of_exponential():
    K = km.exponential_kernel(1.0)
    # int_0^1 (1/2) e^{-t} dt
    assert abs(km.total_variation(K, (0.0, 1.0)) - 0.5 * (1 - math.exp(-1))) < 1e-10


def test_ohmic_tv_closed_form():
    # |K(t)| = alpha wc^2 / (1 + wc^2 t^2) integrates to pi alpha wc
    alpha, wc = 0.1, 5.0
    K = km.ohmic_kernel(alpha, wc)
    tv = km.total_variation(K)
    lo, hi = K.continuous.support
    tail = 2 * alpha / hi  # mass beyond the stored support
    assert abs(tv + tail - math.pi * alpha * wc) < 1e-8
    brute = integrate(lambda t: np.abs(K.continuous(t)), -200.0, 200.0, K.continuous.breakpoints, tol=1e-11)
    assert abs(brute - (math.pi * alpha * wc - 2 * alpha / 200.0)) < 1e-6


def test_zero_kernel():
    assert km.total_variation(km.zero_kernel()) == 0.0


def test_interval_order_checked():
    with pytest.raises(km.KernelError):
        km.total_variation(km.exponential_kernel(), (2.0, 1.0))


def test_upper_bound_singleton_is_modulus():
    K = km.MemoryKernel(km.ExponentialPart(1.0, -0.5j), ((-2.0, 0.5),))
    U = km.build_upper_bound([K])
    tau = np.linspace(-5, 5, 101)
    assert np.allclose(U.continuous(tau), np.abs(K.continuous(tau)))
    assert U.atoms == ((2.0, 0.5),)


def test_upper_bound_pointwise_max():
    a = km.exponential_kernel(1.0)
    b = km.exponential_kernel(2.0, 0.25)
    U = km.build_upper_bound([a, b])
    tau = np.linspace(0, 10, 201)
    assert np.allclose(U.continuous(tau), 0.5 * np.exp(-tau))
    assert np.all(U.continuous(tau) >= np.abs(b.continuous(tau)))


def test_upper_bound_atom_sup_of_moduli():
    U = km.build_upper_bound([km.dirac_kernel(1j), km.dirac_kernel(-2.0)])
    assert U.atoms == ((2.0, 0.0),)


def test_upper_bound_needs_kernels():
    with pytest.raises(km.KernelError):
        km.build_upper_bound([])


def test_mollifier_unit_mass():
    for d in (0.05, 0.5, 2.0):
        assert abs(km.Mollifier(d).mass() - 1.0) < 1e-10


def test_bump_normalisation_value():
    assert abs(km.bump_normalisation() - 2.25228362) < 1e-7


def test_mollified_dirac_peak():
    M = km.mollify(km.dirac_kernel(), 0.5, 0.5)
    pair = km.PairMollifier(0.5, 0.5)
    # direct quadrature of the self-convolution at zero: int eta(x)^2 dx
    direct = adaptive_simpson(lambda x: km.Mollifier(0.5)(x) ** 2, -0.5, 0.5, 1e-13)
    peak = M(np.array([0.0]))[0]
    assert abs(peak - direct) < 1e-6
    assert abs(pair.direct(0.0)[0] - direct) < 1e-10
    assert peak.real <= 2.0
    tau = np.linspace(-1.5, 1.5, 601)
    assert np.argmax(np.abs(M(tau))) == 300


def test_mollify_zero():
    assert km.mollify(km.zero_kernel(), 0.1, 0.1).is_zero()


@pytest.mark.parametrize("d1,d2", [(0.2, 0.2), (0.05, 0.3), (0.5, 0.1)])
def test_mollify_does_not_increase_tv(d1, d2):
    K = exp_plus_atom()
    assert km.total_variation(km.mollify(K, d1, d2)) <= km.total_variation(K) + 1e-8


def test_mollify_rejects_bad_width():
    with pytest.raises(km.KernelError):
        km.mollify(km.dirac_kernel(), 0.0)


def test_closeness_identical():
    K = exp_plus_atom()
    assert tuple(km.closeness_test(K, K, (0.0, 1.0), piecewise_family()[:4])) == (0.0, 0.0)


def test_closeness_dirac_smooth_function():
    d = 0.1
    K = km.dirac_kernel()
    M = km.mollify(K, d, d)
    f = km.smooth_function(np.sin, np.cos)
    err = abs(km.kernel_action(K, f) - km.kernel_action(M, f))
    assert err <= 2 * d


def test_closeness_exponential_cosine():
    K = km.exponential_kernel(1.0)
    M = km.mollify(K, 0.1, 0.1)
    f = km.smooth_function(np.cos, lambda x: -np.sin(x))
    exact = 0.5  # int (1/2) e^{-|t|} cos t dt = 1/2
    assert abs(km.kernel_action(K, f) - exact) < 1e-9
    l0, l1 = km.mollifier_closeness_constants(K, (0.0,), 0.2)
    assert abs(km.kernel_action(M, f) - exact) <= l0 + l1


def test_closeness_rejects_stray_discontinuity():
    K = exp_plus_atom()
    with pytest.raises(km.KernelError):
        km.closeness_test(K, K, (0.0,), piecewise_family((0.0, 1.0))[13:14])


def test_mu_window():
    U = km.build_upper_bound([km.dirac_kernel()])
    assert km.mu_window(U, -1, 1, 0) == 1.0
    assert km.mu_window(U, 0, 1, 0) == 0.5
    E = km.build_upper_bound([km.exponential_kernel()])
    for s in (-3.0, 0.0, 7.5):
        assert abs(km.mu_window(E, -200, 200, s) - 1.0) < 1e-9


def test_kernel_json_round_trip():
    K = km.MemoryKernel(km.ScaledPart(km.ExponentialPart(2.0), 0.5 - 0.25j), ((1.5j, 2.0),))
    K2 = km.MemoryKernel.from_dict(K.to_dict())
    tau = np.linspace(-3, 3, 13)
    assert np.allclose(K(tau), K2(tau))
    assert K2.atoms == K.atoms


def test_sampled_grid_kernel_keeps_tv():
    # piecewise-linear interpolation of a convex profile overshoots by O(h^2)
    K = km.exponential_kernel(1.0)
    for h in (0.05, 0.01):
        assert abs(km.total_variation(km.sampled(K, h)) - 1.0) < h * h
