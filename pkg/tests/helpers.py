"""Shared fixtures and test-function families."""

import numpy as np

from liebsim.kernels import PiecewiseFunction, dirac_kernel, exponential_kernel


def exp_plus_atom():
    """(1/2) e^{-|tau|} + delta(tau - 1)."""
    K = exponential_kernel(1.0)
    return type(K)(K.continuous, ((1.0, 1.0),))


def _smooth(f, df):
    return PiecewiseFunction((), (f,), (df,))


def _jump(b, left, right, dleft, dright):
    return PiecewiseFunction((b,), (left, right), (dleft, dright))


def piecewise_family(breakpoints=(0.0, 1.0)):
    """Twenty bounded functions, C1 except for jumps at the given breakpoints."""
    b0, b1 = breakpoints
    fam = []
    for w in (0.5, 1.0, 2.0, 4.0):
        fam.append(_smooth(lambda x, w=w: np.cos(w * x), lambda x, w=w: -w * np.sin(w * x)))
        fam.append(_smooth(lambda x, w=w: np.sin(w * x + 0.3), lambda x, w=w: w * np.cos(w * x + 0.3)))
    for s in (0.3, 1.0, 3.0):
        fam.append(_smooth(lambda x, s=s: np.exp(-(x - 0.5) ** 2 / s),
                           lambda x, s=s: -2 * (x - 0.5) / s * np.exp(-(x - 0.5) ** 2 / s)))
    fam.append(_smooth(np.tanh, lambda x: 1 / np.cosh(x) ** 2))
    fam.append(_jump(b0, lambda x: 0 * x, lambda x: 1 + 0 * x, lambda x: 0 * x, lambda x: 0 * x))
    fam.append(_jump(b1, lambda x: 0 * x, lambda x: 1 + 0 * x, lambda x: 0 * x, lambda x: 0 * x))
    fam.append(_jump(b1, lambda x: np.cos(x), lambda x: -np.cos(x), lambda x: -np.sin(x), lambda x: np.sin(x)))
    fam.append(_jump(b0, lambda x: np.exp(-x**2), lambda x: 0.5 * np.exp(-x**2),
                     lambda x: -2 * x * np.exp(-x**2), lambda x: -x * np.exp(-x**2)))
    fam.append(PiecewiseFunction((b0, b1), (lambda x: -1 + 0 * x, lambda x: np.sin(3 * x), lambda x: 1 + 0 * x),
                                 (lambda x: 0 * x, lambda x: 3 * np.cos(3 * x), lambda x: 0 * x)))
    fam.append(PiecewiseFunction((b0, b1), (lambda x: 0 * x, lambda x: x, lambda x: 0 * x),
                                 (lambda x: 0 * x, lambda x: 1 + 0 * x, lambda x: 0 * x)))
    fam.append(_jump(b1, lambda x: np.exp(1j * x), lambda x: 0.2j + 0 * x,
                     lambda x: 1j * np.exp(1j * x), lambda x: 0 * x))
    fam.append(_smooth(lambda x: 1 / (1 + x**2), lambda x: -2 * x / (1 + x**2) ** 2))
    return fam


__all__ = ["exp_plus_atom", "piecewise_family", "dirac_kernel"]
