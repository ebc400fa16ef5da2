"""Action of ``exp(-i t H)`` on a vector for Hermitian ``H``.

Lanczos builds an orthonormal Krylov basis; the small tridiagonal
exponential is taken through its eigendecomposition. The step is shrunk
until the a-posteriori residual estimate meets the tolerance, and the
basis is rebuilt from the new vector for the next substep.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal

DENSE_LIMIT = 64


class KrylovError(RuntimeError):
    pass


def _lanczos(H, v, m):
    n = v.size
    m = min(m, n)
    V = np.zeros((n, m + 1), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[:, 0] = v
    for j in range(m):
        w = H @ V[:, j]
        alpha[j] = np.vdot(V[:, j], w).real
        w = w - alpha[j] * V[:, j] - (beta[j - 1] * V[:, j - 1] if j else 0)
        # full reorthogonalisation is cheap at these basis sizes
        w -= V[:, :j + 1] @ (V[:, :j + 1].conj().T @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        if b < 1e-13 * max(1.0, abs(alpha[j])):
            return V[:, :j + 1], alpha[:j + 1], beta[:j], True
        V[:, j + 1] = w / b
    return V, alpha, beta, False


def _small_expm_e1(alpha, offdiag, tau):
    if alpha.size == 1:
        return np.array([np.exp(-1j * tau * alpha[0])])
    lam, S = eigh_tridiagonal(alpha, offdiag)
    return S @ (np.exp(-1j * tau * lam) * S[0].conj())


def dense_expm_apply(H, v, t):
    """Dense eigendecomposition route; also used as the reference oracle."""
    H = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
    lam, S = np.linalg.eigh(H)
    return S @ (np.exp(-1j * t * lam) * (S.conj().T @ v))


def krylov_expm(H, v, t, m=30, tol=1e-12, min_step=None, dense_limit=DENSE_LIMIT):
    """Return ``exp(-i t H) v`` with estimated error below ``tol * |v|``."""
    v = np.asarray(v, dtype=complex)
    if t == 0:
        return v.copy()
    if v.size <= dense_limit:
        return dense_expm_apply(H, v, t)
    sign = 1.0 if t > 0 else -1.0
    remaining = abs(t)
    min_step = abs(t) * 2.0**-30 if min_step is None else min_step
    w = v.copy()
    nrm0 = np.linalg.norm(v)
    if nrm0 == 0:
        return w
    tau = remaining
    while remaining > 0:
        nrm = np.linalg.norm(w)
        V, alpha, beta, exact = _lanczos(H, w / nrm, m)
        k = alpha.size
        tau = min(remaining, max(tau * 2, min_step))
        while True:
            c = _small_expm_e1(alpha, beta[:k - 1], sign * tau)
            # residual estimate: next Lanczos coefficient times the last coefficient
            err = 0.0 if exact else beta[k - 1] * abs(c[-1]) * nrm
            if err <= tol * nrm0 * tau / abs(t) or tau <= min_step:
                break
            tau *= 0.5
        if tau <= min_step and err > tol * nrm0 * tau / abs(t):
            raise KrylovError("Krylov step fell below the minimum without meeting the tolerance")
        w = nrm * (V[:, :k] @ c)
        remaining -= tau
        if remaining < 1e-15 * abs(t):
            break
    return w
