"""Pure-numpy implementations of the hot conditioning kernels.

Signatures mirror ``_ckernels``; this module is the fallback when the
compiled extension is not available.
"""

import math

import numpy as np

NAME = "python"


def hermite_ratio_table(x, nmax):
    """Return ``r[m, n] = psi_n(x[m]) / psi_0(x[m])`` for n = 0..nmax.

    The ratios obey the same three-term recurrence as the normalized
    Hermite functions, so no factorials or raw polynomials appear.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty((x.shape[0], nmax + 1), dtype=np.float64)
    out[:, 0] = 1.0
    if nmax >= 1:
        out[:, 1] = math.sqrt(2.0) * x
    for n in range(1, nmax):
        out[:, n + 1] = (math.sqrt(2.0 / (n + 1)) * x * out[:, n]
                         - math.sqrt(n / (n + 1)) * out[:, n - 1])
    return out


def coherent_ratio_table(a, nmax):
    """Return ``c[m, n] = conj(a[m])**n / sqrt(n!)``, i.e. <a|n> without the Gaussian."""
    ac = np.conj(np.ascontiguousarray(a, dtype=np.complex128))
    out = np.empty((ac.shape[0], nmax + 1), dtype=np.complex128)
    out[:, 0] = 1.0
    for n in range(1, nmax + 1):
        out[:, n] = out[:, n - 1] * ac / math.sqrt(n)
    return out


def condition_contract(weights, psi, lop):
    """Project the guiding state onto a batch of bath bras.

    Parameters
    ----------
    weights : complex array (M, B)
        Bath bra coefficients ``<q_m|b>`` (Gaussian prefactor removed).
    psi : complex array (S, B)
        Guiding state reshaped as system x bath.
    lop : complex array (S, S)
        System operator whose conditioned expectation is returned.

    Returns
    -------
    kets : complex array (M, S)
        Unnormalized conditioned kets.
    norm2 : float array (M,)
    lexp : complex array (M,)
        ``<ket|lop|ket> / norm2``; zero where ``norm2 == 0``.
    """
    kets = np.einsum("mb,sb->ms", weights, psi)
    norm2 = np.einsum("ms,ms->m", kets.real, kets.real) + np.einsum("ms,ms->m", kets.imag, kets.imag)
    lk = np.einsum("st,mt->ms", lop, kets)
    num = np.einsum("ms,ms->m", kets.conj(), lk)
    safe = np.where(norm2 > 0.0, norm2, 1.0)
    lexp = np.where(norm2 > 0.0, num / safe, 0.0)
    return kets, norm2, lexp
