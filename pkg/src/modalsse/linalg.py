"""Structured linear algebra on system (x) bath-of-oscillators spaces.

Two bath layouts are supported:

* ``DenseFock`` -- every mode truncated at ``n_max`` quanta; the bath part
  of a state is a tensor of shape ``(n_max+1,) * K``.
* ``SingleExcitation`` -- the bath holds at most one quantum in total; bath
  labels are ``(vac, 1_1, ..., 1_K)``.

Bath ladder operators are never materialized as matrices; they act as
index maps on the reshaped amplitude array.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammainc

DENSE_FOCK = "dense_fock"
SINGLE_EXCITATION = "single_excitation"

_MAX_DIM = min(sys.maxsize, 2**31 - 1)


class SectorViolation(ValueError):
    """A ladder action would leave the single-excitation sector."""

    def __init__(self, mode, message=None):
        self.mode = mode
        super().__init__(message or f"raising mode {mode} leaves the single-excitation sector")


@dataclass(frozen=True)
class BasisDescriptor:
    """Tensor basis ``system (x) bath`` with system index outermost."""

    system_dim: int
    n_modes: int
    layout: str = DENSE_FOCK
    n_max: int = 1

    def __post_init__(self):
        if self.system_dim < 1:
            raise ValueError("system_dim must be positive")
        if self.n_modes < 1:
            raise ValueError("at least one bath mode is required")
        if self.layout not in (DENSE_FOCK, SINGLE_EXCITATION):
            raise ValueError(f"unknown bath layout {self.layout!r}")
        if self.layout == DENSE_FOCK and self.n_max < 1:
            raise ValueError("n_max must be >= 1 for the dense Fock layout")
        if self.layout == DENSE_FOCK:
            # exact integer arithmetic; reject before anything allocates
            total = self.system_dim * (self.n_max + 1) ** self.n_modes
        else:
            total = self.system_dim * (self.n_modes + 1)
        if total > _MAX_DIM:
            raise ValueError(f"basis dimension {total} exceeds addressable range")

    @classmethod
    def dense_fock(cls, system_dim, n_modes, n_max):
        return cls(system_dim, n_modes, DENSE_FOCK, n_max)

    @classmethod
    def single_excitation(cls, system_dim, n_modes):
        return cls(system_dim, n_modes, SINGLE_EXCITATION, 1)

    @property
    def is_dense(self):
        return self.layout == DENSE_FOCK

    @property
    def bath_dim(self):
        if self.is_dense:
            return (self.n_max + 1) ** self.n_modes
        return self.n_modes + 1

    @property
    def dim(self):
        return self.system_dim * self.bath_dim

    @property
    def tensor_shape(self):
        if self.is_dense:
            return (self.system_dim,) + (self.n_max + 1,) * self.n_modes
        return (self.system_dim, self.n_modes + 1)

    def padded(self, extra):
        """Dense basis with ``extra`` more Fock levels per mode."""
        if not self.is_dense:
            raise ValueError("padding only applies to the dense Fock layout")
        return BasisDescriptor.dense_fock(self.system_dim, self.n_modes, self.n_max + extra)

    def bath_labels(self):
        """Occupation tuples for every bath basis index, in storage order."""
        if self.is_dense:
            return [tuple(int(v) for v in idx)
                    for idx in np.ndindex(*(self.n_max + 1,) * self.n_modes)]
        labels = [(0,) * self.n_modes]
        for k in range(self.n_modes):
            occ = [0] * self.n_modes
            occ[k] = 1
            labels.append(tuple(occ))
        return labels


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    basis: BasisDescriptor
    time: float = 0.0
    truncation_loss: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != self.basis.dim:
            raise ValueError(f"amplitude length {amps.shape[0]} != basis dimension {self.basis.dim}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def matrix(self):
        """Amplitudes as a (system_dim, bath_dim) array."""
        return self.amplitudes.reshape(self.basis.system_dim, self.basis.bath_dim)

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def replace(self, amplitudes, **kw):
        kw.setdefault("time", self.time)
        kw.setdefault("truncation_loss", self.truncation_loss)
        return StateVector(amplitudes, kw.pop("basis", self.basis), **kw)

    def check_normalized(self, tol=1e-6):
        drift = abs(self.norm() - 1.0)
        if drift > tol:
            raise ValueError(f"state norm deviates from 1 by {drift:.3e} at t={self.time}")


def product_state(system_ket, basis, bath_label=None, time=0.0):
    """``|system_ket> (x) |bath_label>``; vacuum bath by default."""
    sys_ket = np.asarray(system_ket, dtype=np.complex128)
    bath = np.zeros(basis.bath_dim, dtype=np.complex128)
    if bath_label is None:
        bath[0] = 1.0
    else:
        bath[basis.bath_labels().index(tuple(bath_label))] = 1.0
    return StateVector(np.kron(sys_ket, bath), basis, time)


def embed(state, basis):
    """Copy a dense-Fock state into a larger dense-Fock basis (zero padded)."""
    src, dst = state.basis, basis
    if not (src.is_dense and dst.is_dense) or dst.n_max < src.n_max \
            or (dst.system_dim, dst.n_modes) != (src.system_dim, src.n_modes):
        raise ValueError("can only embed into a dense basis with at least as many levels")
    out = np.zeros(dst.tensor_shape, dtype=np.complex128)
    sl = (slice(None),) + (slice(0, src.n_max + 1),) * src.n_modes
    out[sl] = state.amplitudes.reshape(src.tensor_shape)
    return state.replace(out.reshape(-1), basis=dst)


# -- ladder operators ------------------------------------------------------

def lower_array(psi, basis, mode):
    """``a_mode`` acting on a flat amplitude array (never leaves the space)."""
    if basis.is_dense:
        t = psi.reshape(basis.tensor_shape)
        ax = mode + 1
        out = np.zeros_like(t)
        n = basis.n_max
        src = [slice(None)] * t.ndim
        dst = [slice(None)] * t.ndim
        src[ax] = slice(1, n + 1)
        dst[ax] = slice(0, n)
        shape = [1] * t.ndim
        shape[ax] = n
        out[tuple(dst)] = t[tuple(src)] * _sqrt_levels(n).reshape(shape)
        return out.reshape(-1)
    m = psi.reshape(basis.tensor_shape)
    out = np.zeros_like(m)
    out[:, 0] = m[:, mode + 1]
    return out.reshape(-1)


def raise_array(psi, basis, mode):
    """``a_mode^dagger`` on a flat array; returns ``(result, dropped_norm2)``.

    Dense Fock: amplitude pushed past ``n_max`` is dropped and its squared
    norm returned. Single excitation: any nonzero amplitude that would end
    up with two quanta raises :class:`SectorViolation`.
    """
    if basis.is_dense:
        t = psi.reshape(basis.tensor_shape)
        ax = mode + 1
        n = basis.n_max
        out = np.zeros_like(t)
        src = [slice(None)] * t.ndim
        dst = [slice(None)] * t.ndim
        src[ax] = slice(0, n)
        dst[ax] = slice(1, n + 1)
        shape = [1] * t.ndim
        shape[ax] = n
        out[tuple(dst)] = t[tuple(src)] * _sqrt_levels(n).reshape(shape)
        edge = [slice(None)] * t.ndim
        edge[ax] = n
        top = t[tuple(edge)]
        dropped = float((n + 1) * np.vdot(top, top).real)
        return out.reshape(-1), dropped
    m = psi.reshape(basis.tensor_shape)
    if np.any(m[:, 1:] != 0):
        raise SectorViolation(mode)
    out = np.zeros_like(m)
    out[:, mode + 1] = m[:, 0]
    return out.reshape(-1), 0.0


@lru_cache(maxsize=64)
def _sqrt_levels(n):
    return np.sqrt(np.arange(1, n + 1, dtype=np.float64))


def apply_bath_ladder(state, mode, kind):
    """Apply ``a_mode`` (``kind='lower'``) or ``a_mode^dagger`` (``'raise'``)."""
    basis = state.basis
    if not 0 <= mode < basis.n_modes:
        raise IndexError(f"mode {mode} out of range for {basis.n_modes} modes")
    if kind == "lower":
        return state.replace(lower_array(state.amplitudes, basis, mode))
    if kind == "raise":
        out, dropped = raise_array(state.amplitudes, basis, mode)
        return state.replace(out, truncation_loss=state.truncation_loss + dropped)
    raise ValueError(f"kind must be 'raise' or 'lower', got {kind!r}")


def apply_system_operator(psi, basis, op):
    """``op (x) 1_bath`` on a flat amplitude array."""
    m = psi.reshape(basis.system_dim, basis.bath_dim)
    return (np.asarray(op) @ m).reshape(-1)


def lowering_combination(psi, basis, coeffs):
    """``A|psi>`` with ``A = sum_k coeffs[k] a_k`` (zero coefficients skipped)."""
    out = np.zeros_like(psi)
    for k, c in enumerate(coeffs):
        if c != 0:
            out += c * lower_array(psi, basis, k)
    return out


def quadrature_moments(psi, basis, coeffs):
    """Mean and variance of ``q = A + A^dagger`` with ``A = sum_k c_k a_k``.

    Only lowering actions are used (``<q^2> = 2 Re<A^2> + 2<A^dag A> + sum|c|^2``),
    so the result is exact in both layouts regardless of truncation.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    a1 = lowering_combination(psi, basis, coeffs)
    a2 = lowering_combination(a1, basis, coeffs)
    norm2 = np.vdot(psi, psi).real
    mean = 2.0 * np.vdot(psi, a1).real / norm2
    second = (2.0 * np.vdot(psi, a2).real + 2.0 * np.vdot(a1, a1).real) / norm2 \
        + float(np.sum(np.abs(coeffs) ** 2))
    return float(mean), float(second - mean * mean)


def partial_trace_bath(state):
    """Reduced system density matrix ``Tr_bath |Psi><Psi|``."""
    m = state.matrix()
    rho = m @ m.conj().T
    return 0.5 * (rho + rho.conj().T)


def check_density_matrix(rho, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8):
    rho = np.asarray(rho)
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {np.trace(rho).real} != 1")
    if np.min(np.linalg.eigvalsh(rho)) < -eig_tol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def is_hermitian(op, tol=1e-12):
    op = np.asarray(op)
    return op.ndim == 2 and op.shape[0] == op.shape[1] and \
        float(np.max(np.abs(op - op.conj().T), initial=0.0)) <= tol


# -- oscillator kernels ----------------------------------------------------

_PI_QUARTER = math.pi ** -0.25


def fock_position_amplitude(n, x):
    """Harmonic-oscillator eigenfunction ``<x|n>`` for ``x = (a + a^dag)/sqrt 2``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    prev, cur = 0.0, _PI_QUARTER * math.exp(-0.5 * x * x)
    for k in range(n):
        prev, cur = cur, math.sqrt(2.0 / (k + 1)) * x * cur - math.sqrt(k / (k + 1)) * prev
    return cur


def hermite_functions(x, nmax):
    """Table ``psi_n(x)`` of shape ``(len(x), nmax+1)``."""
    from . import kernels

    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    gauss = _PI_QUARTER * np.exp(-0.5 * x * x)
    return kernels.active.hermite_ratio_table(x, nmax) * gauss[:, None]


@dataclass(frozen=True)
class CoherentOverlap:
    """Fock amplitudes ``<n|a>`` and the squared norm lying beyond ``n_max``."""

    amplitudes: np.ndarray
    tail: float = field(default=0.0)


def coherent_overlap_vector(a, n_max):
    a = complex(a)
    out = np.empty(n_max + 1, dtype=np.complex128)
    out[0] = math.exp(-0.5 * abs(a) ** 2)
    for n in range(1, n_max + 1):
        out[n] = out[n - 1] * a / math.sqrt(n)
    # Poisson tail P(N > n_max) for mean |a|^2
    tail = float(gammainc(n_max + 1, abs(a) ** 2)) if a != 0 else 0.0
    return CoherentOverlap(out, tail)


@lru_cache(maxsize=32)
def beam_splitter_tensor(n_max):
    """Fock components of ``|n1>_k |n2>_{-k}`` in the sum/difference modes.

    With ``c_pm = (a_k pm a_{-k})/sqrt 2``, returns real ``T`` of shape
    ``(n_max+1, n_max+1, 2n_max+1, 2n_max+1)`` such that
    ``|n1, n2> = sum_{p,q} T[n1, n2, p, q] |p>_+ |q>_-``.
    """
    size = 2 * n_max + 1
    out = np.zeros((n_max + 1, n_max + 1, size, size))
    for n1 in range(n_max + 1):
        for n2 in range(n_max + 1):
            scale = 2.0 ** (-(n1 + n2) / 2) / math.sqrt(math.factorial(n1) * math.factorial(n2))
            for i in range(n1 + 1):
                for j in range(n2 + 1):
                    p = i + j
                    q = n1 + n2 - p
                    c = math.comb(n1, i) * math.comb(n2, j) * (-1) ** (n2 - j)
                    out[n1, n2, p, q] += scale * c * math.sqrt(math.factorial(p) * math.factorial(q))
    out.setflags(write=False)
    return out
