"""System, bath and interaction-frame Hamiltonian of the open-system model.

Units have hbar = 1. All dynamics happen in the interaction frame that
removes the free bath Hamiltonian and the fast system rotation; a lab-frame
system coherence is recovered by multiplying the frame value by the free
phase of ``H_Omega`` (for ``L`` rotating as ``L e^{-i Omega t}`` this is
``rho_eg,lab = rho_eg,frame * e^{-i Omega t}``), populations are identical
in both frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    BasisDescriptor,
    SectorViolation,
    apply_system_operator,
    is_hermitian,
    lower_array,
    raise_array,
)


@dataclass(frozen=True)
class ModeSpec:
    detuning: float
    coupling: float

    def __post_init__(self):
        if not np.isfinite(self.detuning) or not np.isfinite(self.coupling):
            raise ValueError("mode parameters must be finite")
        if self.coupling < 0:
            raise ValueError("couplings are taken real and non-negative")


@dataclass(frozen=True)
class BathSpec:
    modes: tuple
    initial: str = "vacuum"

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ValueError("bath needs at least one mode")
        if self.initial != "vacuum":
            raise ValueError("only the vacuum initial bath state is supported")

    @classmethod
    def from_arrays(cls, detunings, couplings):
        return cls(tuple(ModeSpec(float(d), float(g)) for d, g in zip(detunings, couplings)))

    @property
    def detunings(self):
        return np.array([m.detuning for m in self.modes])

    @property
    def couplings(self):
        return np.array([m.coupling for m in self.modes])

    def __len__(self):
        return len(self.modes)


@dataclass(frozen=True)
class SystemSpec:
    h_int: np.ndarray
    lowering: np.ndarray
    initial_state: np.ndarray

    def __post_init__(self):
        h = np.array(self.h_int, dtype=np.complex128)
        lop = np.array(self.lowering, dtype=np.complex128)
        psi0 = np.array(self.initial_state, dtype=np.complex128).reshape(-1)
        d = psi0.shape[0]
        if h.shape != (d, d) or lop.shape != (d, d):
            raise ValueError("h_int, lowering and initial_state dimensions disagree")
        if not is_hermitian(h, 1e-12):
            raise ValueError("h_int must be Hermitian")
        if abs(np.linalg.norm(psi0) - 1.0) > 1e-12:
            raise ValueError("initial system state must be normalized")
        for a in (h, lop, psi0):
            a.setflags(write=False)
        object.__setattr__(self, "h_int", h)
        object.__setattr__(self, "lowering", lop)
        object.__setattr__(self, "initial_state", psi0)

    @property
    def dim(self):
        return self.initial_state.shape[0]

    def check_strictly_lowering(self, tol=1e-12):
        """Required by the single-excitation layout: ``L^2 = 0`` and ``L`` lowers
        the grading defined by the diagonal of ``L^dag L`` ordering."""
        lop = self.lowering
        if np.max(np.abs(lop @ lop), initial=0.0) > tol:
            raise ValueError("single-excitation layout needs L with L^2 = 0")
        # graded: no state is both a source and a target of L
        src = np.any(np.abs(lop) > tol, axis=0)
        dst = np.any(np.abs(lop) > tol, axis=1)
        if np.any(src & dst):
            raise ValueError("single-excitation layout needs a strictly lowering L")


def sigma_minus():
    """Two-level lowering operator in the ordered basis (e, g)."""
    return np.array([[0, 0], [1, 0]], dtype=np.complex128)


@dataclass(frozen=True)
class UniverseModel:
    """System + bath + basis, validated for mutual consistency."""

    system: SystemSpec
    bath: BathSpec
    basis: BasisDescriptor = field(default=None)

    def __post_init__(self):
        if self.basis is None:
            raise ValueError("a basis descriptor is required")
        if self.basis.system_dim != self.system.dim:
            raise ValueError("basis system_dim differs from the system dimension")
        if self.basis.n_modes != len(self.bath):
            raise ValueError("basis mode count differs from the bath")
        if not self.basis.is_dense:
            self.system.check_strictly_lowering()

    def hamiltonian(self):
        return UniverseHamiltonian(self.system, self.bath, self.basis)

    def initial_state(self):
        from .linalg import product_state

        return product_state(self.system.initial_state, self.basis)


class InteractionAction:
    """``V_int(t) = i sum_k g_k (e^{i W_k t} L a_k^dag - e^{-i W_k t} L^dag a_k)``.

    Optionally adds ``H_int (x) 1``. Instances are callables on flat
    amplitude arrays and are safe to share between threads.
    """

    def __init__(self, system, bath, basis, t, include_system=True):
        self.basis = basis
        self.t = float(t)
        self._lop = system.lowering
        self._ldag = system.lowering.conj().T
        self._h = system.h_int if include_system else None
        g = bath.couplings
        w = bath.detunings
        self._up = 1j * g * np.exp(1j * w * self.t)
        self._down = -1j * g * np.exp(-1j * w * self.t)

    def __call__(self, psi):
        return self.apply(psi)[0]

    def apply(self, psi):
        """Return ``(H psi, dropped_norm2)``; the latter counts amplitude pushed
        past the Fock truncation edge by the raising terms."""
        basis = self.basis
        up = np.zeros_like(psi)
        down = np.zeros_like(psi)
        dropped = 0.0
        if basis.is_dense:
            for k in range(basis.n_modes):
                if self._up[k] != 0:
                    r, _ = raise_array(psi, basis, k)
                    up += self._up[k] * r
                    dropped += abs(self._up[k]) ** 2 * self._edge_loss(psi, k)
                    down += self._down[k] * lower_array(psi, basis, k)
        else:
            m = psi.reshape(basis.tensor_shape)
            # L a_k^dag on a one-quantum component would make two quanta
            if np.any(self._up != 0) and np.any(self._lop @ m[:, 1:] != 0):
                bad = int(np.argmax(np.any(self._lop @ m[:, 1:] != 0, axis=0)))
                raise SectorViolation(bad)
            u = np.zeros_like(m)
            u[:, 1:] = m[:, :1] * self._up[None, :]
            up = u.reshape(-1)
            d = np.zeros_like(m)
            d[:, 0] = m[:, 1:] @ self._down
            down = d.reshape(-1)
        out = apply_system_operator(up, basis, self._lop) + apply_system_operator(down, basis, self._ldag)
        if self._h is not None:
            out += apply_system_operator(psi, basis, self._h)
        return out, dropped

    def _edge_loss(self, psi, k):
        t = psi.reshape(self.basis.tensor_shape)
        idx = [slice(None)] * t.ndim
        idx[k + 1] = self.basis.n_max
        top = t[tuple(idx)].reshape(self.basis.system_dim, -1)
        lt = self._lop @ top
        return float((self.basis.n_max + 1) * np.vdot(lt, lt).real)


def build_v_int(t, bath, sys, basis):
    """Linear action ``|Psi> -> V_int(t)|Psi>``."""
    return InteractionAction(sys, bath, basis, t, include_system=False)


def build_h_uni(t, bath, sys, basis):
    """Linear action of ``H_uni(t) = H_int (x) 1 + V_int(t)``."""
    return InteractionAction(sys, bath, basis, t, include_system=True)


class UniverseHamiltonian:
    """Time-dependent generator consumed by :func:`modalsse.propagator.evolve`."""

    def __init__(self, system, bath, basis):
        self.system, self.bath, self.basis = system, bath, basis

    def at(self, t):
        return build_h_uni(t, self.bath, self.system, self.basis)

    def apply(self, psi, t):
        return self.at(t).apply(psi)[0]

    def apply_with_loss(self, psi, t):
        return self.at(t).apply(psi)


class DenseHamiltonian:
    """A static Hermitian matrix used as a generator (small discrete models)."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.complex128)
        if not is_hermitian(self.matrix, 1e-12):
            raise ValueError("Hamiltonian must be Hermitian")

    def apply(self, psi, t):
        return self.matrix @ psi

    def apply_with_loss(self, psi, t):
        return self.matrix @ psi, 0.0


# -- quadrature pairing ----------------------------------------------------

class PairingError(ValueError):
    def __init__(self, detunings):
        self.detunings = tuple(float(d) for d in detunings)
        super().__init__(f"modes with detunings {list(self.detunings)} have no symmetric partner")


@dataclass(frozen=True)
class Pairing:
    """Symmetric mode pairs ``(k, -k)`` with the positive detuning first.

    ``self_modes`` lists zero-detuning modes left without a partner; they are
    only present when explicitly allowed and carry a single position-like
    hidden coordinate.
    """

    pairs: tuple
    self_modes: tuple = ()

    @property
    def n_pairs(self):
        return len(self.pairs)


def check_symmetric_pairs(bath, tol=1e-9, allow_zero_mode=False):
    """Match every mode ``k`` with a mirror ``-k`` (``W_{-k} = -W_k``, ``g_{-k} = g_k``)."""
    w = bath.detunings
    g = bath.couplings
    order = sorted(range(len(w)), key=lambda k: (abs(w[k]), -w[k], k))
    used = set()
    pairs = []
    selfs = []
    for k in order:
        if k in used:
            continue
        if w[k] < -tol:
            continue  # handled when its positive partner is visited
        best = None
        for j in order:
            if j == k or j in used:
                continue
            if abs(w[j] + w[k]) <= tol and abs(g[j] - g[k]) <= tol:
                if best is None or abs(w[j] + w[k]) < abs(w[best] + w[k]):
                    best = j
        if best is None:
            if abs(w[k]) <= tol and allow_zero_mode:
                used.add(k)
                selfs.append(k)
                continue
            continue
        used.update((k, best))
        pairs.append((k, best))
    missing = [k for k in range(len(w)) if k not in used]
    if missing:
        raise PairingError(w[missing])
    return Pairing(tuple(pairs), tuple(selfs))
