"""Conditioned system states ``<{q}|Psi>/sqrt(N)`` for the three bath bases.

Every hidden-variable configuration defines a bath bra ``<{q}|``. Its
components on the bath basis are factorized as ``exp(logpref/2) * W`` with a
Gaussian prefactor pulled out, so that many-mode weights do not underflow
before they are combined. Batches of configurations are handled at once:
coordinates arrive as a real array of shape ``(M, D)``.

Coordinate order (``D`` real numbers per configuration):

* position   -- ``x_1 .. x_K``
* quadrature -- ``X+_1, Y-_1, X+_2, Y-_2, ...`` per symmetric pair, then
  one ``x`` per unpaired zero-detuning mode (if allowed)
* coherent   -- ``Re a_1, Im a_1, Re a_2, Im a_2, ...``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .linalg import beam_splitter_tensor, hermite_functions

POSITION = "position"
QUADRATURE = "quadrature"
COHERENT = "coherent"
UNRAVELINGS = (POSITION, QUADRATURE, COHERENT)

NODE_FLOOR = 1e-300
_LOG_PI = math.log(math.pi)


class NodeEncountered(ArithmeticError):
    """The conditioned weight vanished: the hidden values sit on a node."""

    def __init__(self, weight, where=None):
        self.weight = weight
        self.where = where
        super().__init__(f"conditioned weight {weight:.3e} below node floor {NODE_FLOOR:g}")


# -- hidden variables ------------------------------------------------------

@dataclass(frozen=True)
class PositionVars:
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _finite(self.x, float))


@dataclass(frozen=True)
class QuadratureVars:
    xplus: np.ndarray
    yminus: np.ndarray
    xself: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "xplus", _finite(self.xplus, float))
        object.__setattr__(self, "yminus", _finite(self.yminus, float))
        object.__setattr__(self, "xself", _finite(self.xself, float))
        if self.xplus.shape != self.yminus.shape:
            raise ValueError("xplus and yminus need one entry per pair")


@dataclass(frozen=True)
class CoherentVars:
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _finite(self.a, complex))


def _finite(v, kind):
    arr = np.atleast_1d(np.asarray(v, dtype=np.float64 if kind is float else np.complex128))
    if not np.all(np.isfinite(arr)):
        raise ValueError("hidden values must be finite")
    return arr


@dataclass(frozen=True)
class ConditionedState:
    ket: np.ndarray
    weight: float
    log_weight: float


class HiddenLayout:
    """Maps hidden coordinates of one unraveling to bath bras.

    Parameters
    ----------
    kind : {'position', 'quadrature', 'coherent'}
    basis : BasisDescriptor
    pairing : Pairing, optional
        Required for the quadrature unraveling.
    """

    def __init__(self, kind, basis, pairing=None):
        if kind not in UNRAVELINGS:
            raise ValueError(f"unknown unraveling {kind!r}")
        self.kind = kind
        self.basis = basis
        self.pairing = pairing
        K = basis.n_modes
        if kind == QUADRATURE:
            if pairing is None:
                raise ValueError("quadrature unraveling needs a mode pairing")
            covered = sorted([k for p in pairing.pairs for k in p] + list(pairing.self_modes))
            if covered != list(range(K)):
                raise ValueError("pairing does not cover every bath mode exactly once")
            self.n_coords = 2 * pairing.n_pairs + len(pairing.self_modes)
        elif kind == POSITION:
            self.n_coords = K
        else:
            self.n_coords = 2 * K
        # table order used to build the bra: Fock cutoff per unit
        self._nt = basis.n_max if basis.is_dense else 1

    # -- coordinates -------------------------------------------------------

    def coord_names(self):
        K = self.basis.n_modes
        if self.kind == POSITION:
            return [f"x_{k + 1}" for k in range(K)]
        if self.kind == COHERENT:
            return [n for k in range(K) for n in (f"re_a_{k + 1}", f"im_a_{k + 1}")]
        names = [n for p in range(self.pairing.n_pairs) for n in (f"xp_{p + 1}", f"ym_{p + 1}")]
        return names + [f"x0_{k + 1}" for k in self.pairing.self_modes]

    def to_coords(self, hv):
        if self.kind == POSITION and isinstance(hv, PositionVars):
            out = hv.x
        elif self.kind == COHERENT and isinstance(hv, CoherentVars):
            out = np.column_stack([hv.a.real, hv.a.imag]).reshape(-1)
        elif self.kind == QUADRATURE and isinstance(hv, QuadratureVars):
            out = np.concatenate([np.column_stack([hv.xplus, hv.yminus]).reshape(-1), hv.xself])
        else:
            raise TypeError(f"{type(hv).__name__} does not match the {self.kind} unraveling")
        if out.shape[0] != self.n_coords:
            raise ValueError(f"expected {self.n_coords} hidden coordinates, got {out.shape[0]}")
        return np.asarray(out, dtype=np.float64)

    def from_coords(self, q):
        q = np.asarray(q, dtype=np.float64)
        if self.kind == POSITION:
            return PositionVars(q.copy())
        if self.kind == COHERENT:
            return CoherentVars(q[0::2] + 1j * q[1::2])
        P = self.pairing.n_pairs
        return QuadratureVars(q[0:2 * P:2].copy(), q[1:2 * P:2].copy(), q[2 * P:].copy())

    # -- bath bras ---------------------------------------------------------

    def unit_tables(self, q):
        """Per-mode / per-pair bra tables and the log prefactor.

        Returns ``(units, logpref)`` where each unit is ``(modes, table)``;
        ``table`` has shape ``(M, nt+1)`` for one mode or ``(M, nt+1, nt+1)``
        for a pair ``(k, -k)``.
        """
        q = np.atleast_2d(q)
        nt = self._nt
        kern = kernels.active
        units = []
        if self.kind == POSITION:
            logpref = np.sum(-q * q, axis=1) - 0.5 * _LOG_PI * q.shape[1]
            for k in range(q.shape[1]):
                units.append(((k,), kern.hermite_ratio_table(q[:, k], nt)))
        elif self.kind == COHERENT:
            re, im = q[:, 0::2], q[:, 1::2]
            logpref = np.sum(-(re * re + im * im), axis=1) - _LOG_PI * re.shape[1]
            for k in range(re.shape[1]):
                a = np.ascontiguousarray(re[:, k] + 1j * im[:, k])
                units.append(((k,), kern.coherent_ratio_table(a, nt)))
        else:
            P = self.pairing.n_pairs
            xp, ym = q[:, 0:2 * P:2], q[:, 1:2 * P:2]
            xs = q[:, 2 * P:]
            logpref = (np.sum(-(xp * xp + ym * ym), axis=1) - _LOG_PI * P
                       + np.sum(-xs * xs, axis=1) - 0.5 * _LOG_PI * xs.shape[1])
            bs = beam_splitter_tensor(nt)
            phase = np.array([1, -1j, -1, 1j])[np.arange(2 * nt + 1) % 4]
            for p, (k, mk) in enumerate(self.pairing.pairs):
                rx = kern.hermite_ratio_table(np.ascontiguousarray(xp[:, p]), 2 * nt)
                ry = kern.hermite_ratio_table(np.ascontiguousarray(ym[:, p]), 2 * nt) * phase
                outer = (rx[:, :, None] * ry[:, None, :]).reshape(rx.shape[0], -1)
                tab = outer @ bs.reshape((nt + 1) ** 2, -1).T
                units.append(((k, mk), tab.reshape(-1, nt + 1, nt + 1)))
            for i, k in enumerate(self.pairing.self_modes):
                units.append(((k,), kern.hermite_ratio_table(np.ascontiguousarray(xs[:, i]), nt)))
        return units, logpref

    def bras(self, q):
        """Bath bra components ``W`` of shape (M, B) and log weight prefactor (M,)."""
        units, logpref = self.unit_tables(q)
        return assemble_bras(units, self.basis), logpref

    def condition_batch(self, psi, q, lop=None):
        """Condition one guiding state on a batch of hidden configurations.

        Returns ``(kets, weights, lexp)`` with kets normalized (zero rows at
        nodes), weights the densities ``N`` and ``lexp`` the conditioned
        expectation of ``lop`` (zeros if ``lop`` is None).
        """
        W, logpref = self.bras(q)
        S = self.basis.system_dim
        m = np.asarray(psi).reshape(S, self.basis.bath_dim)
        op = np.zeros((S, S), dtype=np.complex128) if lop is None else lop
        kets, norm2, lexp = kernels.active.condition_contract(W, m, op)
        weights = np.exp(logpref) * norm2
        good = norm2 > 0
        kets[good] /= np.sqrt(norm2[good])[:, None]
        return kets, weights, lexp, logpref + np.log(np.where(good, norm2, 1.0))


def assemble_bras(units, basis):
    """Combine per-unit tables into bra components over the bath basis."""
    M = units[0][1].shape[0]
    K = basis.n_modes
    if basis.is_dense:
        letters = [chr(ord("a") + k) for k in range(K)]
        if K > 24:
            raise ValueError("dense Fock bras support at most 24 modes")
        subs = [ "m" + "".join(letters[k] for k in modes) for modes, _ in units]
        out = "m" + "".join(letters)
        W = np.einsum(",".join(subs) + "->" + out, *[t for _, t in units])
        return np.ascontiguousarray(W.reshape(M, -1), dtype=np.complex128)
    W = np.zeros((M, K + 1), dtype=np.complex128)
    W[:, 0] = 1.0
    for modes, t in units:
        if len(modes) == 1:
            W[:, 1 + modes[0]] = t[:, 1]
        else:
            k, mk = modes
            W[:, 1 + k] = t[:, 1, 0]
            W[:, 1 + mk] = t[:, 0, 1]
    return W


def _condition_one(layout, state, hv):
    q = layout.to_coords(hv)[None, :]
    kets, weights, _, logw = layout.condition_batch(state.amplitudes, q)
    w = float(weights[0])
    if not w >= NODE_FLOOR:
        raise NodeEncountered(w, tuple(q[0]))
    return ConditionedState(kets[0], w, float(logw[0]))


def condition_position(state, hv):
    """Condition on bath position eigenvalues ``{x_k}``."""
    return _condition_one(HiddenLayout(POSITION, state.basis), state, hv)


def condition_coherent(state, hv):
    """Condition on coherent amplitudes ``{a_k}``; the weight is the Husimi density."""
    return _condition_one(HiddenLayout(COHERENT, state.basis), state, hv)


def condition_quadrature(state, hv, pairing, method="analytic", n_nodes=400):
    """Condition on EPR quadrature values ``{X+_k, Y-_k}`` of symmetric pairs.

    ``method='analytic'`` writes each EPR bra as a position bra of the sum
    mode times a momentum bra of the difference mode. ``method='integral'``
    evaluates the defining ``x'`` integral with Gauss-Legendre panels; it is
    slower and kept as an independent reference.
    """
    layout = HiddenLayout(QUADRATURE, state.basis, pairing)
    if method == "analytic":
        return _condition_one(layout, state, hv)
    if method != "integral":
        raise ValueError(f"unknown method {method!r}")
    basis = state.basis
    nt = layout._nt
    units = []
    for p, (k, mk) in enumerate(pairing.pairs):
        tab = np.empty((nt + 1, nt + 1), dtype=np.complex128)
        for i in range(nt + 1):
            for j in range(nt + 1):
                tab[i, j] = epr_overlap_integral(hv.xplus[p], hv.yminus[p], i, j, nt, n_nodes)
        units.append(((k, mk), tab[None]))
    for i, k in enumerate(pairing.self_modes):
        units.append(((k,), hermite_functions([hv.xself[i]], nt)))
    W = assemble_bras(units, basis)
    m = state.matrix()
    ket = m @ W[0]
    w = float(np.vdot(ket, ket).real)
    if not w >= NODE_FLOOR:
        raise NodeEncountered(w)
    return ConditionedState(ket / math.sqrt(w), w, math.log(w))


def epr_overlap_integral(xplus, yminus, n_k, n_mk, n_max, n_nodes=400, panel=20):
    """``<X+, Y-|n_k, n_-k>`` by Gauss-Legendre panels over ``|x'| <= x_cut``.

    The EPR bra is ``int dx'/sqrt(2 pi) e^{-i Y x'} <(X+x')/sqrt2|_k <(X-x')/sqrt2|_-k``.
    """
    x_cut = math.sqrt(2 * (2 * n_max + 1)) + 6.0
    n_panels = max(1, -(-n_nodes // panel))
    nodes, wts = np.polynomial.legendre.leggauss(panel)
    edges = np.linspace(-x_cut, x_cut, n_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    xs = (mid[:, None] + half[:, None] * nodes[None, :]).reshape(-1)
    ws = (half[:, None] * wts[None, :]).reshape(-1)
    top = max(n_k, n_mk)
    fk = hermite_functions((xplus + xs) / math.sqrt(2.0), top)[:, n_k]
    fmk = hermite_functions((xplus - xs) / math.sqrt(2.0), top)[:, n_mk]
    return complex(np.sum(ws * np.exp(-1j * yminus * xs) * fk * fmk) / math.sqrt(2 * math.pi))
