"""Hidden-variable dynamics: samplers, velocity fields, noise and trajectories.

The guiding state never depends on the hidden values, so one precomputed
:class:`~modalsse.propagator.GuidingStateGrid` drives any number of
trajectories. Trajectories are integrated in batches with RK4 whose stage
times coincide with stored lattice points and midpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditioning import (
    COHERENT,
    NODE_FLOOR,
    POSITION,
    QUADRATURE,
    HiddenLayout,
    NodeEncountered,
)
from .linalg import BasisDescriptor, StateVector, embed, lower_array, raise_array
from .model import build_h_uni, check_symmetric_pairs

SQRT2 = math.sqrt(2.0)


class RngStream:
    """Counter-based stream keyed by ``(master_seed, trajectory_index)``.

    Philox with a two-word key: streams with different indices are
    independent by construction, and a stream's draws never depend on how
    many other streams exist or which worker runs it.
    """

    def __init__(self, master_seed, trajectory_index=0):
        if not 0 <= master_seed < 2**64 or not 0 <= trajectory_index < 2**64:
            raise ValueError("seed and index must fit in 64 bits")
        self.master_seed = int(master_seed)
        self.trajectory_index = int(trajectory_index)
        key = np.array([self.master_seed, self.trajectory_index], dtype=np.uint64)
        self.bit_generator = np.random.Philox(key=key)
        self.generator = np.random.Generator(self.bit_generator)

    @property
    def counter(self):
        return self.bit_generator.state["state"]["counter"].copy()

    def normal(self, scale, size):
        return self.generator.normal(0.0, scale, size)

    def random(self, size):
        return self.generator.random(size)


def make_layout(kind, bath, basis, allow_zero_mode=False):
    pairing = None
    if kind == QUADRATURE:
        pairing = check_symmetric_pairs(bath, allow_zero_mode=allow_zero_mode)
    return HiddenLayout(kind, basis, pairing)


def sample_initial(unraveling, bath, rng, basis=None, pairing=None, allow_zero_mode=False):
    """Draw initial hidden values from the vacuum Born/Husimi density.

    Every canonical coordinate (``x_k``; ``X+``, ``Y-``; ``Re a``, ``Im a``)
    is an independent normal variate with variance 1/2.
    """
    layout = _layout_for(unraveling, bath, basis, pairing, allow_zero_mode)
    return layout.from_coords(rng.normal(math.sqrt(0.5), layout.n_coords))


def _layout_for(kind, bath, basis, pairing, allow_zero_mode):
    if isinstance(kind, HiddenLayout):
        return kind
    if basis is None:
        basis = BasisDescriptor.single_excitation(1, len(bath))
    if kind == QUADRATURE and pairing is None:
        pairing = check_symmetric_pairs(bath, allow_zero_mode=allow_zero_mode)
    return HiddenLayout(kind, basis, pairing)


# -- velocity fields -------------------------------------------------------

def closed_drift(layout, bath, lexp, t, sign=1.0):
    """Closed-form drifts for a batch: ``lexp`` is ``<L>`` per configuration.

    Returns an array (M, D) in canonical coordinate order.
    """
    lexp = np.atleast_1d(np.asarray(lexp, dtype=np.complex128))
    g = bath.couplings
    w = bath.detunings
    M = lexp.shape[0]
    if layout.kind == POSITION:
        out = SQRT2 * g[None, :] * (lexp[:, None] * np.exp(1j * w * t)[None, :]).real
    elif layout.kind == COHERENT:
        # d a_k/dt = g_k e^{i W_k t} <L>, the conjugate of d a_k^*/dt = g_k e^{-i W_k t} <L^dag>
        da = g[None, :] * np.exp(1j * w * t)[None, :] * lexp[:, None]
        out = np.empty((M, 2 * len(g)))
        out[:, 0::2] = da.real
        out[:, 1::2] = da.imag
    else:
        pairing = layout.pairing
        lx = 2.0 * lexp.real
        out = np.empty((M, layout.n_coords))
        for p, (k, _) in enumerate(pairing.pairs):
            out[:, 2 * p] = g[k] * math.cos(w[k] * t) * lx
            out[:, 2 * p + 1] = g[k] * math.sin(w[k] * t) * lx
        base = 2 * pairing.n_pairs
        for i, k in enumerate(pairing.self_modes):
            out[:, base + i] = SQRT2 * g[k] * (lexp * np.exp(1j * w[k] * t)).real
    return sign * out


def velocity_closed(unraveling, lexp, bath, t, pairing=None, allow_zero_mode=False):
    """Drift of every hidden coordinate given the conditioned ``<L>``.

    Position ``d x_k``; quadrature ``d X+``, ``d Y-`` per pair (driven by
    ``<L + L^dag> = 2 Re<L>``); coherent ``d Re a_k``, ``d Im a_k``.
    """
    layout = _layout_for(unraveling, bath, None, pairing, allow_zero_mode)
    return closed_drift(layout, bath, [lexp], t)[0]


def coordinate_coefficients(layout):
    """For each hidden coordinate, ``c`` with ``q = A + A^dag``, ``A = sum_k c_k a_k``.

    For the coherent unraveling these are the bath parts of the Naimark
    operators ``x+ = (a + a^dag + b + b^dag)/2`` and
    ``y- = (-i a + i a^dag + i b - i b^dag)/2``; the auxiliary ``b`` parts
    commute with the Hamiltonian.
    """
    K = layout.basis.n_modes
    rows = []
    if layout.kind == POSITION:
        for k in range(K):
            c = np.zeros(K, complex)
            c[k] = 1 / SQRT2
            rows.append(c)
    elif layout.kind == COHERENT:
        for k in range(K):
            cx = np.zeros(K, complex)
            cx[k] = 0.5
            cy = np.zeros(K, complex)
            cy[k] = -0.5j
            rows += [cx, cy]
    else:
        for k, mk in layout.pairing.pairs:
            cx = np.zeros(K, complex)
            cx[[k, mk]] = 0.5
            cy = np.zeros(K, complex)
            cy[k], cy[mk] = -0.5j, 0.5j
            rows += [cx, cy]
        for k in layout.pairing.self_modes:
            c = np.zeros(K, complex)
            c[k] = 1 / SQRT2
            rows.append(c)
    return np.array(rows)


def _apply_coordinate(psi, basis, coeffs):
    out = np.zeros_like(psi)
    for k, c in enumerate(coeffs):
        if c != 0:
            out += c * lower_array(psi, basis, k)
            r, dropped = raise_array(psi, basis, k)
            if dropped > 1e-28:
                raise RuntimeError("coordinate operator hit the padded truncation edge")
            out += np.conj(c) * r
    return out


def _as_dense(state, pad):
    basis = state.basis
    if basis.is_dense:
        return embed(state, basis.padded(pad))
    if basis.n_modes > 12:
        raise ValueError("velocity_general needs a dense embedding; too many modes")
    dense = BasisDescriptor.dense_fock(basis.system_dim, basis.n_modes, 1 + pad)
    out = np.zeros(dense.tensor_shape, dtype=np.complex128)
    m = state.matrix()
    zero = (0,) * basis.n_modes
    out[(slice(None),) + zero] = m[:, 0]
    for k in range(basis.n_modes):
        idx = [0] * basis.n_modes
        idx[k] = 1
        out[(slice(None),) + tuple(idx)] = m[:, k + 1]
    return StateVector(out.reshape(-1), dense, state.time)


def velocity_general(state, hv, t, bath, sys, unraveling=None, pairing=None, allow_zero_mode=False):
    """Drift from the commutator form of the velocity operator.

    ``v_k = Re[<{q}|Psi>^dag <{q}|v_k Psi>] / N`` with
    ``v_k = -i [q_k, H_uni(t)]`` applied to the full universe state. The state
    is first embedded in a dense basis padded by two Fock levels so the
    commutator is exact. Independent of :func:`velocity_closed`.
    """
    kind = unraveling or {"PositionVars": POSITION, "QuadratureVars": QUADRATURE,
                          "CoherentVars": COHERENT}[type(hv).__name__]
    if kind == QUADRATURE and pairing is None:
        pairing = check_symmetric_pairs(bath, allow_zero_mode=allow_zero_mode)
    big = _as_dense(state, 2)
    basis = big.basis
    layout = HiddenLayout(kind, basis, pairing)
    q = HiddenLayout(kind, state.basis, pairing).to_coords(hv)
    h = build_h_uni(t, bath, sys, basis)
    psi = big.amplitudes
    hpsi = h(psi)
    W, logpref = layout.bras(q[None, :])
    S = basis.system_dim
    proj = W[0]
    phi = psi.reshape(S, -1) @ proj
    norm2 = float(np.vdot(phi, phi).real)
    if not math.exp(logpref[0]) * norm2 >= NODE_FLOOR:
        raise NodeEncountered(math.exp(logpref[0]) * norm2, tuple(q))
    out = np.empty(layout.n_coords)
    for i, c in enumerate(coordinate_coefficients(layout)):
        vpsi = -1j * (_apply_coordinate(hpsi, basis, c) - h(_apply_coordinate(psi, basis, c)))
        phiv = vpsi.reshape(S, -1) @ proj
        out[i] = np.vdot(phi, phiv).real / norm2
    return out


# -- noise -----------------------------------------------------------------

def noise_batch(layout, bath, q, t):
    q = np.atleast_2d(q)
    g = bath.couplings
    w = bath.detunings
    if layout.kind == POSITION:
        return (SQRT2 * q * (g * np.exp(-1j * w * t))[None, :]).sum(axis=1)
    if layout.kind == COHERENT:
        a = q[:, 0::2] + 1j * q[:, 1::2]
        return (a * (g * np.exp(-1j * w * t))[None, :]).sum(axis=1)
    pairing = layout.pairing
    z = np.zeros(q.shape[0])
    for p, (k, _) in enumerate(pairing.pairs):
        z = z + 2.0 * g[k] * (q[:, 2 * p] * math.cos(w[k] * t) + q[:, 2 * p + 1] * math.sin(w[k] * t))
    base = 2 * pairing.n_pairs
    for i, k in enumerate(pairing.self_modes):
        z = z + SQRT2 * g[k] * q[:, base + i]
    return z.astype(np.complex128)


@dataclass(frozen=True)
class NoiseSample:
    z: complex
    t: float


def noise_z(hv, bath, t, pairing=None, unraveling=None, allow_zero_mode=False):
    """Noise function ``z(t)``: a fixed linear combination of the hidden values."""
    kind = unraveling or {"PositionVars": POSITION, "QuadratureVars": QUADRATURE,
                          "CoherentVars": COHERENT}[type(hv).__name__]
    layout = _layout_for(kind, bath, None, pairing, allow_zero_mode)
    z = complex(noise_batch(layout, bath, layout.to_coords(hv), t)[0])
    if kind == QUADRATURE:
        z = complex(z.real, 0.0)
    return NoiseSample(z, float(t))


# -- trajectories ----------------------------------------------------------

@dataclass
class BatchResult:
    """Lattice series for a batch of M trajectories."""

    times: np.ndarray
    coords: np.ndarray      # (n_lat, M, D)
    lexp: np.ndarray        # (n_lat, M)
    z: np.ndarray           # (n_lat, M)
    kets: dict              # lattice index -> (M, S) conditioned kets
    failed_at: np.ndarray   # (M,) lattice index of node failure, -1 if none


def integrate_batch(grid, layout, bath, q0, lop, record=None, drift=None):
    """RK4 transport of a batch of hidden configurations over the lattice.

    Parameters
    ----------
    grid : GuidingStateGrid
    layout : HiddenLayout
    q0 : array (M, D)
        Initial hidden coordinates.
    lop : array (S, S)
        System lowering operator.
    record : iterable of int, optional
        Lattice indices at which conditioned kets are kept (default: all).
    drift : callable, optional
        ``drift(lexp, t) -> (M, D)``; defaults to the closed forms.
    """
    if drift is None:
        def drift(lexp, t):
            return closed_drift(layout, bath, lexp, t)
    q = np.array(q0, dtype=np.float64, copy=True)
    M, D = q.shape
    n = grid.n_lattice
    h = grid.h
    rec = set(range(n)) if record is None else set(int(i) for i in record)
    coords = np.empty((n, M, D))
    lexps = np.zeros((n, M), dtype=np.complex128)
    zs = np.zeros((n, M), dtype=np.complex128)
    kets = {}
    failed_at = np.full(M, -1, dtype=np.int64)
    alive = np.ones(M, dtype=bool)

    def stage(qs, psi, t):
        k, wts, le, _ = layout.condition_batch(psi, qs, lop)
        bad = ~(wts >= NODE_FLOOR)
        v = drift(le, t)
        v[bad] = 0.0
        return v, k, le, bad

    for j in range(n):
        t = float(grid.times[j])
        v1, k1, le, bad = stage(q, grid.states[j], t)
        newly = bad & alive
        failed_at[newly] = j
        alive &= ~bad
        coords[j] = q
        lexps[j] = le
        zs[j] = noise_batch(layout, bath, q, t)
        if j in rec:
            kets[j] = k1
        if j == n - 1:
            break
        th = t + 0.5 * h
        v2, _, _, b2 = stage(q + 0.5 * h * v1, grid.half_states[j], th)
        v3, _, _, b3 = stage(q + 0.5 * h * v2, grid.half_states[j], th)
        v4, _, _, b4 = stage(q + h * v3, grid.states[j + 1], float(grid.times[j + 1]))
        stage_bad = (b2 | b3 | b4) & alive
        failed_at[stage_bad] = j + 1
        alive &= ~stage_bad
        step = (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        step[~alive] = 0.0
        q = q + step
    if layout.kind == QUADRATURE:
        zs = zs.real.astype(np.complex128)
    return BatchResult(np.asarray(grid.times), coords, lexps, zs, kets, failed_at)


@dataclass
class Trajectory:
    times: np.ndarray
    coords: np.ndarray
    coord_names: list
    z: np.ndarray
    lexp: np.ndarray
    kets: np.ndarray
    seed: int
    trajectory_index: int
    unraveling: str
    status: str = "completed"
    failure_time: float = None
    snapshots: dict = field(default_factory=dict)

    def hidden_vars(self, j, layout):
        return layout.from_coords(self.coords[j])


def integrate_trajectory(grid, unraveling, seed, trajectory_index=0, velocity="closed",
                         snapshot_times=(), allow_zero_mode=False, initial=None):
    """Sample initial hidden values from ``(seed, trajectory_index)`` and transport them.

    ``velocity='general'`` evaluates every RK4 stage with the commutator
    form (slow; a cross-check of the closed forms).
    """
    model = grid.model
    if model is None:
        raise ValueError("grid was not built from a UniverseModel")
    bath, sys = model.bath, model.system
    layout = make_layout(unraveling, bath, model.basis, allow_zero_mode)
    if initial is None:
        q0 = layout.to_coords(sample_initial(layout, bath, RngStream(seed, trajectory_index)))
    else:
        q0 = layout.to_coords(initial)
    if velocity == "closed":
        res = integrate_batch(grid, layout, bath, q0[None, :], sys.lowering)
    elif velocity == "general":
        res = _integrate_general(grid, layout, model, q0)
    else:
        raise ValueError(f"velocity must be 'closed' or 'general', got {velocity!r}")
    fail = int(res.failed_at[0])
    kets = np.stack([res.kets[j][0] for j in range(grid.n_lattice)])
    snaps = {}
    for ts in snapshot_times:
        snaps[float(ts)] = kets[grid.index_of(ts)]
    return Trajectory(
        times=res.times, coords=res.coords[:, 0, :], coord_names=layout.coord_names(),
        z=res.z[:, 0], lexp=res.lexp[:, 0], kets=kets, seed=int(seed),
        trajectory_index=int(trajectory_index), unraveling=layout.kind,
        status="completed" if fail < 0 else "node-failure",
        failure_time=None if fail < 0 else float(grid.times[fail]), snapshots=snaps)


def _integrate_general(grid, layout, model, q0):
    bath, sys, basis = model.bath, model.system, model.basis
    lop = sys.lowering

    def general(qv, psi, t):
        st = StateVector(psi, basis, t)
        return velocity_general(st, layout.from_coords(qv), t, bath, sys,
                                unraveling=layout.kind, pairing=layout.pairing)

    n = grid.n_lattice
    h = grid.h
    q = np.array(q0, dtype=float)
    coords = np.empty((n, 1, q.shape[0]))
    lexps = np.zeros((n, 1), complex)
    zs = np.zeros((n, 1), complex)
    kets = {}
    failed = np.array([-1])
    for j in range(n):
        t = float(grid.times[j])
        k, wts, le, _ = layout.condition_batch(grid.states[j], q[None, :], lop)
        coords[j, 0] = q
        lexps[j] = le
        zs[j] = noise_batch(layout, bath, q, t)
        kets[j] = k
        if j == n - 1:
            break
        try:
            v1 = general(q, grid.states[j], t)
            v2 = general(q + 0.5 * h * v1, grid.half_states[j], t + 0.5 * h)
            v3 = general(q + 0.5 * h * v2, grid.half_states[j], t + 0.5 * h)
            v4 = general(q + h * v3, grid.states[j + 1], float(grid.times[j + 1]))
        except NodeEncountered:
            failed[0] = j
            for jj in range(j + 1, n):
                coords[jj, 0] = q
                kets[jj] = k
            break
        q = q + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
    if layout.kind == QUADRATURE:
        zs = zs.real.astype(complex)
    return BatchResult(np.asarray(grid.times), coords, lexps, zs, kets, failed)
