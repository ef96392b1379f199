"""Discrete modal dynamics: probability currents, Bell rates and jump runs.

For a decomposition ``{Pi_n}`` of the state space the occupation
probabilities ``P_n = <Phi|Pi_n|Phi>`` obey ``dP_n/dt = sum_m J_nm`` with
``J_nm = 2 Im <Phi|Pi_n H Pi_m|Phi>``. Bell's minimal rates turn the
currents into a Markov jump process whose occupation statistics reproduce
``P_n(t)`` at every time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import RngStream
from .linalg import StateVector

PROB_FLOOR = 1e-14
CURRENT_FLOOR = 1e-12
MAX_STEP_PROB = 0.1
# the step-size check is only applied to states with at least this occupation;
# Bell rates out of a nearly empty state diverge like 1/P_n by construction
RATE_CHECK_FLOOR = 1e-3


class UnoccupiedCurrentError(ArithmeticError):
    """A current flows out of a state whose probability vanishes."""

    def __init__(self, n, m, current, prob):
        self.n, self.m, self.current, self.prob = n, m, current, prob
        super().__init__(
            f"current J[{n},{m}]={current:.3e} with P[{m if current > 0 else n}]={prob:.3e}")


class StepTooLargeError(ValueError):
    def __init__(self, prob, time):
        self.prob, self.time = prob, time
        super().__init__(f"jump probability per step {prob:.3g} > {MAX_STEP_PROB} at t={time:.6g}; "
                         "use a smaller dt")


class AuxiliaryOutcomeError(AssertionError):
    """A run landed on the auxiliary projector of a Naimark extension."""


@dataclass(frozen=True)
class Decomposition:
    """Complete set of orthogonal projectors with outcome labels.

    ``auxiliary`` marks the index of the extra projector of a Naimark
    extension; that outcome must never be occupied.
    """

    projectors: tuple
    values: tuple = None
    auxiliary: int = None

    def __post_init__(self):
        ps = tuple(np.array(p, dtype=np.complex128) for p in self.projectors)
        if not ps:
            raise ValueError("decomposition needs at least one projector")
        d = ps[0].shape[0]
        for i, p in enumerate(ps):
            if p.shape != (d, d):
                raise ValueError("projectors must be square and of equal size")
            for j in range(i, len(ps)):
                target = p if i == j else np.zeros_like(p)
                if np.max(np.abs(p @ ps[j] - target)) > 1e-10:
                    raise ValueError(f"projectors {i} and {j} are not orthogonal projectors")
            if np.max(np.abs(p - p.conj().T)) > 1e-10:
                raise ValueError(f"projector {i} is not Hermitian")
        if np.max(np.abs(sum(ps) - np.eye(d))) > 1e-10:
            raise ValueError("projectors do not sum to the identity")
        for p in ps:
            p.setflags(write=False)
        object.__setattr__(self, "projectors", ps)
        vals = tuple(range(len(ps))) if self.values is None else tuple(self.values)
        if len(vals) != len(ps):
            raise ValueError("one value per projector is required")
        object.__setattr__(self, "values", vals)
        if self.auxiliary is not None and not 0 <= self.auxiliary < len(ps):
            raise ValueError("auxiliary index out of range")

    @classmethod
    def computational(cls, dim, values=None):
        """One-dimensional projectors onto the basis vectors."""
        eye = np.eye(dim)
        return cls(tuple(np.outer(eye[i], eye[i]) for i in range(dim)), values)

    @property
    def dim(self):
        return self.projectors[0].shape[0]

    def __len__(self):
        return len(self.projectors)


@dataclass(frozen=True)
class JumpState:
    """Occupied outcome ``n`` at ``time`` on the guiding state ``phi``."""

    n: int
    time: float
    phi: object

    def property_state(self, dec):
        psi = _amps(self.phi)
        v = dec.projectors[self.n] @ psi
        p = float(np.vdot(v, v).real)
        if p <= 0.0:
            raise ValueError("occupied outcome has zero probability")
        return v / math.sqrt(p)


def _amps(state):
    if isinstance(state, StateVector):
        return state.amplitudes
    return np.asarray(state, dtype=np.complex128)


def probabilities(state, dec):
    """``P_n = <Phi|Pi_n|Phi>`` for every projector."""
    psi = _amps(state)
    if psi.shape[0] != dec.dim:
        raise ValueError("state and decomposition dimensions differ")
    out = np.empty(len(dec))
    for n, p in enumerate(dec.projectors):
        v = p @ psi
        out[n] = np.vdot(v, v).real
    return out


def current_matrix(state, dec, h, t=0.0):
    """Probability currents ``J_nm = 2 Im <Phi|Pi_n H(t) Pi_m|Phi>``.

    ``h`` is either a matrix or a generator with ``apply(psi, t)``. Each
    unordered pair is evaluated once and mirrored, so ``J = -J.T`` holds
    bit for bit.
    """
    psi = _amps(state)
    if psi.shape[0] != dec.dim:
        raise ValueError("state and decomposition dimensions differ")
    parts = [p @ psi for p in dec.projectors]
    if hasattr(h, "apply"):
        hparts = [h.apply(u, t) for u in parts]
    else:
        hm = np.asarray(h)
        hparts = [hm @ u for u in parts]
    N = len(parts)
    J = np.zeros((N, N))
    for n in range(N):
        for m in range(n + 1, N):
            val = 2.0 * np.vdot(parts[n], hparts[m]).imag
            J[n, m] = val
            J[m, n] = -val
    return J


def bell_rates(J, P):
    """Minimal non-negative rates ``T`` with ``T_nm P_m - T_mn P_n = J_nm``.

    ``T_nm`` is the rate of jumping from ``m`` to ``n``. A current leaving a
    state with ``P <= 1e-14`` and ``|J| > 1e-12`` raises
    :class:`UnoccupiedCurrentError`; smaller currents there get zero rate.
    """
    J = np.asarray(J, dtype=float)
    P = np.asarray(P, dtype=float)
    N = P.shape[0]
    T = np.zeros((N, N))
    for n in range(N):
        for m in range(N):
            j = J[n, m]
            if j <= 0.0:
                continue
            # probability flows from m into n
            if P[m] <= PROB_FLOOR:
                if j > CURRENT_FLOOR:
                    raise UnoccupiedCurrentError(n, m, j, P[m])
                continue
            T[n, m] = j / P[m]
    return T


def rate_series(grid, dec, h):
    """Probabilities and Bell rates at every lattice time of ``grid``."""
    n_lat = grid.n_lattice
    N = len(dec)
    P = np.empty((n_lat, N))
    T = np.empty((n_lat, N, N))
    for j in range(n_lat):
        psi = grid.states[j]
        t = float(grid.times[j])
        P[j] = probabilities(psi, dec)
        T[j] = bell_rates(current_matrix(psi, dec, h, t), P[j])
    return P, T


@dataclass
class JumpPaths:
    """Occupation paths of independent runs on a common lattice."""

    times: np.ndarray
    occupations: np.ndarray   # (n_lat, R) outcome index per run
    exact: np.ndarray         # (n_lat, N) guiding-state probabilities
    seed: int

    def frequencies(self, n_outcomes=None):
        N = self.exact.shape[1] if n_outcomes is None else n_outcomes
        R = self.occupations.shape[1]
        out = np.empty((self.times.shape[0], N))
        for n in range(N):
            out[:, n] = np.count_nonzero(self.occupations == n, axis=1) / R
        return out


def simulate_jump_process(grid, dec, h, seed, n0=None, n_runs=1, run_offset=0, chunk=512):
    """Run the Bell jump process on the lattice of ``grid``.

    Over each lattice step of length ``dt`` a run in state ``n`` leaves with
    probability ``1 - exp(-R_n dt)``, ``R_n = sum_m T_mn``, and lands on
    ``m`` with probability ``T_mn / R_n``; rates are frozen at the start of
    the step. Run ``r`` draws from its own stream keyed by
    ``(seed, run_offset + r)``, so results do not depend on ``chunk``.

    Parameters
    ----------
    grid : GuidingStateGrid
    dec : Decomposition
    h : matrix or generator with ``apply(psi, t)``
    seed : int
    n0 : int, optional
        Initial outcome for every run; sampled from ``P(0)`` when omitted.
    n_runs : int
    """
    P, T = rate_series(grid, dec, h)
    dt = grid.h
    n_lat = grid.n_lattice
    N = len(dec)
    idx = np.arange(N)
    out_rate = T.sum(axis=1) - T[:, idx, idx]
    # only states that carry weight are held to the step-size bound
    guarded = np.where(P >= RATE_CHECK_FLOOR, out_rate, 0.0)
    worst = np.max(guarded, axis=1) * dt
    if np.any(worst > MAX_STEP_PROB):
        j = int(np.argmax(worst > MAX_STEP_PROB))
        raise StepTooLargeError(float(worst[j]), float(grid.times[j]))
    leave = -np.expm1(-out_rate * dt)                      # (n_lat, N)
    with np.errstate(invalid="ignore", divide="ignore"):
        dest = np.where(out_rate[:, None, :] > 0, T / out_rate[:, None, :], 0.0)
    cdest = np.cumsum(dest, axis=1)                        # (n_lat, N_to, N_from)
    if n0 is not None and not 0 <= n0 < N:
        raise ValueError("initial outcome out of range")
    occ = np.empty((n_lat, n_runs), dtype=np.int32)
    for start in range(0, n_runs, chunk):
        stop = min(n_runs, start + chunk)
        draws = np.empty((stop - start, 2 * n_lat - 1))
        for r in range(start, stop):
            draws[r - start] = RngStream(seed, run_offset + r).random(2 * n_lat - 1)
        if n0 is None:
            c0 = np.cumsum(P[0]) / np.sum(P[0])
            cur = np.minimum(np.searchsorted(c0, draws[:, 0], side="right"), N - 1)
        else:
            cur = np.full(stop - start, n0)
        cur = cur.astype(np.int32)
        occ[0, start:stop] = cur
        for j in range(n_lat - 1):
            u_jump = draws[:, 2 * j + 1]
            u_dest = draws[:, 2 * j + 2]
            jump = u_jump < leave[j, cur]
            if np.any(jump):
                c = cdest[j][:, cur[jump]]                 # (N, n_jump)
                target = np.sum(u_dest[jump][None, :] * c[-1][None, :] >= c, axis=0)
                cur[jump] = np.minimum(target, N - 1)
            occ[j + 1, start:stop] = cur
    if dec.auxiliary is not None and np.any(occ == dec.auxiliary):
        raise AuxiliaryOutcomeError("a run occupied the auxiliary Naimark outcome")
    occ.setflags(write=False)
    return JumpPaths(np.asarray(grid.times), occ, P, int(seed))
