"""Fixed-step RK4 propagation of the guiding (universe) state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import StateVector, partial_trace_bath

NORM_TOL = 1e-6
TRUNCATION_TOL = 1e-6


class PropagationError(RuntimeError):
    """Norm drift or truncation loss exceeded tolerance."""

    def __init__(self, message, step, time):
        self.step = step
        self.time = time
        super().__init__(f"{message} (step {step}, t={time:.6g})")


class OffLatticeError(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_final: float
    checkpoint_stride: int = 1
    method: str = "rk4"

    def __post_init__(self):
        if not (self.dt > 0 and self.t_final > 0):
            raise ValueError("dt and t_final must be positive")
        if self.method != "rk4":
            raise ValueError("only fixed-step rk4 is implemented")
        if self.checkpoint_stride < 1:
            raise ValueError("checkpoint_stride must be positive")
        ratio = self.t_final / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("t_final must be an integer multiple of dt")
        if self.n_steps % self.checkpoint_stride:
            raise ValueError("checkpoint_stride must divide the number of steps")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def lattice_dt(self):
        return self.dt * self.checkpoint_stride

    def validate_for(self, detunings):
        bound = 0.1 / max(1.0, float(np.max(np.abs(detunings), initial=0.0)))
        if self.dt > bound * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds stability bound {bound:.4g}")


@dataclass(frozen=True)
class GuidingStateGrid:
    """Guiding state on the trajectory lattice plus the lattice midpoints.

    ``states[j]`` is the state at ``times[j] = j * h`` and ``half_states[j]``
    the state at ``(j + 1/2) * h`` where ``h = dt * checkpoint_stride``.
    """

    times: np.ndarray
    states: np.ndarray
    half_states: np.ndarray
    basis: object
    config: IntegratorConfig
    truncation_loss: float
    norm_drift: np.ndarray
    model: object = None

    @property
    def h(self):
        return self.config.lattice_dt

    @property
    def n_lattice(self):
        return self.times.shape[0]

    def index_of(self, t):
        j = t / self.h
        jr = int(round(j))
        if abs(j - jr) > 1e-9 * max(1.0, abs(j)) or not 0 <= jr < self.n_lattice:
            raise OffLatticeError(
                f"t={t} is not on the lattice (spacing {self.h}, 0..{self.times[-1]}); "
                "align the requested time with the integration grid")
        return jr

    def state_array(self, t):
        return self.states[self.index_of(t)]


def _rk4_step(h, psi, t, dt):
    k1, loss = h.apply_with_loss(psi, t)
    k1 = -1j * k1
    k2 = -1j * h.apply(psi + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = -1j * h.apply(psi + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = -1j * h.apply(psi + dt * k3, t + dt)
    return psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), loss * dt * dt


def evolve(initial, h, cfg, model=None, check=True):
    """Integrate ``d|Psi>/dt = -i H(t)|Psi>`` with fixed-step RK4.

    Parameters
    ----------
    initial : StateVector or ndarray
        Normalized initial state.
    h : object
        Generator with ``apply(psi, t)`` and ``apply_with_loss(psi, t)``.
    cfg : IntegratorConfig
    check : bool
        Raise :class:`PropagationError` on norm drift or truncation loss
        above 1e-6. No renormalization is ever applied.

    Returns
    -------
    GuidingStateGrid
    """
    if isinstance(initial, StateVector):
        psi = np.array(initial.amplitudes)
        basis = initial.basis
    else:
        psi = np.array(initial, dtype=np.complex128)
        basis = None
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    dt = cfg.dt
    stride = cfg.checkpoint_stride
    n_lat = cfg.n_steps // stride
    states = np.empty((n_lat + 1, psi.shape[0]), dtype=np.complex128)
    halves = np.empty((n_lat, psi.shape[0]), dtype=np.complex128)
    drift = np.empty(n_lat + 1)
    states[0] = psi
    drift[0] = abs(np.linalg.norm(psi) - 1.0)
    loss = 0.0
    half_at = stride // 2
    for j in range(n_lat):
        for s in range(stride):
            step = j * stride + s
            t = step * dt
            if s == half_at and stride % 2 == 0:
                halves[j] = psi
            elif s == half_at:
                # lattice midpoint falls inside this step: take an RK4 half step
                halves[j] = _rk4_step(h, psi, t, 0.5 * dt)[0]
            psi, dl = _rk4_step(h, psi, t, dt)
            loss += dl
            if check and loss > TRUNCATION_TOL:
                raise PropagationError(f"truncation loss {loss:.3e} exceeds {TRUNCATION_TOL}",
                                       step + 1, (step + 1) * dt)
        states[j + 1] = psi
        drift[j + 1] = abs(np.linalg.norm(psi) - 1.0)
        if check and drift[j + 1] > NORM_TOL:
            raise PropagationError(f"norm drift {drift[j + 1]:.3e} exceeds {NORM_TOL}",
                                   (j + 1) * stride, (j + 1) * stride * dt)
    times = np.arange(n_lat + 1) * cfg.lattice_dt
    for a in (states, halves, drift, times):
        a.setflags(write=False)
    return GuidingStateGrid(times, states, halves, basis, cfg, loss, drift, model)


def state_at(grid, t):
    """Stored lattice state at time ``t`` (no interpolation)."""
    j = grid.index_of(t)
    if grid.basis is None:
        return grid.states[j]
    return StateVector(grid.states[j], grid.basis, float(grid.times[j]))


def reduced_state(grid, t):
    """Exact ``rho_red(t) = Tr_bath |Psi(t)><Psi(t)|``."""
    return partial_trace_bath(state_at(grid, t))


def evolve_model(model, cfg, check=True):
    """Build the guiding-state grid for a :class:`~modalsse.model.UniverseModel`."""
    cfg.validate_for(model.bath.detunings)
    return evolve(model.initial_state(), model.hamiltonian(), cfg, model=model, check=check)

