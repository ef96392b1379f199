"""Monte Carlo reconstruction of the reduced state from trajectory ensembles.

Trajectories are split into fixed chunks of consecutive indices. Each chunk
is an independent work item; partial sums are combined in chunk order, so
results are bit-identical for any number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conditioning import COHERENT
from .dynamics import RngStream, coordinate_coefficients, integrate_batch, make_layout
from .linalg import StateVector, partial_trace_bath, quadrature_moments
from .propagator import IntegratorConfig, evolve_model

MAX_FAILURE_RATE = 0.005
CHUNK_SIZE = 256


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble parameters.

    ``checkpoints`` must lie on the trajectory lattice of the guiding-state
    grid. ``observables`` maps names to Hermitian system operators.
    """

    n_traj: int
    master_seed: int
    checkpoints: tuple
    workers: int = 1
    observables: dict = field(default_factory=dict)
    chunk_size: int = CHUNK_SIZE
    allow_zero_mode: bool = False

    def __post_init__(self):
        if self.n_traj < 1 or self.workers < 1 or self.chunk_size < 1:
            raise ValueError("n_traj, workers and chunk_size must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        object.__setattr__(self, "checkpoints", tuple(float(t) for t in self.checkpoints))
        for name, op in self.observables.items():
            op = np.asarray(op)
            if op.ndim != 2 or np.max(np.abs(op - op.conj().T)) > 1e-12:
                raise ValueError(f"observable {name!r} must be a Hermitian matrix")


@dataclass
class Checkpoint:
    time: float
    rho: np.ndarray           # estimated reduced state
    rho_se: np.ndarray        # entrywise standard errors (re + i im)
    rho_exact: np.ndarray
    trace_distance: float
    coord_mean: np.ndarray
    coord_mean_se: np.ndarray
    coord_var: np.ndarray
    coord_var_se: np.ndarray
    exact_mean: np.ndarray
    exact_var: np.ndarray
    observables: dict         # name -> (estimate, exact)

    def moment_deviations(self):
        """Deviation of empirical hidden moments from the exact ones in standard errors."""
        with np.errstate(divide="ignore", invalid="ignore"):
            dm = np.abs(self.coord_mean - self.exact_mean) / self.coord_mean_se
            dv = np.abs(self.coord_var - self.exact_var) / self.coord_var_se
        return np.nan_to_num(dm, nan=0.0), np.nan_to_num(dv, nan=0.0)


@dataclass
class EnsembleResult:
    unraveling: str
    n_traj: int
    n_completed: int
    failures: int
    checkpoints: list
    coord_names: list
    master_seed: int

    @property
    def failure_rate(self):
        return self.failures / self.n_traj

    @property
    def status(self):
        return "PASS" if self.failure_rate <= MAX_FAILURE_RATE else "FAILED"

    @property
    def trace_distances(self):
        return np.array([c.trace_distance for c in self.checkpoints])

    def at(self, t):
        for c in self.checkpoints:
            if math.isclose(c.time, t, rel_tol=1e-9, abs_tol=1e-12):
                return c
        raise KeyError(f"no checkpoint at t={t}")


def trace_distance(a, b):
    """``(1/2) * sum of singular values of (a - b)``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("density matrices differ in shape")
    return 0.5 * float(np.sum(np.linalg.svd(a - b, compute_uv=False)))


def _run_chunk(grid, layout, bath, lop, seed, start, stop, rec):
    M = stop - start
    q0 = np.empty((M, layout.n_coords))
    for i in range(M):
        q0[i] = RngStream(seed, start + i).normal(math.sqrt(0.5), layout.n_coords)
    res = integrate_batch(grid, layout, bath, q0, lop, record=rec)
    ok = res.failed_at < 0
    sums = []
    for j in rec:
        k = res.kets[j][ok]
        q = res.coords[j][ok]
        proj = np.einsum("ms,mt->mst", k, k.conj())
        sums.append((
            proj.sum(axis=0),
            (proj.real ** 2).sum(axis=0),
            (proj.imag ** 2).sum(axis=0),
            np.stack([(q ** p).sum(axis=0) for p in (1, 2, 3, 4)]),
        ))
    return int(np.count_nonzero(~ok)), sums


def run_ensemble(model, unraveling, cfg, grid=None, integrator=None):
    """Estimate ``rho_red(t)`` as the mean of conditioned projectors.

    Parameters
    ----------
    model : UniverseModel
    unraveling : {'position', 'quadrature', 'coherent'}
    cfg : EnsembleConfig
    grid : GuidingStateGrid, optional
        Precomputed guiding state; built from ``integrator`` otherwise.
    integrator : IntegratorConfig, optional

    Returns
    -------
    EnsembleResult
        ``status`` is ``'FAILED'`` when more than 0.5% of the trajectories
        hit a node.
    """
    if grid is None:
        if integrator is None:
            raise ValueError("either a guiding-state grid or an integrator config is needed")
        grid = evolve_model(model, integrator)
    bath, sys, basis = model.bath, model.system, model.basis
    layout = make_layout(unraveling, bath, basis, cfg.allow_zero_mode)
    rec = [grid.index_of(t) for t in cfg.checkpoints]
    bounds = [(s, min(cfg.n_traj, s + cfg.chunk_size)) for s in range(0, cfg.n_traj, cfg.chunk_size)]

    def work(b):
        return _run_chunk(grid, layout, bath, sys.lowering, cfg.master_seed, b[0], b[1], rec)

    if cfg.workers == 1:
        parts = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(work, bounds))

    failures = sum(p[0] for p in parts)
    n_ok = cfg.n_traj - failures
    coeffs = coordinate_coefficients(layout)
    offset = 0.25 if layout.kind == COHERENT else 0.0
    checkpoints = []
    for c, j in enumerate(rec):
        tot = [np.zeros_like(x) for x in parts[0][1][c]]
        for p in parts:
            for i, x in enumerate(p[1][c]):
                tot[i] = tot[i] + x
        s_rho, s_re2, s_im2, s_q = tot
        n = max(n_ok, 1)
        rho = s_rho / n
        rho = 0.5 * (rho + rho.conj().T)
        var_re = np.maximum(s_re2 / n - rho.real ** 2, 0.0)
        var_im = np.maximum(s_im2 / n - rho.imag ** 2, 0.0)
        se = np.sqrt(var_re / n) + 1j * np.sqrt(var_im / n)
        m1, m2, m3, m4 = (s_q[p] / n for p in range(4))
        var = np.maximum(m2 - m1 ** 2, 0.0)
        mu4 = m4 - 4 * m3 * m1 + 6 * m2 * m1 ** 2 - 3 * m1 ** 4
        var_se = np.sqrt(np.maximum(mu4 - var ** 2, 0.0) / n)
        state = StateVector(grid.states[j], basis, float(grid.times[j]))
        exact = [quadrature_moments(state.amplitudes, basis, cv) for cv in coeffs]
        rho_exact = partial_trace_bath(state)
        obs = {name: (float(np.trace(rho @ op).real), float(np.trace(rho_exact @ op).real))
               for name, op in cfg.observables.items()}
        checkpoints.append(Checkpoint(
            time=float(grid.times[j]), rho=rho, rho_se=se, rho_exact=rho_exact,
            trace_distance=trace_distance(rho, rho_exact),
            coord_mean=m1, coord_mean_se=np.sqrt(var / n), coord_var=var, coord_var_se=var_se,
            exact_mean=np.array([e[0] for e in exact]),
            exact_var=np.array([e[1] + offset for e in exact]),
            observables=obs))
    return EnsembleResult(layout.kind, cfg.n_traj, n_ok, failures, checkpoints,
                          layout.coord_names(), int(cfg.master_seed))


# -- Markovian reference ---------------------------------------------------

@dataclass
class LindbladSeries:
    times: np.ndarray
    rhos: np.ndarray
    expectations: dict


def lindblad_oracle(sys, gamma, cfg, observables=None, h=None):
    """RK4 integration of ``d rho/dt = -i[H, rho] + gamma (L rho L^dag - {L^dag L, rho}/2)``.

    ``H`` defaults to the system Hamiltonian of ``sys`` and ``L`` is its
    lowering operator. Returns the density matrix at every step.
    """
    if sys.dim > 8:
        raise ValueError("the Lindblad reference is meant for system_dim <= 8")
    if not isinstance(cfg, IntegratorConfig):
        raise TypeError("cfg must be an IntegratorConfig")
    H = sys.h_int if h is None else np.asarray(h, dtype=np.complex128)
    L = sys.lowering
    Ld = L.conj().T
    LdL = Ld @ L

    def rhs(r):
        return -1j * (H @ r - r @ H) + gamma * (L @ r @ Ld - 0.5 * (LdL @ r + r @ LdL))

    dt = cfg.dt
    n = cfg.n_steps
    rho = np.outer(sys.initial_state, sys.initial_state.conj())
    rhos = np.empty((n + 1,) + rho.shape, dtype=np.complex128)
    rhos[0] = rho
    for i in range(n):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        rhos[i + 1] = rho
    times = np.arange(n + 1) * dt
    obs = {}
    for name, op in (observables or {}).items():
        obs[name] = np.einsum("tij,ji->t", rhos, np.asarray(op)).real
    return LindbladSeries(times, rhos, obs)
