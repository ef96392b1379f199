"""Canned reference models and the invariant batteries run by ``modalsse verify``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .bell import Decomposition, current_matrix, bell_rates, probabilities, simulate_jump_process
from .conditioning import COHERENT, QUADRATURE, UNRAVELINGS
from .dynamics import RngStream, closed_drift, make_layout, velocity_general
from .ensemble import EnsembleConfig, lindblad_oracle, run_ensemble, trace_distance
from .linalg import BasisDescriptor, StateVector
from .model import BathSpec, DenseHamiltonian, ModeSpec, SystemSpec, UniverseModel, sigma_minus
from .propagator import IntegratorConfig, evolve, evolve_model

STANDARD_CHECKPOINTS = (1.0, 2.0, 3.0)


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def __post_init__(self):
        # numpy scalars leak in from comparisons; keep the record JSON-native
        self.value = float(self.value)
        self.threshold = float(self.threshold)
        self.passed = bool(self.passed)

    def as_dict(self):
        return asdict(self)


# -- reference models ------------------------------------------------------

def standard_model(n_max=3):
    """Two-level system, ``L = sigma_-``, ``H_int = 0``, modes at +-1 with g = 0.4,
    started in ``(|e> + |g>)/sqrt(2)``."""
    system = SystemSpec(np.zeros((2, 2)), sigma_minus(), np.array([1.0, 1.0]) / math.sqrt(2))
    bath = BathSpec.from_arrays([1.0, -1.0], [0.4, 0.4])
    return UniverseModel(system, bath, BasisDescriptor.dense_fock(2, 2, n_max))


def standard_integrator():
    return IntegratorConfig(1e-3, 3.0)


def markov_model(n_modes=101, omega_max=10.0, gamma=1.0):
    """Flat band of ``n_modes`` modes on ``[-omega_max, omega_max]``, single excitation, start ``|e>``."""
    w = np.linspace(-omega_max, omega_max, n_modes)
    g = math.sqrt(gamma * (w[1] - w[0]) / (2 * math.pi))
    system = SystemSpec(np.zeros((2, 2)), sigma_minus(), np.array([1.0, 0.0]))
    bath = BathSpec(tuple(ModeSpec(float(x), g) for x in w))
    return UniverseModel(system, bath, BasisDescriptor.single_excitation(2, n_modes))


def markov_integrator(omega_max=10.0, t_final=3.0):
    return IntegratorConfig(0.05 / omega_max, t_final, checkpoint_stride=2)


def vacuum_rabi_model():
    """One resonant mode with g = 1: ``P_e(t) = cos^2 t``."""
    system = SystemSpec(np.zeros((2, 2)), sigma_minus(), np.array([1.0, 0.0]))
    bath = BathSpec((ModeSpec(0.0, 1.0),))
    return system, bath


def rabi_bell(t_final=math.pi, n_per_pi=3144):
    """``H = sigma_x / 2`` in the basis (|0>, |1>) with ``Phi(0) = |0>``."""
    H = DenseHamiltonian(0.5 * np.array([[0, 1], [1, 0]], dtype=complex))
    dt = math.pi / n_per_pi
    cfg = IntegratorConfig(dt, t_final)
    grid = evolve(np.array([1, 0], dtype=complex), H, cfg)
    return H, grid, Decomposition.computational(2)


# -- batteries -------------------------------------------------------------

def random_state(basis, rng):
    v = rng.normal(1.0, 2 * basis.dim).view(np.complex128)
    return v / np.linalg.norm(v)


def velocity_oracle(n_probes=100, seed=0, corrupt_sign=False, model=None):
    """Max relative deviation of the closed drifts from the commutator form per unraveling."""
    model = model or standard_model()
    bath, sys, basis = model.bath, model.system, model.basis
    out = {}
    for kind in UNRAVELINGS:
        layout = make_layout(kind, bath, basis)
        rng = RngStream(seed, UNRAVELINGS.index(kind))
        worst = 0.0
        for _ in range(n_probes):
            psi = random_state(basis, rng)
            q = rng.normal(1.0, layout.n_coords)
            t = float(3.0 * rng.random(1)[0])
            _, _, lexp, _ = layout.condition_batch(psi, q[None, :], sys.lowering)
            vc = closed_drift(layout, bath, lexp, t, sign=-1.0 if corrupt_sign else 1.0)[0]
            vg = velocity_general(StateVector(psi, basis, t), layout.from_coords(q), t, bath, sys,
                                  unraveling=kind, pairing=layout.pairing)
            scale = max(np.max(np.abs(vg)), 1e-12)
            worst = max(worst, float(np.max(np.abs(vc - vg)) / scale))
        out[kind] = worst
    return out


def standard_ensembles(n_traj=2000, seed=1234, workers=1, grid=None):
    model = standard_model()
    if grid is None:
        grid = evolve_model(model, standard_integrator())
    cfg = EnsembleConfig(n_traj, seed, STANDARD_CHECKPOINTS, workers=workers)
    return {kind: run_ensemble(model, kind, cfg, grid=grid) for kind in UNRAVELINGS}


def markov_ensembles(n_traj=1000, seed=1234, workers=1, n_modes=101, omega_max=10.0):
    model = markov_model(n_modes, omega_max)
    grid = evolve_model(model, markov_integrator(omega_max))
    cps = tuple(round(0.2 * i, 10) for i in range(1, 16))
    obs = {"p_e": np.diag([1.0, 0.0])}
    cfg = EnsembleConfig(n_traj, seed, cps, workers=workers, observables=obs, allow_zero_mode=True)
    return {kind: run_ensemble(model, kind, cfg, grid=grid) for kind in (QUADRATURE, COHERENT)}


def markov_deviation(result, gamma=1.0):
    """Max ``|P_e estimate - exp(-gamma t)|`` over the checkpoints."""
    return max(abs(c.observables["p_e"][0] - math.exp(-gamma * c.time)) for c in result.checkpoints)


def moment_zscore(result):
    """Largest deviation (in standard errors) of any hidden mean or variance.

    The coherent unraveling is held to its means only.
    """
    worst = 0.0
    for c in result.checkpoints:
        dm, dv = c.moment_deviations()
        worst = max(worst, float(np.max(dm)))
        if result.unraveling != COHERENT:
            worst = max(worst, float(np.max(dv)))
    return worst


def bell_battery(n_runs=10_000, seed=1234):
    H, grid, dec = rabi_bell()
    paths = simulate_jump_process(grid, dec, H, seed, n_runs=n_runs)
    freq = paths.frequencies()
    dev = 0.0
    for t in (math.pi / 4, math.pi / 2, math.pi):
        j = grid.index_of(t)
        dev = max(dev, float(np.max(np.abs(freq[j] - paths.exact[j]))))
    asym = 0.0
    recon = 0.0
    negative = 0.0
    rng = RngStream(seed, 1)
    for j in range(0, grid.n_lattice, 97):
        psi = grid.states[j]
        P = probabilities(psi, dec)
        J = current_matrix(psi, dec, H, float(grid.times[j]))
        T = bell_rates(J, P)
        asym = max(asym, float(np.max(np.abs(J + J.T))))
        negative = max(negative, float(-np.min(T)))
        recon = max(recon, float(np.max(np.abs(T * P[None, :] - (T * P[None, :]).T - J))))
    for _ in range(50):
        N = 5
        A = rng.normal(1.0, N * N).reshape(N, N)
        J = np.triu(A, 1) - np.triu(A, 1).T
        P = rng.random(N) + 0.05
        T = bell_rates(J, P)
        recon = max(recon, float(np.max(np.abs(T * P[None, :] - (T * P[None, :]).T - J))))
        negative = max(negative, float(-np.min(T)))
    return {"occupation": dev, "antisymmetry": asym, "negative_rate": max(negative, 0.0),
            "current_reconstruction": recon}


def propagator_battery():
    system, bath = vacuum_rabi_model()
    basis = BasisDescriptor.dense_fock(2, 1, 2)
    model = UniverseModel(system, bath, basis)

    def p_error(dt, t_final=3.0):
        g = evolve_model(model, IntegratorConfig(dt, t_final))
        pe = np.sum(np.abs(g.states.reshape(g.n_lattice, 2, -1)[:, 0, :]) ** 2, axis=1)
        return float(np.max(np.abs(pe - np.cos(g.times) ** 2))), g

    err, g = p_error(1e-3)
    drift_rate = float(np.max(g.norm_drift) / g.times[-1])
    # order measured on the amplitude at coarse steps where truncation error dominates
    e1 = _endpoint_error(model, 0.05)
    e2 = _endpoint_error(model, 0.025)
    ratio = e1 / e2
    agree = dense_vs_single(model_pair=_shared_domain_pair())
    return {"vacuum_rabi": err, "norm_drift_per_time": drift_rate, "rk4_ratio": ratio,
            "dense_vs_single": agree}


def _endpoint_error(model, dt, t_final=3.0):
    g = evolve_model(model, IntegratorConfig(dt, t_final))
    amp = g.states[-1].reshape(2, -1)[0, 0]
    return abs(amp - math.cos(t_final))


def _shared_domain_pair():
    """Same physics in both layouts: excitation number is conserved, so a state with
    at most one quantum never leaves the sector the single-excitation basis spans."""
    system = SystemSpec(np.array([[0.3, 0.0], [0.0, -0.3]]), sigma_minus(), np.array([0.6, 0.8]))
    bath = BathSpec.from_arrays([0.7, -0.4, 1.1], [0.5, 0.3, 0.2])
    dense = UniverseModel(system, bath, BasisDescriptor.dense_fock(2, 3, 1))
    single = UniverseModel(system, bath, BasisDescriptor.single_excitation(2, 3))
    return dense, single


def dense_vs_single(model_pair, t_final=3.0, dt=1e-3):
    dense, single = model_pair
    gd = evolve_model(dense, IntegratorConfig(dt, t_final))
    gs = evolve_model(single, IntegratorConfig(dt, t_final))
    dense_b = dense.basis
    K = dense_b.n_modes
    worst = 0.0
    for j in range(0, gd.n_lattice, 100):
        t = gd.states[j].reshape(dense_b.tensor_shape)
        proj = np.empty((2, K + 1), complex)
        proj[:, 0] = t[(slice(None),) + (0,) * K]
        for k in range(K):
            idx = [0] * K
            idx[k] = 1
            proj[:, k + 1] = t[(slice(None),) + tuple(idx)]
        worst = max(worst, float(np.max(np.abs(proj.reshape(-1) - gs.states[j]))))
    return worst


def run_suite(name="quick", corrupt_velocity_sign=False, workers=1):
    """Run a battery and return a list of :class:`Check` records.

    ``quick`` uses small ensembles and a wider reservoir band so it finishes
    in about a minute; ``acceptance`` runs the full-size reference problems.
    """
    if name not in ("quick", "acceptance"):
        raise ValueError(f"unknown suite {name!r}")
    full = name == "acceptance"
    checks = []
    vel = velocity_oracle(100 if full else 30, corrupt_sign=corrupt_velocity_sign)
    for kind, dev in vel.items():
        checks.append(Check(f"velocity_oracle.{kind}", dev, 1e-8, dev <= 1e-8))

    prop = propagator_battery()
    checks += [
        Check("propagator.vacuum_rabi", prop["vacuum_rabi"], 1e-8, prop["vacuum_rabi"] <= 1e-8),
        Check("propagator.norm_drift_per_time", prop["norm_drift_per_time"], 1e-8,
              prop["norm_drift_per_time"] <= 1e-8),
        Check("propagator.rk4_halving_ratio", prop["rk4_ratio"], 16.0, 12 <= prop["rk4_ratio"] <= 20,
              "accepted range [12, 20]"),
        Check("propagator.dense_vs_single", prop["dense_vs_single"], 1e-6, prop["dense_vs_single"] <= 1e-6),
    ]

    M = 2000 if full else 400
    ens = standard_ensembles(M, workers=workers)
    bound = max(0.05, 3 / math.sqrt(M))
    for kind, r in ens.items():
        td = float(np.max(r.trace_distances))
        checks.append(Check(f"reconstruction.{kind}", td, bound, td <= bound,
                            "trace distances " + ", ".join(f"{x:.4g}" for x in r.trace_distances)))
        z = moment_zscore(r)
        checks.append(Check(f"equivariance.{kind}", z, 3.0, z <= 3.0, "standard errors"))
        checks.append(Check(f"node_failures.{kind}", r.failure_rate, 0.005, r.failure_rate <= 0.005))
    kinds = list(ens)
    for a in range(len(kinds)):
        for b in range(a + 1, len(kinds)):
            d = max(trace_distance(x.rho, y.rho)
                    for x, y in zip(ens[kinds[a]].checkpoints, ens[kinds[b]].checkpoints))
            checks.append(Check(f"cross_unraveling.{kinds[a]}-{kinds[b]}", d, 2 * bound, d <= 2 * bound))

    bell = bell_battery(10_000 if full else 4000)
    occ_bound = 0.02 if full else 0.03
    checks += [
        Check("bell.occupation", bell["occupation"], occ_bound, bell["occupation"] <= occ_bound),
        Check("bell.antisymmetry", bell["antisymmetry"], 0.0, bell["antisymmetry"] == 0.0),
        Check("bell.negative_rate", bell["negative_rate"], 0.0, bell["negative_rate"] <= 0.0),
        Check("bell.current_reconstruction", bell["current_reconstruction"], 1e-12,
              bell["current_reconstruction"] <= 1e-12),
    ]

    if full:
        mk = markov_ensembles(1000, workers=workers)
    else:
        mk = markov_ensembles(800, workers=workers, n_modes=81, omega_max=20.0)
    lind = lindblad_oracle(markov_model(3).system, 1.0, IntegratorConfig(1e-3, 3.0),
                           {"p_e": np.diag([1.0, 0.0])})
    lind_dev = float(np.max(np.abs(lind.expectations["p_e"] - np.exp(-lind.times))))
    checks.append(Check("markov.lindblad_oracle", lind_dev, 1e-8, lind_dev <= 1e-8))
    for kind, r in mk.items():
        d = markov_deviation(r)
        checks.append(Check(f"markov.{kind}", d, 0.05, d <= 0.05, "max |P_e - exp(-t)|, t in [0.2, 3]"))
        checks.append(Check(f"node_failures.markov.{kind}", r.failure_rate, 0.005,
                            r.failure_rate <= 0.005))
    return checks
