import math

import numpy as np
import pytest

from modalsse.conditioning import CoherentVars, PositionVars, QuadratureVars
from modalsse.dynamics import (
    RngStream,
    closed_drift,
    integrate_trajectory,
    make_layout,
    noise_z,
    sample_initial,
    velocity_closed,
    velocity_general,
)
from modalsse.linalg import BasisDescriptor, StateVector, product_state
from modalsse.model import BathSpec, ModeSpec, SystemSpec, UniverseModel, sigma_minus
from modalsse.propagator import IntegratorConfig, evolve_model
from modalsse.verify import markov_model, velocity_oracle

from conftest import random_ket

PLUS = np.array([1.0, 1.0]) / math.sqrt(2)


class TestSampling:
    def test_position_moments(self):
        bath = BathSpec.from_arrays([0.5], [1.0])
        n = 100_000
        x = np.array([sample_initial("position", bath, RngStream(3, i)).x[0] for i in range(n)])
        assert abs(x.mean()) <= 4 * math.sqrt(0.5 / n)
        se_var = math.sqrt(2 * 0.25 / n)
        assert abs(x.var() - 0.5) <= 3 * se_var

    def test_coherent_moments(self):
        bath = BathSpec.from_arrays([0.5], [1.0])
        n = 100_000
        a = np.array([sample_initial("coherent", bath, RngStream(4, i)).a[0] for i in range(n)])
        m = np.abs(a) ** 2
        assert abs(m.mean() - 1) <= 3 * m.std() / math.sqrt(n)

    def test_quadrature_layout(self):
        bath = BathSpec.from_arrays([1, -1, 2, -2], [0.1, 0.1, 0.3, 0.3])
        hv = sample_initial("quadrature", bath, RngStream(1, 0))
        assert isinstance(hv, QuadratureVars) and hv.xplus.shape == (2,)

    def test_streams_are_deterministic(self):
        a = RngStream(2**63 + 5, 17).normal(1.0, 8)
        b = RngStream(2**63 + 5, 17).normal(1.0, 8)
        c = RngStream(2**63 + 5, 18).normal(1.0, 8)
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_seed_range(self):
        with pytest.raises(ValueError):
            RngStream(-1, 0)
        with pytest.raises(ValueError):
            RngStream(2**64, 0)


class TestClosedVelocity:
    bath = BathSpec((ModeSpec(0.0, 1.0),))

    def test_zero_expectation(self):
        for kind in ("position", "coherent"):
            assert np.all(velocity_closed(kind, 0j, self.bath, 0.7) == 0)

    def test_position_value(self):
        v = velocity_closed("position", 0.5, self.bath, 0.0)
        assert v[0] == pytest.approx(1 / math.sqrt(2), abs=1e-15)
        assert v[0] == pytest.approx(0.70711, abs=1e-5)

    def test_coherent_value(self):
        v = velocity_closed("coherent", 0.5, self.bath, 0.0)
        # d(Re a)/dt = 0.5, d(Im a)/dt = 0, so d a*/dt = 0.5
        assert v.tolist() == [0.5, 0.0]

    def test_quadrature_is_real(self):
        bath = BathSpec.from_arrays([1, -1], [0.4, 0.4])
        v = velocity_closed("quadrature", 0.3 + 0.2j, bath, 0.4)
        assert v.dtype == np.float64
        assert v == pytest.approx([0.4 * math.cos(0.4) * 0.6, 0.4 * math.sin(0.4) * 0.6])


class TestGeneralVelocity:
    @pytest.mark.parametrize("kind", ["position", "quadrature", "coherent"])
    def test_oracle_equality(self, kind):
        dev = velocity_oracle(n_probes=10, seed=5)
        assert dev[kind] <= 1e-8

    def test_oracle_equality_single_excitation(self, rng):
        model = markov_model(n_modes=5, omega_max=2.0)
        bath, sys, basis = model.bath, model.system, model.basis
        for kind in ("position", "quadrature", "coherent"):
            layout = make_layout(kind, bath, basis, allow_zero_mode=True)
            for _ in range(5):
                psi = random_ket(rng, basis.dim)
                q = rng.normal(size=layout.n_coords)
                t = rng.uniform(0, 3)
                _, _, le, _ = layout.condition_batch(psi, q[None, :], sys.lowering)
                vc = closed_drift(layout, bath, le, t)[0]
                vg = velocity_general(StateVector(psi, basis), layout.from_coords(q), t, bath, sys,
                                      unraveling=kind, pairing=layout.pairing)
                assert np.max(np.abs(vc - vg)) <= 1e-8 * max(1e-12, np.max(np.abs(vg)))

    def test_decoupled_is_zero(self, rng):
        bath = BathSpec.from_arrays([1, -1], [0.0, 0.0])
        sys = SystemSpec(np.zeros((2, 2)), sigma_minus(), PLUS)
        b = BasisDescriptor.dense_fock(2, 2, 2)
        st_ = StateVector(random_ket(rng, b.dim), b)
        for hv in (PositionVars([0.2, -0.1]), QuadratureVars([0.3], [0.1]), CoherentVars([0.1j, 0.3])):
            v = velocity_general(st_, hv, 0.4, bath, sys)
            assert np.all(v == 0)
            assert v.dtype == np.float64


class TestNoise:
    def test_zero_hidden_values(self):
        bath = BathSpec.from_arrays([1, -1], [0.4, 0.4])
        assert noise_z(PositionVars([0, 0]), bath, 1.3).z == 0

    def test_position_value(self):
        bath = BathSpec.from_arrays([1.0], [0.5])
        z = noise_z(PositionVars([1.0]), bath, math.pi / 2).z
        assert z == pytest.approx(-1j / math.sqrt(2), abs=1e-15)
        assert z.imag == pytest.approx(-0.70711, abs=1e-5)

    def test_quadrature_real(self, rng):
        bath = BathSpec.from_arrays([1, -1, 2.5, -2.5], [0.4, 0.4, 0.1, 0.1])
        for _ in range(20):
            hv = QuadratureVars(rng.normal(size=2), rng.normal(size=2))
            assert noise_z(hv, bath, rng.uniform(0, 10)).z.imag == 0.0

    def test_coherent_is_linear(self):
        bath = BathSpec.from_arrays([1.0], [0.5])
        z = noise_z(CoherentVars([1 + 1j]), bath, 0.0).z
        assert z == pytest.approx(0.5 * (1 + 1j))


def resonant_grid(t_final=0.5):
    sys = SystemSpec(np.zeros((2, 2)), sigma_minus(), np.array([1.0, 0.0]))
    model = UniverseModel(sys, BathSpec((ModeSpec(0.0, 1.0),)), BasisDescriptor.dense_fock(2, 1, 2))
    return evolve_model(model, IntegratorConfig(1e-3, t_final))


class TestTrajectories:
    def test_decoupled_hidden_values_constant(self):
        sys = SystemSpec(np.zeros((2, 2)), sigma_minus(), PLUS)
        model = UniverseModel(sys, BathSpec.from_arrays([1, -1], [0, 0]), BasisDescriptor.dense_fock(2, 2, 2))
        grid = evolve_model(model, IntegratorConfig(0.01, 1.0))
        for kind in ("position", "quadrature", "coherent"):
            tr = integrate_trajectory(grid, kind, 9)
            assert np.all(tr.coords == tr.coords[0])
            assert tr.status == "completed"

    def test_decoupled_noise_zero(self):
        sys = SystemSpec(np.zeros((2, 2)), sigma_minus(), PLUS)
        model = UniverseModel(sys, BathSpec.from_arrays([1, -1], [0, 0]), BasisDescriptor.dense_fock(2, 2, 2))
        grid = evolve_model(model, IntegratorConfig(0.01, 0.2))
        assert np.all(integrate_trajectory(grid, "position", 9).z == 0)

    @pytest.mark.parametrize("kind", ["position", "coherent"])
    def test_dual_path(self, kind):
        grid = resonant_grid(0.2)
        a = integrate_trajectory(grid, kind, 21, trajectory_index=3)
        b = integrate_trajectory(grid, kind, 21, trajectory_index=3, velocity="general")
        assert np.max(np.abs(a.coords - b.coords)) < 1e-10

    def test_dual_path_quadrature(self, short_standard):
        model, _ = short_standard
        g = evolve_model(model, IntegratorConfig(1e-3, 0.1))
        a = integrate_trajectory(g, "quadrature", 4)
        b = integrate_trajectory(g, "quadrature", 4, velocity="general")
        assert np.max(np.abs(a.coords - b.coords)) < 1e-10

    def test_replay_is_bit_identical(self, short_standard):
        _, grid = short_standard
        for kind in ("position", "quadrature", "coherent"):
            a = integrate_trajectory(grid, kind, 77, 5)
            b = integrate_trajectory(grid, kind, 77, 5)
            assert a.coords.tobytes() == b.coords.tobytes()
            assert a.kets.tobytes() == b.kets.tobytes()

    def test_trajectory_follows_excited_expectation(self):
        grid = resonant_grid(0.2)
        tr = integrate_trajectory(grid, "position", 0, initial=PositionVars([0.3]))
        # x moves with sqrt2 Re<L>; <sigma_-> starts at zero for |e>
        assert tr.lexp[0] == 0
        dx = np.diff(tr.coords[:, 0])
        v = math.sqrt(2) * tr.lexp.real
        assert np.allclose(dx, 1e-3 * 0.5 * (v[1:] + v[:-1]), atol=1e-8)

    def test_snapshots(self, short_standard):
        _, grid = short_standard
        tr = integrate_trajectory(grid, "coherent", 1, snapshot_times=(0.25,))
        assert np.array_equal(tr.snapshots[0.25], tr.kets[250])
        assert tr.coord_names == ["re_a_1", "im_a_1", "re_a_2", "im_a_2"]

    def test_conditioned_kets_are_normalized(self, short_standard):
        _, grid = short_standard
        tr = integrate_trajectory(grid, "quadrature", 2)
        assert np.allclose(np.linalg.norm(tr.kets, axis=1), 1, atol=1e-13)


def test_product_vacuum_conditioning_trivial():
    b = BasisDescriptor.dense_fock(2, 1, 1)
    s = product_state(PLUS, b)
    layout = make_layout("position", BathSpec.from_arrays([0.0], [1.0]), b)
    k, w, le, _ = layout.condition_batch(s.amplitudes, np.array([[0.2]]), sigma_minus())
    assert le[0] == pytest.approx(0.5)
