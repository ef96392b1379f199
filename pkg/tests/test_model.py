import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modalsse.linalg import BasisDescriptor, SectorViolation, StateVector, embed, product_state
from modalsse.model import (
    BathSpec,
    ModeSpec,
    PairingError,
    SystemSpec,
    UniverseModel,
    build_h_uni,
    build_v_int,
    check_symmetric_pairs,
    sigma_minus,
)

from conftest import dense_ladders, random_ket, single_excitation_ladders

SM = sigma_minus()


def dense_h(t, bath, system, basis, ladders):
    """H_int (x) 1 + i sum g (e^{iWt} L a^dag - e^{-iWt} L^dag a) as an explicit matrix."""
    nb = basis.bath_dim
    L = np.kron(system.lowering, np.eye(nb))
    H = np.kron(system.h_int, np.eye(nb)).astype(complex)
    for k, a in enumerate(ladders):
        g, w = bath.couplings[k], bath.detunings[k]
        H += 1j * g * (np.exp(1j * w * t) * L @ a.conj().T - np.exp(-1j * w * t) * L.conj().T @ a)
    return H


def as_matrix(action, dim):
    return np.stack([action(np.eye(dim, dtype=complex)[:, i]) for i in range(dim)], axis=1)


@pytest.fixture
def three_mode():
    system = SystemSpec(np.array([[0.4, 0.1], [0.1, -0.4]]), SM, np.array([0.6, 0.8]))
    bath = BathSpec.from_arrays([0.7, -1.3, 2.0], [0.5, 0.2, 0.9])
    return system, bath


class TestSpecs:
    def test_negative_coupling_rejected(self):
        with pytest.raises(ValueError):
            ModeSpec(1.0, -0.1)

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError, match="Hermitian"):
            SystemSpec(np.array([[0, 1], [0, 0]]), SM, [1, 0])

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError, match="normalized"):
            SystemSpec(np.zeros((2, 2)), SM, [1, 1])

    def test_single_excitation_needs_lowering(self):
        system = SystemSpec(np.zeros((2, 2)), np.array([[0, 1], [1, 0]]), [1, 0])
        with pytest.raises(ValueError):
            UniverseModel(system, BathSpec.from_arrays([0], [1]), BasisDescriptor.single_excitation(2, 1))


class TestHamiltonian:
    def test_decoupled_is_zero(self, rng):
        system = SystemSpec(np.zeros((2, 2)), SM, [1, 0])
        bath = BathSpec.from_arrays([1, -1], [0, 0])
        b = BasisDescriptor.dense_fock(2, 2, 2)
        psi = random_ket(rng, b.dim)
        assert np.all(build_v_int(0.3, bath, system, b)(psi) == 0)
        assert np.all(build_h_uni(0.3, bath, system, b)(psi) == 0)

    def test_one_mode_matrix_elements(self):
        system = SystemSpec(np.zeros((2, 2)), SM, [1, 0])
        bath = BathSpec.from_arrays([0.0], [1.0])
        b = BasisDescriptor.dense_fock(2, 1, 1)
        V = as_matrix(build_v_int(0.0, bath, system, b), b.dim)
        # order |e,0>, |e,1>, |g,0>, |g,1>:  V|e,0> = i|g,1>
        assert V[3, 0] == pytest.approx(1j)
        assert V[0, 3] == pytest.approx(-1j)
        assert np.count_nonzero(np.abs(V) > 1e-15) == 2

    @pytest.mark.parametrize("t", [0.0, 0.37, 2.9])
    def test_dense_assembly_oracle(self, three_mode, t):
        system, bath = three_mode
        b = BasisDescriptor.dense_fock(2, 3, 2)
        got = as_matrix(build_h_uni(t, bath, system, b), b.dim)
        want = dense_h(t, bath, system, b, dense_ladders(b))
        assert np.max(np.abs(got - want)) < 1e-14

    @pytest.mark.parametrize("t", [0.0, 1.1])
    def test_single_excitation_assembly_oracle(self, three_mode, t):
        system, bath = three_mode
        b = BasisDescriptor.single_excitation(2, 3)
        h = build_h_uni(t, bath, system, b)
        want = dense_h(t, bath, system, b, single_excitation_ladders(b))
        # only |e,vac>, |g,vac>, |g,1_k> are in the sector reached from |e,vac>
        for col in [0, 4, 5, 6, 7]:
            v = np.zeros(b.dim, complex)
            v[col] = 1
            assert np.allclose(h(v), want @ v, atol=1e-14)

    def test_single_excitation_rejects_two_quanta(self, three_mode):
        system, bath = three_mode
        b = BasisDescriptor.single_excitation(2, 3)
        v = np.zeros(b.dim, complex)
        v[1] = 1  # |e, 1_1>
        with pytest.raises(SectorViolation):
            build_h_uni(0.0, bath, system, b)(v)

    @given(st.floats(0, 20), st.integers(0, 2**31))
    @settings(max_examples=25, deadline=None)
    def test_hermitian(self, t, seed):
        rng = np.random.default_rng(seed)
        system = SystemSpec(np.array([[0.4, 0.1j], [-0.1j, -0.4]]), SM, [1, 0])
        bath = BathSpec.from_arrays([0.7, -1.3, 2.0], [0.5, 0.2, 0.9])
        b = BasisDescriptor.dense_fock(2, 3, 1)
        h = build_h_uni(t, bath, system, b)
        phi, psi = random_ket(rng, b.dim), random_ket(rng, b.dim)
        assert abs(np.vdot(phi, h(psi)) - np.conj(np.vdot(psi, h(phi)))) < 1e-12

    def test_excitation_number_conserved(self, rng):
        system = SystemSpec(np.zeros((2, 2)), SM, [1, 0])
        bath = BathSpec.from_arrays([0.7, -1.3], [0.5, 0.2])
        b = BasisDescriptor.dense_fock(2, 2, 4)
        a = dense_ladders(b)
        N = np.kron(np.diag([1.0, 0.0]), np.eye(b.bath_dim)) + sum(x.T @ x for x in a)
        H = as_matrix(build_h_uni(0.8, bath, system, b), b.dim)
        # commutator vanishes below the truncation edge
        small = BasisDescriptor.dense_fock(2, 2, 3)
        for _ in range(5):
            psi = embed(StateVector(random_ket(rng, small.dim), small), b).amplitudes
            rate = np.vdot(psi, (H @ N - N @ H) @ psi)
            assert abs(rate) < 1e-12

    def test_periodic_for_commensurate_detunings(self, three_mode):
        system = three_mode[0]
        bath = BathSpec.from_arrays([0.5, -1.0, 1.5], [0.3, 0.3, 0.2])
        b = BasisDescriptor.dense_fock(2, 3, 1)
        period = 2 * math.pi / 0.5
        A = as_matrix(build_h_uni(0.3, bath, system, b), b.dim)
        B = as_matrix(build_h_uni(0.3 + period, bath, system, b), b.dim)
        assert np.max(np.abs(A - B)) < 1e-12


class TestPairing:
    def test_basic_pair(self):
        p = check_symmetric_pairs(BathSpec.from_arrays([1, -1], [0.3, 0.3]))
        assert p.pairs == ((0, 1),)

    def test_mismatch(self):
        with pytest.raises(PairingError):
            check_symmetric_pairs(BathSpec.from_arrays([1, -1.0001], [0.3, 0.3]))

    def test_coupling_mismatch(self):
        with pytest.raises(PairingError):
            check_symmetric_pairs(BathSpec.from_arrays([1, -1], [0.3, 0.4]))

    def test_sorted_by_magnitude(self):
        p = check_symmetric_pairs(BathSpec.from_arrays([2, -2, 1, -1], [0.5] * 4))
        assert p.pairs == ((2, 3), (0, 1))

    def test_negative_first_input_order(self):
        p = check_symmetric_pairs(BathSpec.from_arrays([-1, 1], [0.2, 0.2]))
        assert p.pairs == ((1, 0),)

    def test_zero_mode_rejected_by_default(self):
        bath = BathSpec.from_arrays([-1, 0, 1], [0.2] * 3)
        with pytest.raises(PairingError):
            check_symmetric_pairs(bath)
        p = check_symmetric_pairs(bath, allow_zero_mode=True)
        assert p.pairs == ((2, 0),) and p.self_modes == (1,)

    @given(st.lists(st.tuples(st.integers(1, 6), st.integers(1, 3)), min_size=1, max_size=5, unique_by=lambda x: x[0]),
           st.randoms(use_true_random=False))
    @settings(max_examples=40)
    def test_exhaustive_matching(self, half, rnd):
        """Mirror a random half-spectrum, shuffle, and compare to a brute-force matcher."""
        modes = [(w, g / 10) for w, g in half] + [(-w, g / 10) for w, g in half]
        rnd.shuffle(modes)
        bath = BathSpec(tuple(ModeSpec(float(w), g) for w, g in modes))
        p = check_symmetric_pairs(bath)
        oracle = []
        for i, (w, g) in enumerate(modes):
            if w > 0:
                j = next(j for j, (w2, g2) in enumerate(modes) if w2 == -w and g2 == g)
                oracle.append((i, j))
        oracle.sort(key=lambda ij: modes[ij[0]][0])
        assert list(p.pairs) == oracle


def test_product_state_labels():
    b = BasisDescriptor.single_excitation(2, 3)
    s = product_state([0, 1], b, (0, 1, 0))
    assert s.amplitudes[4 + 2] == 1
