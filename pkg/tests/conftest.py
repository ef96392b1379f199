import math

import numpy as np
import pytest

from modalsse.linalg import BasisDescriptor
from modalsse.propagator import evolve_model
from modalsse.verify import standard_integrator, standard_model


def random_ket(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def dense_ladders(basis):
    """Full matrices of a_k on a dense Fock basis (independent kron assembly)."""
    n = basis.n_max + 1
    a = np.diag(np.sqrt(np.arange(1, n)), 1)
    eye_b = np.eye(n)
    out = []
    for k in range(basis.n_modes):
        op = np.eye(basis.system_dim)
        for j in range(basis.n_modes):
            op = np.kron(op, a if j == k else eye_b)
        out.append(op)
    return out


def single_excitation_ladders(basis):
    """a_k on the single-excitation space {vac, 1_1..1_K}, padded with a zero row/col."""
    K = basis.n_modes
    out = []
    for k in range(K):
        a = np.zeros((K + 1, K + 1))
        a[0, k + 1] = 1.0
        out.append(np.kron(np.eye(basis.system_dim), a))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture(scope="session")
def standard():
    model = standard_model()
    return model, evolve_model(model, standard_integrator())


@pytest.fixture(scope="session")
def short_standard():
    """Standard model evolved to t = 0.5 only (cheap trajectory tests)."""
    from modalsse.propagator import IntegratorConfig

    model = standard_model()
    return model, evolve_model(model, IntegratorConfig(1e-3, 0.5))


SQRT_HALF = math.sqrt(0.5)
__all__ = ["BasisDescriptor", "random_ket", "dense_ladders", "single_excitation_ladders", "SQRT_HALF"]


# acceptance lines collected by tests/test_acceptance.py, repeated after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
