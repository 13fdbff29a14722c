import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xy_butterfly.model import (
    PAULI,
    ModelParams,
    build_xy_hamiltonian,
    exact_evolution,
    is_hermitian,
    pauli_at,
    unitarity_defect,
)

X, Y, Z, I2 = PAULI["X"], PAULI["Y"], PAULI["Z"], PAULI["I"]


def test_pauli_at_single_site():
    assert np.array_equal(pauli_at(1, "Z", 1), np.diag([1, -1]))


def test_pauli_at_identity():
    assert np.array_equal(pauli_at(1, "I", 3), np.eye(8))


def test_pauli_at_second_site_is_low_bit():
    op = pauli_at(2, "X", 2)
    assert np.array_equal(op, np.kron(I2, X))
    # permutation swapping the low bit
    assert np.array_equal(op @ np.array([1, 0, 0, 0]), [0, 1, 0, 0])


@pytest.mark.parametrize("site,which,n", [(0, "X", 2), (3, "X", 2), (1, "Q", 2)])
def test_pauli_at_rejects_bad_input(site, which, n):
    with pytest.raises(ValueError):
        pauli_at(site, which, n)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(n=0)
    with pytest.raises(ValueError):
        ModelParams(boundary="twisted")
    with pytest.raises(ValueError):
        ModelParams(J=float("nan"))


def test_bonds():
    assert ModelParams(n=4).bonds() == [(1, 2), (2, 3), (3, 4)]
    assert ModelParams(n=4, boundary="periodic").bonds()[-1] == (4, 1)
    assert ModelParams(n=2, boundary="periodic").bonds() == [(1, 2)]


def test_pure_field_term():
    H = build_xy_hamiltonian(ModelParams(J=1, r=0, h=1, n=1))
    assert np.allclose(H, np.diag([1, -1]))


def test_ising_limit_is_xx():
    H = build_xy_hamiltonian(ModelParams(J=1, r=1, h=0, n=2))
    assert np.allclose(H, np.kron(X, X))


def test_isotropic_pair_is_hopping():
    H = build_xy_hamiltonian(ModelParams(J=1, r=0, h=0, n=2))
    expected = np.zeros((4, 4))
    expected[1, 2] = expected[2, 1] = 1
    assert np.allclose(H, expected)


@settings(max_examples=25, deadline=None)
@given(
    J=st.floats(-2, 2),
    r=st.floats(-3, 3),
    h=st.floats(-3, 3),
    n=st.integers(1, 5),
    periodic=st.booleans(),
)
def test_hamiltonian_matches_term_by_term_sum(J, r, h, n, periodic):
    params = ModelParams(J, r, h, n, "periodic" if periodic else "open")
    H = build_xy_hamiltonian(params)
    ref = np.zeros_like(H)
    for a, b in params.bonds():
        ref += (1 + r) / 2 * pauli_at(a, "X", n) @ pauli_at(b, "X", n)
        ref += (1 - r) / 2 * pauli_at(a, "Y", n) @ pauli_at(b, "Y", n)
    for s in range(1, n + 1):
        ref += h * pauli_at(s, "Z", n)
    assert np.allclose(H, J * ref, atol=1e-12)
    assert is_hermitian(H)


def test_evolution_at_zero_is_identity():
    H = build_xy_hamiltonian(ModelParams(J=1, r=0.3, h=0.7, n=3))
    assert np.allclose(exact_evolution(H, 0.0), np.eye(8), atol=1e-14)


def test_evolution_of_z():
    U = exact_evolution(Z.astype(complex), np.pi / 2)
    assert np.allclose(U, np.diag([np.exp(-1j * np.pi / 2), np.exp(1j * np.pi / 2)]))


def test_evolution_is_unitary():
    H = build_xy_hamiltonian(ModelParams(J=1, r=2.1, h=0.8, n=5))
    assert unitarity_defect(exact_evolution(H, 1.3)) <= 1e-10


def test_evolution_rejects_non_hermitian():
    with pytest.raises(ValueError):
        exact_evolution(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)
