import numpy as np
import pytest
from conftest import random_hermitian
from hypothesis import given
from hypothesis import strategies as st

from polarlab.errors import HypothesisError
from polarlab.lattice import MINIMAL_IMAGE, SAWTOOTH, CovariantOperator, TorusLattice
from polarlab.models import (
    DrivingProtocol,
    DrivingTerm,
    TrigLoop,
    anderson_chain,
    build_hamiltonian,
    rice_mele,
    rice_mele_pump,
)
from polarlab.observables import (
    chern_number,
    current_identity_check,
    current_operator,
    polarization_exact,
    polarization_ksv,
)
from polarlab.spectral import fermi_projection, projection_path


def test_diagonal_hamiltonian_carries_no_current():
    spec = anderson_chain(8, J=0.0, W_dis=1.0, seed=1)
    assert current_operator(build_hamiltonian(spec)).max_norm() == 0.0


@pytest.mark.parametrize("m", range(12))
def test_free_ring_current_is_minus_group_velocity(m):
    L, J = 12, 0.7
    H = build_hamiltonian(anderson_chain(L, J=J))
    k = 2 * np.pi * m / L
    psi = np.exp(1j * k * np.arange(L)) / np.sqrt(L)
    Jop = current_operator(H, 0, MINIMAL_IMAGE).matrix
    # the current i[X, H] is minus the velocity dE/dk = 2 J sin k
    assert np.allclose(Jop @ psi, -2 * J * np.sin(k) * psi, atol=1e-12)


@given(seed=st.integers(0, 2**32 - 1), c=st.lists(st.floats(-2, 2), min_size=1, max_size=4))
def test_equilibrium_current_vanishes(seed, c):
    rng = np.random.default_rng(seed)
    lat = TorusLattice((6,), 2)
    h = random_hermitian(rng, 12)
    H = CovariantOperator(lat, h, hermitian=True)
    f = sum(ci * np.linalg.matrix_power(h, i) for i, ci in enumerate(c))
    assert abs(np.trace(current_operator(H, 0, SAWTOOTH).matrix @ f)) / lat.volume < 1e-10


def test_identity_check_at_equilibrium():
    spec = rice_mele(8)
    H = build_hamiltonian(spec).matrix
    P = fermi_projection(H, 0.0)
    chk = current_identity_check(spec.lattice, [H], [P], eps=0.1)
    assert np.abs(chk.lhs).max() < 1e-12 and np.abs(chk.rhs).max() < 1e-12


@given(seed=st.integers(0, 2**32 - 1), rank=st.integers(1, 11), eps=st.floats(0.01, 1.0))
def test_identity_is_exact_algebra_in_sawtooth_convention(seed, rank, eps):
    rng = np.random.default_rng(seed)
    lat = TorusLattice((6,), 2)
    H = random_hermitian(rng, 12)
    # a projection that does not commute with H
    V, _ = np.linalg.qr(rng.normal(size=(12, rank)) + 1j * rng.normal(size=(12, rank)))
    P = V @ V.conj().T
    chk = current_identity_check(lat, [H], [P], eps, 0, SAWTOOTH)
    assert chk.relative_defect < 1e-9


def test_identity_defect_shrinks_with_size():
    defects = []
    for L in (32, 64):
        spec = rice_mele(L)
        r = polarization_exact(spec, rice_mele_pump(spec), 0.0, 0.1, np.linspace(0, 1, 33))
        defects.append(r.identity_defect)
    assert defects[1] < defects[0]


def test_static_hamiltonian_pumps_nothing():
    spec = rice_mele(8, W_dis=0.3, seed=2)
    r = polarization_exact(spec, DrivingProtocol(), 0.0, 0.1, np.linspace(0, 1, 9))
    assert abs(r.value) < 1e-9


def test_diagonal_chain_pumps_nothing():
    spec = anderson_chain(8, J=0.0, W_dis=1.0, seed=3)
    prot = DrivingProtocol(1.0, (DrivingTerm(TrigLoop(0.2), "random_potential", seed=5),))
    # without hopping the current operator is identically zero
    r = polarization_exact(spec, prot, 0.0, 0.1, np.linspace(0, 1, 9), check_hypotheses=False)
    assert r.value == 0.0


def test_failed_hypotheses_block_the_evolution():
    spec = rice_mele(16, delta0=0.0, Delta0=0.0)
    with pytest.raises(HypothesisError):
        polarization_exact(spec, rice_mele_pump(spec), 0.0, 0.1)


def test_pump_transports_one_charge():
    spec = rice_mele(32)
    r = polarization_exact(spec, rice_mele_pump(spec), 0.0, 0.02, np.linspace(0, 1, 65))
    assert r.value == pytest.approx(1.0, abs=0.01)
    assert r.unitarity_defect < 1e-12


def test_constant_path_has_no_polarization():
    spec = rice_mele(8)
    path = projection_path(spec, DrivingProtocol(), np.linspace(0, 1, 9))
    assert polarization_ksv(path).value == 0.0
    assert chern_number(path).value == 0.0


def test_reversed_path_negates_polarization():
    spec = rice_mele(16)
    prot = rice_mele_pump(spec, flat_order=1)
    grid = np.linspace(0, 0.6, 61)
    fwd = projection_path(spec, prot, grid)
    back = projection_path(spec, prot, grid)
    back.P, back.dP = fwd.P[::-1].copy(), -fwd.dP[::-1].copy()
    a, b = polarization_ksv(fwd).value, polarization_ksv(back).value
    assert abs(a) > 0.1 and b == pytest.approx(-a, abs=1e-12)


def test_chern_number_of_the_pump_and_its_reflection():
    spec = rice_mele(32)
    grid = np.linspace(0, 1, 128)
    ch = chern_number(projection_path(spec, rice_mele_pump(spec), grid))
    assert abs(ch.value - 1) < 1e-2 and ch.nearest == 1
    refl = rice_mele(32, Delta0=-0.5)
    ch = chern_number(projection_path(refl, rice_mele_pump(refl), grid))
    assert abs(ch.value + 1) < 1e-2 and ch.nearest == -1


def test_chern_number_needs_a_closed_loop():
    spec = rice_mele(8)
    path = projection_path(spec, rice_mele_pump(spec), np.linspace(0, 0.5, 17))
    with pytest.raises(ValueError):
        chern_number(path)
