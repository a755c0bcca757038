import numpy as np
import pytest
from conftest import PAULI_X, PAULI_Y, PAULI_Z, random_hermitian
from hypothesis import given
from hypothesis import strategies as st

from polarlab.dynamics import STABILITY, evolve_density, propagator_step, substep_count
from polarlab.errors import StepOverflowError
from polarlab.lattice import CovariantOperator
from polarlab.models import (
    DrivingProtocol,
    DrivingTerm,
    TrigLoop,
    anderson_chain,
    build_hamiltonian,
    rice_mele,
    rice_mele_pump,
)
from polarlab.spectral import fermi_projection


def test_zero_hamiltonian_gives_identity():
    assert np.array_equal(propagator_step(np.zeros((3, 3)), 0.1, 0.5), np.eye(3))


def test_pauli_exponential():
    U = propagator_step(PAULI_Z, np.pi, 1.0)
    assert np.allclose(U, -np.eye(2), atol=1e-15)


@given(seed=st.integers(0, 2**32 - 1), dt=st.floats(1e-3, 2.0), eps=st.floats(0.01, 1.0))
def test_one_parameter_group_law(seed, dt, eps):
    H = random_hermitian(np.random.default_rng(seed), 6)
    U1 = propagator_step(H, dt, eps)
    assert np.abs(U1 @ U1 - propagator_step(H, 2 * dt, eps)).max() < 1e-12
    assert np.abs(U1.conj().T @ U1 - np.eye(6)).max() < 1e-12


def test_covariant_input_keeps_type():
    H = build_hamiltonian(rice_mele(4))
    U = propagator_step(H, 0.1, 0.1)
    assert isinstance(U, CovariantOperator)


def test_invalid_steps_are_rejected():
    with pytest.raises(ValueError):
        propagator_step(PAULI_Z, 0.0, 1.0)
    with pytest.raises(ValueError):
        propagator_step(PAULI_Z, 0.1, -1.0)


def test_static_equilibrium_is_stationary():
    spec = rice_mele(8)
    rho0 = fermi_projection(build_hamiltonian(spec), 0.0).matrix
    res = evolve_density(spec, DrivingProtocol(), rho0, 0.05, grid=np.linspace(0, 1, 9))
    assert np.abs(res.rho - rho0).max() < 1e-12
    assert res.unitarity_defect < 1e-12


def test_commuting_diagonal_family_leaves_diagonal_state():
    spec = anderson_chain(8, J=0.0, W_dis=1.0, seed=4)
    prot = DrivingProtocol(1.0, (DrivingTerm(TrigLoop(0.7, 0.3), "random_potential", seed=9),))
    rho0 = np.diag(np.r_[np.ones(3), np.zeros(5)]).astype(complex)
    res = evolve_density(spec, prot, rho0, 0.01, grid=np.linspace(0, 1, 5))
    assert np.abs(res.rho - rho0).max() < 1e-14


def rabi_up_population(t, delta, omega, w):
    detuning = delta - w / 2
    rabi = np.hypot(detuning, omega)
    return 1 - (omega / rabi) ** 2 * np.sin(rabi * t) ** 2


def test_rabi_oscillation_closed_form():
    delta, omega, w = 0.3, 0.5, 1.1
    ham = lambda t: delta * PAULI_Z + omega * (np.cos(w * t) * PAULI_X + np.sin(w * t) * PAULI_Y)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    grid = np.linspace(0, 10, 101)
    res = evolve_density(ham, None, rho0, 1.0, 1000.0, grid=grid, period=10.0, norm_bound=1.0)
    assert res.substeps == 10**4
    exact = rabi_up_population(grid, delta, omega, w)
    assert np.abs(res.rho[:, 0, 0].real - exact).max() < 1e-6


def test_observer_sees_every_substep():
    ham = lambda t: PAULI_Z
    seen = []
    res = evolve_density(ham, None, np.eye(2) / 2, 1.0, 20.0, grid=np.linspace(0, 1, 3), period=1.0,
                         norm_bound=1.0, observe=lambda t, r: seen.append(t) or 0.0)
    assert res.substeps == 20 and len(seen) == 21
    assert res.fine_times[0] == 0.0 and res.fine_times[-1] == 1.0


def test_substep_policy():
    assert substep_count(1.0, 0.1, 2.0, None) == int(np.ceil(2.0 / (STABILITY * 0.1)))
    assert substep_count(1.0, 0.1, 2.0, 1e4) == 10**4
    assert substep_count(1e-9, 1.0, 1.0, None) == 1


def test_step_overflow():
    spec = rice_mele(4)
    with pytest.raises(StepOverflowError):
        evolve_density(spec, DrivingProtocol(), np.eye(8), 1e-9)


def test_non_hermitian_state_rejected():
    spec = rice_mele(4)
    with pytest.raises(ValueError):
        evolve_density(spec, DrivingProtocol(), np.triu(np.ones((8, 8))), 0.1)


def test_purity_and_trace_are_conserved():
    spec = rice_mele(8, W_dis=0.4, seed=5)
    rho0 = fermi_projection(build_hamiltonian(spec), 0.0).matrix
    res = evolve_density(spec, rice_mele_pump(spec), rho0, 0.1, grid=np.linspace(0, 1, 5))
    for r in res.rho:
        assert np.trace(r).real == pytest.approx(8.0, abs=1e-10)
        assert np.abs(r @ r - r).max() < 1e-10
