import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polarlab.errors import FluxError
from polarlab.lattice import TorusLattice
from polarlab.models import (
    Bump,
    DrivenHamiltonian,
    DrivingProtocol,
    DrivingTerm,
    TrigLoop,
    anderson_chain,
    build_hamiltonian,
    bump_switching,
    disorder_field,
    hamiltonian_at,
    hofstadter,
    landau_bond_phases,
    landau_flux_matrix,
    magnetic_phase,
    model_covariance_defect,
    peierls_hamiltonian,
    rice_mele,
    rice_mele_pump,
    smoothstep,
    symmetric_flux_matrix,
    validate_hypotheses,
)

int_vec = st.tuples(st.integers(-30, 30), st.integers(-30, 30))


def test_uniform_ring_spectrum():
    spec = rice_mele(4, J=1.0, delta0=0.0, Delta0=0.0)
    e = np.linalg.eigvalsh(build_hamiltonian(spec).matrix)
    # eight sites with hopping 2J: eigenvalues 2 * 2J cos(2 pi m / 8) / 2
    expected = np.sort(2 * np.cos(2 * np.pi * np.arange(8) / 8))
    assert np.allclose(e, expected, atol=1e-12)
    assert e.min() >= -2 - 1e-12 and e.max() <= 2 + 1e-12


@given(seed=st.integers(0, 2**64 - 1))
def test_hopping_free_anderson_chain_is_its_field(seed):
    spec = anderson_chain(8, J=0.0, W_dis=1.0, seed=seed)
    H = build_hamiltonian(spec).matrix
    f = disorder_field(spec).reshape(-1)
    assert np.array_equal(H, np.diag(f).astype(complex))
    assert np.all(np.abs(f) <= 0.5)


def test_disorder_is_deterministic_and_seed_dependent():
    a = build_hamiltonian(anderson_chain(16, W_dis=1.0, seed=7)).matrix
    b = build_hamiltonian(anderson_chain(16, W_dis=1.0, seed=7)).matrix
    c = build_hamiltonian(anderson_chain(16, W_dis=1.0, seed=8)).matrix
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def harper_bloch(kx: float, ky: float, flux: float = 2 * np.pi / 3, q: int = 3) -> np.ndarray:
    """Landau-gauge Bloch matrix on a magnetic cell of ``q`` columns."""
    h = np.zeros((q, q), dtype=complex)
    for x in range(q):
        h[x, x] = -2 * np.cos(ky - flux * x)
    for x in range(q - 1):
        h[x + 1, x] = h[x, x + 1] = -1.0
    h[0, q - 1] += -np.exp(1j * kx)
    h[q - 1, 0] += -np.exp(-1j * kx)
    return h


def harper_spectrum(L: int, p: int, q: int) -> np.ndarray:
    cells = L // q
    ks = [(2 * np.pi * mx / cells, 2 * np.pi * my / L) for mx in range(cells) for my in range(L)]
    return np.sort(np.concatenate([np.linalg.eigvalsh(harper_bloch(kx, ky, 2 * np.pi * p / q, q)) for kx, ky in ks]))


def test_hofstadter_matches_harper_bands():
    spec = hofstadter(6, p=1, q=3)
    e = np.linalg.eigvalsh(build_hamiltonian(spec).matrix)
    assert np.allclose(e, harper_spectrum(6, 1, 3), atol=1e-10)
    # band supports from a dense Harper k-grid: three disjoint bands of twelve levels each
    ks = np.linspace(0, 2 * np.pi, 61)
    bands = np.array([np.linalg.eigvalsh(harper_bloch(kx, ky)) for kx in ks for ky in ks])
    lo, hi = bands.min(axis=0), bands.max(axis=0)
    assert np.all(hi[:-1] < lo[1:])
    counts = [int(np.sum((e >= lo[b] - 1e-10) & (e <= hi[b] + 1e-10))) for b in range(3)]
    assert counts == [12, 12, 12]


def test_flux_must_divide_the_torus():
    with pytest.raises(FluxError):
        hofstadter(8, p=1, q=3)


@pytest.mark.parametrize("y", [(1, 0), (0, 1), (3, 0), (2, 5), (-4, 1)])
def test_hofstadter_magnetic_translations_are_symmetries(y):
    assert model_covariance_defect(hofstadter(6, p=1, q=3), y) < 1e-12
    assert model_covariance_defect(hofstadter(6, p=1, q=3, W_dis=1.0, seed=3), y) < 1e-12


def test_plain_translation_is_not_a_hofstadter_symmetry():
    from polarlab.lattice import covariance_check
    from polarlab.models import builder

    spec = hofstadter(6, p=1, q=3)
    assert covariance_check(builder(spec), disorder_field(spec), (1, 0)) > 0.1


@given(seed=st.integers(0, 2**32 - 1))
def test_hofstadter_gauge_covariance(seed):
    rng = np.random.default_rng(seed)
    lat = TorusLattice((6, 6))
    chi = rng.uniform(0, 2 * np.pi, lat.sizes)
    phases = landau_bond_phases(lat, 2 * np.pi / 3)
    H = peierls_hamiltonian(lat, 1.0, phases)
    g = np.exp(1j * chi.reshape(-1))
    conj = (g[:, None] * H) * g.conj()[None, :]
    shifted = [phases[k] + np.roll(chi, -1, axis=k) - chi for k in range(2)]
    assert np.abs(conj - peierls_hamiltonian(lat, 1.0, shifted)).max() < 1e-13


@given(x=int_vec)
def test_cocycle_at_zero(x):
    assert magnetic_phase((0, 0), x, symmetric_flux_matrix(2 * np.pi / 3)) == 1


@given(x=int_vec, y=int_vec)
def test_cocycle_antisymmetry(x, y):
    B = symmetric_flux_matrix(2 * np.pi / 3)
    assert abs(magnetic_phase(y, x, B) * magnetic_phase(x, y, B) - 1) < 1e-12
    assert abs(abs(magnetic_phase(y, x, B)) - 1) < 1e-12


def test_cocycle_identity_on_random_triples():
    rng = np.random.default_rng(0)
    B = symmetric_flux_matrix(2 * np.pi / 3)
    worst = 0.0
    for _ in range(100):
        y1, y2, y3 = rng.integers(-50, 50, size=(3, 2))
        lhs = magnetic_phase(y1, y2, B) * magnetic_phase(y1 + y2, y3, B)
        rhs = magnetic_phase(y1, y2 + y3, B) * magnetic_phase(y2, y3, B)
        worst = max(worst, abs(lhs - rhs))
    assert worst < 1e-12


@given(x=int_vec, y=int_vec)
def test_landau_and_symmetric_cocycles_differ_by_a_coboundary(x, y):
    b = 2 * np.pi / 3
    ratio = magnetic_phase(y, x, landau_flux_matrix(b)) / magnetic_phase(y, x, symmetric_flux_matrix(b))
    # ratio = exp(i b (y1 x2 + y2 x1) / 2) = f(x + y) / (f(x) f(y)) with f(v) = exp(i b v1 v2 / 2)
    f = lambda v: np.exp(0.5j * b * v[0] * v[1])
    xy = np.add(x, y)
    assert abs(ratio - f(xy) / (f(x) * f(y))) < 1e-9


def test_static_protocol_returns_static_hamiltonian():
    spec = rice_mele(8)
    prot = DrivingProtocol(1.0, (DrivingTerm(TrigLoop(0.0), "staggering"),))
    assert np.array_equal(hamiltonian_at(spec, prot, 0.37).matrix, build_hamiltonian(spec).matrix)


@pytest.mark.parametrize("T", [1.0, 2.5])
def test_trig_second_derivative(T):
    spec = rice_mele(8)
    prot = DrivingProtocol(T, (DrivingTerm(TrigLoop(1.0), "staggering"),))
    W = DrivenHamiltonian(spec, prot).Ws[0]
    assert np.allclose(hamiltonian_at(spec, prot, 0.0, 2).matrix, -(2 * np.pi / T) ** 2 * W, atol=1e-12)


@pytest.mark.parametrize("n", range(1, 6))
def test_bump_derivatives_vanish_at_endpoints(n):
    spec = rice_mele(8)
    prot = bump_switching(0.7)
    assert hamiltonian_at(spec, prot, 0.0, n).max_norm() == 0.0
    assert hamiltonian_at(spec, prot, 1.0, n).max_norm() == 0.0


def test_bump_derivative_matches_finite_difference():
    prot = bump_switching(1.0, period=2.0)
    h = 1e-5
    for t in (0.3, 1.0, 1.7):
        fd = (prot.weight(0, t + h) - prot.weight(0, t - h)) / (2 * h)
        assert prot.weight(0, t, 1) == pytest.approx(fd, rel=1e-6)
    assert prot.weight(0, 1.0) == pytest.approx(np.exp(-4.0))


@given(order=st.integers(0, 4), s=st.floats(0, 1))
def test_smoothstep_is_monotone_and_flat(order, s):
    tau = smoothstep(order)
    assert tau(0.0) == pytest.approx(0.0, abs=1e-14) and tau(1.0) == pytest.approx(1.0)
    assert tau.deriv()(s) >= -1e-12
    for n in range(1, order + 1):
        assert abs(tau.deriv(n)(0.0)) < 1e-10 and abs(tau.deriv(n)(1.0)) < 1e-10


@pytest.mark.parametrize("flat_order", [0, 1, 2, 3])
def test_pump_flatness_and_cyclicity(flat_order):
    spec = rice_mele(8)
    prot = rice_mele_pump(spec, 1.0, flat_order)
    assert prot.check_flatness() < 1e-10
    assert prot.cyclic
    drv = DrivenHamiltonian(spec, prot)
    assert np.abs(drv.at(0.0) - drv.at(1.0)).max() < 1e-12
    if flat_order == 0:
        assert abs(prot.weight(0, 0.0, 1)) < 1e-12 and abs(prot.weight(1, 0.0, 1)) > 1.0


def test_pump_traces_the_rice_mele_loop():
    spec = rice_mele(8, delta0=0.5, Delta0=0.5)
    prot = rice_mele_pump(spec)
    for t in np.linspace(0, 1, 7):
        expected = build_hamiltonian(rice_mele(8, delta0=0.5 * np.cos(2 * np.pi * t),
                                               Delta0=0.5 * np.sin(2 * np.pi * t))).matrix
        assert np.abs(hamiltonian_at(spec, prot, t).matrix - expected).max() < 1e-12


def test_smoothness_bound_is_enforced():
    prot = DrivingProtocol(1.0, (DrivingTerm(TrigLoop(1.0), "staggering"),), smoothness=3)
    prot.weight(0, 0.2, 3)
    with pytest.raises(ValueError):
        prot.weight(0, 0.2, 4)


def test_time_outside_period_is_rejected():
    with pytest.raises(ValueError):
        hamiltonian_at(rice_mele(8), rice_mele_pump(rice_mele(8)), 1.5)


@pytest.mark.parametrize("make", [lambda: rice_mele(8, W_dis=0.3, seed=2), lambda: anderson_chain(8, W_dis=1.0),
                                  lambda: hofstadter(6, W_dis=0.5, seed=1)])
def test_builders_are_hermitian(make):
    H = build_hamiltonian(make()).matrix
    assert np.abs(H - H.conj().T).max() < 1e-12


def test_hypotheses_pass_for_default_pump():
    spec = rice_mele(32)
    rep = validate_hypotheses(spec, rice_mele_pump(spec), 0.0, np.linspace(0, 1, 64))
    assert rep.passed and rep.gap > 0.3
    assert all(v < 1e-12 for v in rep.covariance_defects.values())
    assert all(np.isfinite(rep.current_ratios))


def test_hypotheses_fail_at_the_metallic_point():
    spec = rice_mele(32, delta0=0.0, Delta0=0.0)
    rep = validate_hypotheses(spec, rice_mele_pump(spec), 0.0, np.linspace(0, 1, 64))
    assert not rep.passed and rep.gap < 1e-10


def test_hypotheses_fail_for_strong_disorder():
    failures = 0
    for seed in range(5):
        spec = anderson_chain(64, J=1.0, W_dis=4.0, seed=seed)
        rep = validate_hypotheses(spec, DrivingProtocol(), 0.0, np.linspace(0, 1, 8))
        failures += not rep.passed
    assert failures >= 4


def test_large_driving_is_reported_as_warning():
    spec = rice_mele(16)
    prot = bump_switching(100.0)
    rep = validate_hypotheses(spec, prot, 0.0, np.linspace(0, 1, 33))
    assert not rep.perturbation_ok and rep.warnings
