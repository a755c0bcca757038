"""Static and driven lattice Hamiltonians.

Three model families live here: the Rice-Mele pump chain, the Anderson chain and
the Hofstadter model in Landau gauge.  A driven Hamiltonian is
``H(t) = H + sum_j w_j(t) W_j`` with scalar drivings ``w_j`` whose derivatives are
evaluated exactly (see :mod:`polarlab._series`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb, factorial, pi
from typing import Sequence, Union

import numpy as np
from numpy.polynomial import Polynomial

from . import _series
from .errors import FluxError
from .lattice import (
    MINIMAL_IMAGE,
    CovariantOperator,
    TorusLattice,
    covariance_check,
    derivation_matrix,
)

GAP_FLOOR = 1e-10

# ----------------------------------------------------------------------------
# model specifications


@dataclass(frozen=True)
class RiceMele:
    J: float = 1.0
    delta0: float = 0.5
    Delta0: float = 0.5
    W_dis: float = 0.0


@dataclass(frozen=True)
class AndersonChain:
    J: float = 1.0
    W_dis: float = 0.0


@dataclass(frozen=True)
class Hofstadter:
    J: float = 1.0
    p: int = 1
    q: int = 3
    W_dis: float = 0.0

    @property
    def flux(self) -> float:
        return 2 * pi * self.p / self.q


Variant = Union[RiceMele, AndersonChain, Hofstadter]


@dataclass(frozen=True)
class ModelSpec:
    variant: Variant
    lattice: TorusLattice
    disorder_seed: int = 0

    def __post_init__(self):
        v, lat = self.variant, self.lattice
        if v.W_dis < 0:
            raise ValueError("W_dis must be non-negative")
        if isinstance(v, RiceMele):
            if lat.d != 1 or lat.n_orb != 2:
                raise ValueError("RiceMele needs a 1D lattice with two orbitals")
        elif isinstance(v, AndersonChain):
            if lat.d != 1 or lat.n_orb != 1:
                raise ValueError("AndersonChain needs a 1D lattice with one orbital")
        elif isinstance(v, Hofstadter):
            if lat.d != 2 or lat.n_orb != 1:
                raise ValueError("Hofstadter needs a 2D lattice with one orbital")
            if v.q <= 0 or any(L % v.q for L in lat.sizes):
                raise FluxError(f"flux 2pi*{v.p}/{v.q} is incompatible with torus {lat.sizes}: q must divide every side")
        else:
            raise TypeError(f"unknown model variant {type(v).__name__}")

    @property
    def is_clean(self) -> bool:
        return self.variant.W_dis == 0


def rice_mele(L: int, J=1.0, delta0=0.5, Delta0=0.5, W_dis=0.0, seed=0) -> ModelSpec:
    return ModelSpec(RiceMele(J, delta0, Delta0, W_dis), TorusLattice((L,), 2), seed)


def anderson_chain(L: int, J=1.0, W_dis=0.0, seed=0) -> ModelSpec:
    return ModelSpec(AndersonChain(J, W_dis), TorusLattice((L,), 1), seed)


def hofstadter(L: int, p=1, q=3, J=1.0, W_dis=0.0, seed=0) -> ModelSpec:
    return ModelSpec(Hofstadter(J, p, q, W_dis), TorusLattice((L, L), 1), seed)


def disorder_field(spec: ModelSpec) -> np.ndarray:
    """On-site values uniform in ``[-W/2, W/2]``, shape ``sizes + (n_orb,)``."""
    lat = spec.lattice
    shape = lat.sizes + (lat.n_orb,)
    W = spec.variant.W_dis
    if W == 0:
        return np.zeros(shape)
    rng = np.random.default_rng(np.uint64(spec.disorder_seed % 2**64))
    return rng.uniform(-W / 2, W / 2, size=shape)


# ----------------------------------------------------------------------------
# builders


def _rice_mele_matrix(lat: TorusLattice, J, delta, Delta, onsite) -> np.ndarray:
    L = lat.sizes[0]
    H = np.zeros((lat.dim, lat.dim), dtype=complex)
    x = np.arange(L)
    a, b = 2 * x, 2 * x + 1
    b_next = 2 * ((x + 1) % L) + 1
    H[a, b] = J + delta
    H[a, b_next] = J - delta
    H = H + H.conj().T
    H[a, a] += Delta
    H[b, b] -= Delta
    H[np.arange(lat.dim), np.arange(lat.dim)] += np.asarray(onsite).reshape(-1)
    return H


def peierls_hamiltonian(lat: TorusLattice, J: float, bond_phases: Sequence[np.ndarray],
                        onsite: np.ndarray | None = None) -> np.ndarray:
    """Single-orbital nearest-neighbour hopping ``H[r + e_k, r] = -J exp(i theta_k(r))``."""
    if lat.n_orb != 1:
        raise ValueError("peierls_hamiltonian is single-orbital")
    H = np.zeros((lat.dim, lat.dim), dtype=complex)
    sites = np.indices(lat.sizes).reshape(lat.d, -1).T
    src = np.ravel_multi_index(tuple(sites.T), lat.sizes)
    for k in range(lat.d):
        dst_sites = sites.copy()
        dst_sites[:, k] = (dst_sites[:, k] + 1) % lat.sizes[k]
        dst = np.ravel_multi_index(tuple(dst_sites.T), lat.sizes)
        theta = np.asarray(bond_phases[k], dtype=float).reshape(-1)
        H[dst, src] += -J * np.exp(1j * theta)
    H = H + H.conj().T
    if onsite is not None:
        H[np.arange(lat.dim), np.arange(lat.dim)] += np.asarray(onsite).reshape(-1)
    return H


def landau_bond_phases(lat: TorusLattice, flux: float) -> list[np.ndarray]:
    """Landau gauge: y-bonds leaving column x carry phase ``flux * x``."""
    X = np.indices(lat.sizes)[0]
    return [np.zeros(lat.sizes), flux * X]


def builder(spec: ModelSpec, **overrides):
    """Return ``field -> CovariantOperator`` for the static model.

    ``overrides`` replace variant parameters (used by the Bloch oracle and by
    drivings that move along the Rice-Mele parameter plane).
    """
    v = spec.variant
    lat = spec.lattice
    if isinstance(v, RiceMele):
        J = overrides.get("J", v.J)
        delta = overrides.get("delta", v.delta0)
        Delta = overrides.get("Delta", v.Delta0)
        return lambda f: CovariantOperator(lat, _rice_mele_matrix(lat, J, delta, Delta, f), hermitian=True)
    if isinstance(v, AndersonChain):
        J = overrides.get("J", v.J)
        phases = [np.zeros(lat.sizes)]
        return lambda f: CovariantOperator(lat, peierls_hamiltonian(lat, J, phases, f), hermitian=True)
    J = overrides.get("J", v.J)
    phases = landau_bond_phases(lat, v.flux)
    return lambda f: CovariantOperator(lat, peierls_hamiltonian(lat, J, phases, f), hermitian=True)


def build_hamiltonian(spec: ModelSpec) -> CovariantOperator:
    return builder(spec)(disorder_field(spec))


def magnetic_phase(y, x, B) -> complex:
    """Twisting cocycle ``exp((i/2) y.B.x)``."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return complex(np.exp(0.5j * y @ np.asarray(B, dtype=float) @ x))


def symmetric_flux_matrix(b: float) -> np.ndarray:
    return np.array([[0.0, b], [-b, 0.0]])


def landau_flux_matrix(b: float) -> np.ndarray:
    """Non-antisymmetric form whose cocycle ``exp(i b y_1 x_2)`` matches the Landau gauge.

    It differs from :func:`symmetric_flux_matrix` by a coboundary.
    """
    return np.array([[0.0, 2 * b], [0.0, 0.0]])


def magnetic_translation_phase(spec: ModelSpec, y) -> np.ndarray | None:
    """Per-site phase making the translation by ``y`` a symmetry of ``spec``."""
    v = spec.variant
    if not isinstance(v, Hofstadter):
        return None
    lat = spec.lattice
    B = landau_flux_matrix(v.flux)
    sites = np.indices(lat.sizes).reshape(2, -1).T
    ph = np.array([magnetic_phase(y, s, B) for s in sites])
    return ph.reshape(lat.sizes)


def model_covariance_defect(spec: ModelSpec, y) -> float:
    y = tuple(int(c) for c in y)
    return covariance_check(builder(spec), disorder_field(spec), y, magnetic_translation_phase(spec, y))


# ----------------------------------------------------------------------------
# driving functions


def smoothstep(order: int) -> Polynomial:
    """Polynomial ``tau`` on [0, 1] with ``tau(0)=0``, ``tau(1)=1`` and
    ``tau^(n)(0) = tau^(n)(1) = 0`` for ``1 <= n <= order``."""
    if order == 0:
        return Polynomial([0.0, 1.0])
    dtau = Polynomial([0.0, 1.0]) ** order * Polynomial([1.0, -1.0]) ** order
    tau = dtau.integ()
    return tau / tau(1.0)


@dataclass(frozen=True)
class TrigLoop:
    """``a cos(2 pi u + phi) + b`` in the reduced time ``u``."""

    a: float
    phi: float = 0.0
    b: float = 0.0

    def derivatives(self, u: float, n: int) -> np.ndarray:
        j = np.arange(n + 1)
        out = self.a * (2 * pi) ** j * np.cos(2 * pi * u + self.phi + j * pi / 2)
        out[0] += self.b
        return out

    def sup(self) -> float:
        return abs(self.a) + abs(self.b)


@dataclass(frozen=True)
class Bump:
    """``amplitude * exp(-1 / (u (1 - u)))`` on (0, 1), zero outside; flat at both ends."""

    amplitude: float = 1.0

    def series(self, inner: np.ndarray) -> np.ndarray:
        u0 = inner[0]
        if not 0.0 < u0 < 1.0:
            return np.zeros_like(inner)
        g = _series.mul(inner, -inner + np.eye(1, len(inner))[0])
        return self.amplitude * _series.exp(-_series.inv(g))

    def sup(self) -> float:
        return abs(self.amplitude) * np.exp(-4.0)


DRIVING_OPERATORS = ("dimerization", "staggering", "random_potential")


@dataclass(frozen=True)
class DrivingTerm:
    function: Union[TrigLoop, Bump]
    operator: Union[str, CovariantOperator]
    seed: int = 0


@dataclass(frozen=True)
class DrivingProtocol:
    """``H(t) = H + sum_j w_j(t) W_j`` on ``[0, period]``.

    ``flat_order`` reparametrizes time through :func:`smoothstep` so that the
    first ``flat_order`` derivatives of every ``w_j`` vanish at both endpoints.
    ``smoothness`` bounds the derivative orders that may be requested (None:
    unbounded, as for the analytic descriptors provided here).
    """

    period: float = 1.0
    terms: tuple[DrivingTerm, ...] = ()
    flat_order: int = 0
    smoothness: int | None = None

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.flat_order < 0:
            raise ValueError("flat_order must be non-negative")
        object.__setattr__(self, "terms", tuple(self.terms))

    @cached_property
    def _tau(self) -> Polynomial:
        return smoothstep(self.flat_order)

    def weight_series(self, j: int, t: float, n: int) -> np.ndarray:
        """Taylor coefficients of ``w_j`` around ``t`` in physical time, orders 0..n."""
        T = self.period
        s = t / T
        tau = self._tau
        inner = np.array([tau.deriv(k)(s) / factorial(k) if k else tau(s) for k in range(n + 1)])
        fn = self.terms[j].function
        if isinstance(fn, TrigLoop):
            c = _series.compose(fn.derivatives(inner[0], n), inner)
        else:
            c = fn.series(inner)
        return c / T ** np.arange(n + 1)

    def weight(self, j: int, t: float, n: int = 0) -> float:
        """``d^n w_j / dt^n`` at ``t``."""
        if self.smoothness is not None and n > self.smoothness:
            raise ValueError(f"derivative order {n} exceeds protocol smoothness {self.smoothness}")
        c = self.weight_series(j, t, n)
        return float(factorial(n) * c[n])

    def weights(self, t: float, n: int = 0) -> np.ndarray:
        return np.array([self.weight(j, t, n) for j in range(len(self.terms))])

    @property
    def cyclic(self) -> bool:
        w0 = self.weights(0.0)
        wT = self.weights(self.period)
        return bool(np.all(np.abs(w0 - wT) < 1e-12))

    def check_flatness(self) -> float:
        """Largest endpoint derivative of order ``1..flat_order`` (zero when flat)."""
        worst = 0.0
        for j in range(len(self.terms)):
            for t in (0.0, self.period):
                c = self.weight_series(j, t, self.flat_order)
                for n in range(1, self.flat_order + 1):
                    worst = max(worst, abs(factorial(n) * c[n]))
        return worst


def rice_mele_pump(spec: ModelSpec, period: float = 1.0, flat_order: int = 0) -> DrivingProtocol:
    """Loop ``delta(t) = delta0 cos(2 pi t/T)``, ``Delta(t) = Delta0 sin(2 pi t/T)``."""
    v = spec.variant
    if not isinstance(v, RiceMele):
        raise TypeError("rice_mele_pump needs a RiceMele model")
    terms = (
        DrivingTerm(TrigLoop(v.delta0, 0.0, -v.delta0), "dimerization"),
        DrivingTerm(TrigLoop(v.Delta0, -pi / 2, -v.Delta0), "staggering"),
    )
    return DrivingProtocol(period, terms, flat_order)


def bump_switching(amplitude: float, operator="staggering", period: float = 1.0, seed: int = 0) -> DrivingProtocol:
    return DrivingProtocol(period, (DrivingTerm(Bump(amplitude), operator, seed),), flat_order=0)


def driving_operator(spec: ModelSpec, term: DrivingTerm) -> np.ndarray:
    op = term.operator
    lat = spec.lattice
    if isinstance(op, CovariantOperator):
        if op.lattice != lat:
            raise ValueError("driving operator lives on a different lattice")
        return op.matrix
    if op == "dimerization":
        if not isinstance(spec.variant, RiceMele):
            raise ValueError("dimerization driving is defined for RiceMele only")
        return _rice_mele_matrix(lat, 0.0, 1.0, 0.0, np.zeros(lat.dim))
    if op == "staggering":
        if lat.n_orb == 2:
            s = np.tile([1.0, -1.0], lat.volume)
        else:
            s = (-1.0) ** np.indices(lat.sizes).sum(axis=0).reshape(-1)
        return np.diag(s).astype(complex)
    if op == "random_potential":
        rng = np.random.default_rng(np.uint64(term.seed % 2**64))
        return np.diag(rng.uniform(-0.5, 0.5, size=lat.dim)).astype(complex)
    raise ValueError(f"unknown driving operator {op!r}; expected one of {DRIVING_OPERATORS}")


class DrivenHamiltonian:
    """Precomputed ``H`` and ``W_j`` so that ``H(t)`` and its derivatives are cheap."""

    def __init__(self, spec: ModelSpec, protocol: DrivingProtocol | None = None):
        self.spec = spec
        self.protocol = protocol if protocol is not None else DrivingProtocol()
        self.lattice = spec.lattice
        self.H0 = build_hamiltonian(spec).matrix
        self.Ws = [driving_operator(spec, term) for term in self.protocol.terms]
        self._rates: dict[int, float] = {}

    @property
    def period(self) -> float:
        return self.protocol.period

    def at(self, t: float, n: int = 0) -> np.ndarray:
        if not -1e-12 <= t <= self.period + 1e-12:
            raise ValueError(f"t = {t} outside [0, {self.period}]")
        w = self.protocol.weights(t, n)
        out = self.H0.copy() if n == 0 else np.zeros_like(self.H0)
        for wj, Wj in zip(w, self.Ws):
            if wj != 0.0:
                out += wj * Wj
        return out

    def current(self, t: float, k: int = 0, conv: str = MINIMAL_IMAGE) -> np.ndarray:
        return derivation_matrix(self.lattice, self.at(t), k, conv)

    def rate_bound(self, samples: int = 1025) -> float:
        """Bound on ``sup_t |dH/dt|``: ``sum_j sup|w_j'| |W_j|`` with the sup taken on a
        dense grid and padded by 5 percent."""
        if samples not in self._rates:
            ts = np.linspace(0.0, self.period, samples)
            total = 0.0
            for j, W in enumerate(self.Ws):
                sup = max(abs(self.protocol.weight(j, t, 1)) for t in ts)
                total += sup * float(np.linalg.norm(W, 2))
            self._rates[samples] = 1.05 * total
        return self._rates[samples]

    def norm_bound(self, grid) -> float:
        return max(np.abs(np.linalg.eigvalsh(self.at(t))).max() for t in grid)


def hamiltonian_at(spec: ModelSpec, protocol: DrivingProtocol, t: float, n: int = 0) -> CovariantOperator:
    """``d^n H / dt^n`` at ``t``."""
    return CovariantOperator(spec.lattice, DrivenHamiltonian(spec, protocol).at(t, n), hermitian=True)


# ----------------------------------------------------------------------------
# hypothesis validation


@dataclass
class HypothesisReport:
    gap: float
    gap_time: float
    gap_ok: bool
    covariance_defects: dict = field(default_factory=dict)
    current_ratios: list = field(default_factory=list)
    perturbation_norm: float = 0.0
    perturbation_ok: bool = True
    warnings: list = field(default_factory=list)
    level_spacing: float = 0.0

    @property
    def passed(self) -> bool:
        return self.gap_ok and all(v < 1e-12 for v in self.covariance_defects.values())


def validate_hypotheses(spec: ModelSpec, protocol: DrivingProtocol, fermi_energy: float, t_grid) -> HypothesisReport:
    """Gap, covariance and current-boundedness checks along ``t_grid``.

    A failing hypothesis gives a failed report rather than an exception.
    """
    drv = DrivenHamiltonian(spec, protocol)
    gaps, spacing = [], np.inf
    for t in t_grid:
        e = np.linalg.eigvalsh(drv.at(t))
        gaps.append(np.abs(e - fermi_energy).min())
        if len(e) > 1:
            spacing = min(spacing, (e[-1] - e[0]) / (len(e) - 1))
    gaps = np.array(gaps)
    i = int(np.argmin(gaps))
    g = float(gaps[i])

    lat = spec.lattice
    defects = {}
    for k in range(lat.d):
        y = tuple(1 if j == k else 0 for j in range(lat.d))
        defects[str(y)] = model_covariance_defect(spec, y)

    H0 = drv.at(0.0)
    hnorm = np.linalg.norm(H0, 2)
    ratios = [float(np.linalg.norm(derivation_matrix(lat, H0, k), 2) / hnorm) if hnorm else 0.0
              for k in range(lat.d)]

    pert = np.zeros_like(H0)
    for j, W in enumerate(drv.Ws):
        pert += max(abs(protocol.weight(j, t)) for t in t_grid) * W
    pnorm = float(np.linalg.norm(pert, 2)) if len(protocol.terms) else 0.0
    g0 = float(gaps[0])
    # at finite volume a filled gap still leaves a tiny distance to the nearest level,
    # so the gap only counts as open when it beats the mean level spacing
    gap_ok = bool(g > max(GAP_FLOOR, spacing))
    report = HypothesisReport(g, float(t_grid[i]), gap_ok, defects, ratios, pnorm, pnorm < g0 / 2,
                              level_spacing=float(spacing))
    if not report.perturbation_ok:
        report.warnings.append(
            f"driving amplitude norm {pnorm:.3g} exceeds half the initial gap {g0 / 2:.3g}; relying on the grid gap scan")
    return report
