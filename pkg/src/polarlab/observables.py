"""Currents, polarization and the Chern number of a cyclic projection path.

Normalization: the pumped charge of one cycle is counted in the fast time
``s = t/eps`` of the evolution, ``dP = (1/eps) int_0^T T(J(t) rho(t)) dt``.  With
this choice the projection-path formula, its adiabatic limit and the Chern
number of a cyclic path are all the same integer-normalized quantity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .dynamics import evolve_density
from .errors import HypothesisError
from .lattice import (
    MINIMAL_IMAGE,
    SAWTOOTH,
    CovariantOperator,
    TorusLattice,
    _mat,
    derivation_matrix,
    spatial_derivation,
)
from .models import DrivenHamiltonian, DrivingProtocol, ModelSpec, validate_hypotheses
from .spectral import ProjectionPath, fermi_window, projection_path, track_cluster

REAL_TOL = 1e-9


def current_operator(H: CovariantOperator, k: int = 0, conv: str = MINIMAL_IMAGE) -> CovariantOperator:
    """``J_k = i[X_k, H]`` in the chosen convention."""
    return spatial_derivation(H, k, conv)


def _tr(lat: TorusLattice, A: np.ndarray) -> complex:
    return complex(np.trace(A)) / lat.volume


def _tr_prod(lat: TorusLattice, A: np.ndarray, B: np.ndarray) -> complex:
    """``T(A B)`` without forming the product."""
    return complex(np.sum(A * B.T)) / lat.volume


def ksv_density(lat: TorusLattice, P: np.ndarray, dP: np.ndarray, k: int = 0, conv: str = MINIMAL_IMAGE) -> complex:
    """``i T(P [dP, d_k P])``."""
    nP = derivation_matrix(lat, P, k, conv)
    PdP = P @ dP
    return 1j * (_tr_prod(lat, PdP, nP) - _tr_prod(lat, P @ nP, dP))


@dataclass
class IdentityCheck:
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def defect(self) -> np.ndarray:
        return np.abs(self.lhs - self.rhs)

    @property
    def relative_defect(self) -> float:
        scale = max(float(np.abs(self.lhs).max(initial=0.0)), 1e-300)
        return float(self.defect.max(initial=0.0) / scale)


def current_identity_check(lattice: TorusLattice, hamiltonians: Sequence, projections: Sequence,
                           eps: float = 1.0, k: int = 0, conv: str = SAWTOOTH,
                           derivatives: Sequence | None = None) -> IdentityCheck:
    """Both sides of ``T(J P) = i eps T(P [dP/dt, d_k P])`` per sample.

    ``dP/dt`` defaults to the evolution commutator ``-(i/eps)[H, P]``.  In the
    sawtooth convention the identity is exact algebra for any projection.
    """
    lhs, rhs = [], []
    for i, (H, P) in enumerate(zip(hamiltonians, projections)):
        h, p = _mat(H), _mat(P)
        if derivatives is None:
            dp = -1j / eps * (h @ p - p @ h)
        else:
            dp = _mat(derivatives[i])
        lhs.append(_tr_prod(lattice, derivation_matrix(lattice, h, k, conv), p))
        rhs.append(eps * ksv_density(lattice, p, dp, k, conv))
    return IdentityCheck(np.array(lhs), np.array(rhs))


def _real(values: np.ndarray, what: str) -> np.ndarray:
    im = float(np.abs(np.imag(values)).max(initial=0.0))
    scale = 1.0 + float(np.abs(np.real(values)).max(initial=0.0))
    if im > REAL_TOL * scale:
        raise ArithmeticError(f"{what} has imaginary part {im:.3e}")
    return np.real(values)


# ----------------------------------------------------------------------------
# projection-path formula


@dataclass
class KsvResult:
    value: float
    refinement_error: float
    points: int
    integrand: np.ndarray = field(repr=False)
    max_imag: float = 0.0


def ksv_integrand(path: ProjectionPath, k: int = 0, conv: str = MINIMAL_IMAGE) -> np.ndarray:
    lat = _path_lattice(path)
    return np.array([ksv_density(lat, path.P[i], path.dP[i], k, conv) for i in range(len(path))])


def _path_lattice(path: ProjectionPath) -> TorusLattice:
    if path.lattice is None:
        raise ValueError("projection path carries no lattice")
    return path.lattice


def _simpson_with_estimate(values: np.ndarray, grid: np.ndarray) -> tuple[float, float]:
    full = float(simpson(values, x=grid))
    if len(grid) < 5:
        return full, float("nan")
    idx = np.unique(np.r_[np.arange(0, len(grid), 2), len(grid) - 1])
    half = float(simpson(values[idx], x=grid[idx]))
    return full, abs(full - half)


def polarization_ksv(path: ProjectionPath, k: int = 0, conv: str = MINIMAL_IMAGE) -> KsvResult:
    """Composite Simpson integral of ``i T(P [dP, d_k P])`` along the path.

    ``refinement_error`` compares with the estimate on every other grid point.
    """
    raw = ksv_integrand(path, k, conv)
    vals = _real(raw, "projection-path integrand")
    v, err = _simpson_with_estimate(vals, path.grid)
    return KsvResult(v, err, len(path), vals, float(np.abs(raw.imag).max()))


@dataclass
class ChernResult:
    value: float
    nearest: int
    distance: float
    refinement_error: float


def chern_number(path: ProjectionPath, k: int = 0, conv: str = MINIMAL_IMAGE) -> ChernResult:
    """Integer-normalized Chern number of a cyclic projection path (same integrand as the pumped charge)."""
    if not path.cyclic_defect < 1e-12:
        raise ValueError(f"protocol is not cyclic (|H(T) - H(0)|_max = {path.cyclic_defect:.3e})")
    r = polarization_ksv(path, k, conv)
    n = int(np.rint(r.value))
    return ChernResult(r.value, n, abs(r.value - n), r.refinement_error)


def converged_ksv(spec: ModelSpec, protocol: DrivingProtocol, fermi_energy: float = 0.0, k: int = 0,
                  conv: str = MINIMAL_IMAGE, points: int = 65, tol: float = 1e-4, max_points: int = 4097):
    """Double the time grid until successive estimates differ by less than ``tol (1 + |value|)``."""
    drv = DrivenHamiltonian(spec, protocol)
    prev = None
    while True:
        path = projection_path(drv, grid=np.linspace(0.0, protocol.period, points), window=fermi_energy)
        r = polarization_ksv(path, k, conv)
        if prev is not None and abs(r.value - prev) < tol * (1 + abs(r.value)):
            return r, path
        if 2 * points - 1 > max_points:
            return r, path
        prev = r.value
        points = 2 * points - 1


# ----------------------------------------------------------------------------
# evolution-based polarization


@dataclass
class ExactPolarization:
    value: float
    eps: float
    substeps: int
    unitarity_defect: float
    identity_defect: float
    max_imag: float
    states: np.ndarray | None = field(default=None, repr=False)
    grid: np.ndarray | None = None


def polarization_exact(spec: ModelSpec, protocol: DrivingProtocol, fermi_energy: float, eps: float,
                       grid=None, k: int = 0, steps_per_unit: float | None = None,
                       conv: str = MINIMAL_IMAGE, check_hypotheses: bool = True,
                       keep_states: bool = False) -> ExactPolarization:
    """Pumped charge from the evolved state: ``(1/eps) int_0^T T(J_k(t) rho(t)) dt``.

    The integrand is sampled at every integrator substep and integrated by
    composite Simpson on that fine grid.
    """
    grid = np.linspace(0.0, protocol.period, 129) if grid is None else np.asarray(grid, dtype=float)
    if check_hypotheses:
        rep = validate_hypotheses(spec, protocol, fermi_energy, grid)
        if not rep.passed:
            raise HypothesisError(f"hypothesis check failed (gap {rep.gap:.3e} at t = {rep.gap_time:.4g})")
    drv = DrivenHamiltonian(spec, protocol)
    lat = spec.lattice
    H0 = drv.at(0.0)
    e, V = np.linalg.eigh(H0)
    track_cluster(lambda t: np.linalg.eigvalsh(drv.at(t)), [0.0], fermi_window(fermi_energy), spectra=[e])
    Vin = V[:, e <= fermi_energy]
    rho0 = Vin @ Vin.conj().T

    D = derivation_matrix(lat, np.ones_like(H0), k, conv)
    def observe(t, rho):
        return _tr_prod(lat, D * drv.at(t), rho)

    res = evolve_density(drv, None, rho0, eps, steps_per_unit, grid=grid, observe=observe, store=True)
    vals = res.fine_values
    max_imag = float(np.abs(vals.imag).max())
    value = float(simpson(_real(vals, "current expectation"), x=res.fine_times)) / eps

    Hs = [drv.at(t) for t in grid]
    chk = current_identity_check(lat, Hs, res.rho, eps, k, conv)
    return ExactPolarization(value, eps, res.substeps, res.unitarity_defect, float(chk.defect.max()),
                             max_imag, res.rho if keep_states else None, grid)


@dataclass
class PolarizationReport:
    k: int
    eps: float | None
    dP_exact: float | None
    dP_ksv: float | None
    chern: float | None
    identity_defect: float | None
    quadrature: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
