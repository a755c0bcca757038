"""Unitary evolution of the density under ``eps d/dt rho = -i [H(t), rho]``.

Time stays physical (``t`` in ``[0, T]``); the stiffness ``1/eps`` is kept
explicit so that observation grids line up across different ``eps``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil
from typing import Callable

import numpy as np

from .errors import StepOverflowError
from .lattice import CovariantOperator, _mat
from .models import DrivenHamiltonian, DrivingProtocol, ModelSpec, TrigLoop

STABILITY = 0.1
MAX_SUBSTEPS = 10**8


def _expm_herm(H: np.ndarray, theta: float) -> np.ndarray:
    e, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * theta * e)) @ V.conj().T


def propagator_step(H_mid, dt: float, eps: float):
    """``exp(-i (dt/eps) H_mid)`` by eigendecomposition."""
    if dt <= 0 or eps <= 0:
        raise ValueError("step and eps must be positive")
    U = _expm_herm(_mat(H_mid), dt / eps)
    if isinstance(H_mid, CovariantOperator):
        return CovariantOperator(H_mid.lattice, U)
    return U


@dataclass
class EvolutionResult:
    grid: np.ndarray
    rho: np.ndarray | None
    unitarity_defect: float
    eps: float
    substeps: int
    fine_times: np.ndarray | None = None
    fine_values: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.rho[-1]


def _norm_bound(drv: DrivenHamiltonian) -> float:
    """Upper bound on ``sup_t ||H(t)||`` from the triangle inequality."""
    bound = float(np.linalg.norm(drv.H0, 2))
    prot = drv.protocol
    ts = np.linspace(0.0, prot.period, 257)
    for j, W in enumerate(drv.Ws):
        fn = prot.terms[j].function
        sup = fn.sup() if isinstance(fn, TrigLoop) else max(abs(prot.weight(j, t)) for t in ts)
        bound += sup * float(np.linalg.norm(W, 2))
    return bound


def substep_count(span: float, eps: float, norm_bound: float, steps_per_unit: float | None) -> int:
    """Substeps for an interval of length ``span`` under the stability policy."""
    n = ceil(span * norm_bound / (STABILITY * eps) - 1e-9)
    if steps_per_unit:
        n = max(n, ceil(span * steps_per_unit - 1e-9))
    return max(n, 1)


def evolve_density(source, protocol: DrivingProtocol | None, rho0, eps: float,
                   steps_per_unit: float | None = None, *, grid=None,
                   observe: Callable[[float, np.ndarray], complex] | None = None,
                   store: bool = True, period: float | None = None,
                   norm_bound: float | None = None) -> EvolutionResult:
    """Exponential midpoint evolution of ``rho0`` over one period.

    ``source`` is a :class:`ModelSpec` (combined with ``protocol``), a
    :class:`DrivenHamiltonian`, or any callable ``t -> H(t)`` (then ``period``
    and, ideally, ``norm_bound`` must be given).  ``observe(t, rho)`` is called
    at every substep boundary; its values are returned on that fine grid.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(source, ModelSpec):
        source = DrivenHamiltonian(source, protocol)
    if isinstance(source, DrivenHamiltonian):
        ham = source.at
        T = source.period
        bound = _norm_bound(source) if norm_bound is None else norm_bound
    else:
        ham = source
        T = period if period is not None else (protocol.period if protocol is not None else None)
        if T is None:
            raise ValueError("a callable Hamiltonian needs an explicit period")
        if norm_bound is None:
            norm_bound = max(np.abs(np.linalg.eigvalsh(ham(t))).max() for t in np.linspace(0, T, 65))
        bound = norm_bound
    grid = np.linspace(0.0, T, 129) if grid is None else np.asarray(grid, dtype=float)
    if grid[0] != 0.0:
        raise ValueError("observation grid must start at t = 0")

    counts = [substep_count(b - a, eps, bound, steps_per_unit) for a, b in zip(grid[:-1], grid[1:])]
    total = int(sum(counts))
    if total > MAX_SUBSTEPS:
        raise StepOverflowError(f"{total} substeps requested (limit {MAX_SUBSTEPS}); increase eps or reduce the period")

    rho = np.array(_mat(rho0), dtype=complex)
    if np.abs(rho - rho.conj().T).max() > 1e-12:
        raise ValueError("initial density must be hermitian")
    n = rho.shape[0]
    eye = np.eye(n)
    states = np.empty((len(grid), n, n), dtype=complex) if store else None
    if store:
        states[0] = rho
    fine_t = np.empty(total + 1) if observe else None
    fine_v = np.empty(total + 1, dtype=complex) if observe else None
    if observe:
        fine_t[0] = 0.0
        fine_v[0] = observe(0.0, rho)
    defect = 0.0
    pos = 0
    for i, m in enumerate(counts):
        a, b = grid[i], grid[i + 1]
        dt = (b - a) / m
        for s in range(m):
            t0 = a + s * dt
            U = _expm_herm(ham(t0 + 0.5 * dt), dt / eps)
            if s == 0:
                defect = max(defect, float(np.abs(U.conj().T @ U - eye).max()))
            rho = U @ rho @ U.conj().T
            pos += 1
            if observe:
                t1 = b if s == m - 1 else a + (s + 1) * dt
                fine_t[pos] = t1
                fine_v[pos] = observe(t1, rho)
        rho = 0.5 * (rho + rho.conj().T)
        if store:
            states[i + 1] = rho
    return EvolutionResult(grid, states, defect, eps, total, fine_t, fine_v)
