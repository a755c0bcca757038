"""Superadiabatic corrections to the spectral projection.

``expansion_terms`` builds ``P_0 = P*, P_1, ..., P_N`` by the recursion

    P_{m+1} = Q G Q - P G P - i S([dP_m/dt, P]),   G = sum_{n=1}^{m} P_n P_{m+1-n},

with ``Q = 1 - P`` and ``S`` the contour sandwich of :mod:`polarlab.spectral`.
The partial sum ``sum eps^n P_n`` is refined into an exact projection by taking
its spectral projection on eigenvalues above 1/2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import evolve_density
from .errors import EpsilonTooLargeError
from .lattice import MINIMAL_IMAGE, derivation_matrix
from .models import DrivenHamiltonian, DrivingProtocol
from .spectral import ProjectionPath, projection_path, sandwich_factors

MAX_ORDER = 3
ZERO_RESIDUAL = 1e-13


def _dag(A: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(A, -1, -2))


def _herm(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + _dag(A))


def op_norms(A: np.ndarray) -> np.ndarray:
    """Operator 2-norm of each matrix in a stack."""
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def grid_derivative(F: np.ndarray, grid: np.ndarray, order: int = 4) -> np.ndarray:
    """Centered finite-difference derivative along axis 0 on a uniform grid.

    ``order`` 2 uses ``np.gradient``; ``order`` 4 the five-point stencil with
    one-sided fourth-order closures at both ends.
    """
    grid = np.asarray(grid, dtype=float)
    h = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), h, rtol=1e-9, atol=0):
        raise ValueError("finite differences need a uniform grid")
    if order == 2:
        return np.gradient(F, h, axis=0, edge_order=2)
    if order != 4:
        raise ValueError("supported finite-difference orders are 2 and 4")
    if len(grid) < 5:
        raise ValueError("fourth-order differences need at least 5 grid points")
    D = np.empty_like(F)
    D[2:-2] = (F[:-4] - 8 * F[1:-3] + 8 * F[3:-1] - F[4:]) / (12 * h)
    D[0] = (-25 * F[0] + 48 * F[1] - 36 * F[2] + 16 * F[3] - 3 * F[4]) / (12 * h)
    D[1] = (-3 * F[0] - 10 * F[1] + 18 * F[2] - 6 * F[3] + F[4]) / (12 * h)
    D[-1] = (25 * F[-1] - 48 * F[-2] + 36 * F[-3] - 16 * F[-4] + 3 * F[-5]) / (12 * h)
    D[-2] = (3 * F[-1] + 10 * F[-2] - 18 * F[-3] + 6 * F[-4] - F[-5]) / (12 * h)
    return D


def _batched_sandwich(path: ProjectionPath, B: np.ndarray) -> np.ndarray:
    V = path.evecs
    mask = path.gap.mask(V.shape[-1])
    F = np.stack([sandwich_factors(e, mask) for e in path.evals])
    return V @ ((_dag(V) @ B @ V) * F) @ _dag(V)


@dataclass
class SuperadiabaticFamily:
    grid: np.ndarray
    order: int
    terms: list = field(repr=False)
    dterms: list = field(repr=False)
    path: ProjectionPath = field(repr=False)
    hamiltonians: np.ndarray = field(repr=False)
    drv: DrivenHamiltonian = field(repr=False)
    fd_order: int = 4
    _split: tuple | None = field(default=None, repr=False)

    @property
    def lattice(self):
        return self.path.lattice

    def tilde(self, eps: float, m: int | None = None) -> np.ndarray:
        m = self.order if m is None else m
        return sum(eps**n * self.terms[n] for n in range(m + 1))

    def dtilde(self, eps: float, m: int | None = None) -> np.ndarray:
        m = self.order if m is None else m
        return sum(eps**n * self.dterms[n] for n in range(m + 1))

    def G(self, m: int) -> np.ndarray:
        """``G_m = sum_{n=1}^{m-1} P_n P_{m-n}`` (zero for ``m <= 1``)."""
        out = np.zeros_like(self.terms[0])
        for n in range(1, m):
            out += self.terms[n] @ self.terms[m - n]
        return out

    def splitting_threshold(self, ladder=(0.1, 0.05, 0.025)) -> tuple[float, float]:
        """``(c_N, eps_N)`` with ``|P~^2 - P~| <= c_N eps^(N+1)`` fitted on ``ladder``."""
        if self._split is None:
            N = self.order
            c = 0.0
            for eps in ladder:
                T = self.tilde(eps)
                c = max(c, float(op_norms(T @ T - T).max()) / eps ** (N + 1))
            eps_N = np.inf if c == 0 else (4 * c) ** (-1.0 / (N + 1))
            self._split = (c, float(eps_N))
        return self._split


def expansion_terms(source, protocol: DrivingProtocol | None = None, window=0.0, grid=None,
                    N: int = 1, fd_order: int = 4) -> SuperadiabaticFamily:
    """Terms ``P_0 .. P_N`` and their time derivatives on a uniform grid.

    ``dP_0/dt`` is exact; higher derivatives are finite differences of order ``fd_order``.
    """
    drv = source if isinstance(source, DrivenHamiltonian) else DrivenHamiltonian(source, protocol)
    if not 0 <= N <= MAX_ORDER:
        raise ValueError(f"order must lie in 0..{MAX_ORDER}")
    smooth = drv.protocol.smoothness
    if smooth is not None and N > smooth - 2:
        raise ValueError(f"order {N} needs protocol smoothness >= {N + 2}, have {smooth}")
    grid = np.linspace(0.0, drv.period, 513) if grid is None else np.asarray(grid, dtype=float)
    path = projection_path(drv, grid=grid, window=window)
    P = path.P
    Q = np.eye(P.shape[-1]) - P
    terms, dterms = [P], [path.dP]
    for m in range(N):
        G = np.zeros_like(P)
        for n in range(1, m + 1):
            G += terms[n] @ terms[m + 1 - n]
        B = dterms[m] @ P - P @ dterms[m]
        nxt = _herm(Q @ G @ Q - P @ G @ P - 1j * _batched_sandwich(path, B))
        terms.append(nxt)
        dterms.append(grid_derivative(nxt, grid, fd_order))
    Hs = np.stack([drv.at(t) for t in grid])
    return SuperadiabaticFamily(grid, N, terms, dterms, path, Hs, drv, fd_order)


@dataclass
class RefinedProjection:
    grid: np.ndarray
    P: np.ndarray = field(repr=False)
    dP: np.ndarray = field(repr=False)
    eps: float
    order: int
    splitting_margin: float


def superadiabatic_projection(family: SuperadiabaticFamily, eps: float, check_threshold: bool = True) -> RefinedProjection:
    """Spectral projection of ``sum eps^n P_n`` on eigenvalues above 1/2, with its exact time derivative.

    Raises :class:`EpsilonTooLargeError` when ``eps`` exceeds the fitted
    threshold or when an eigenvalue falls in ``(1/4, 3/4)``.
    """
    if check_threshold and family.order > 0:
        c, eps_N = family.splitting_threshold()
        if eps >= eps_N:
            raise EpsilonTooLargeError(f"eps = {eps} is above the splitting threshold {eps_N:.4g} (c_N = {c:.3g})")
    T = _herm(family.tilde(eps))
    dT = _herm(family.dtilde(eps))
    w, U = np.linalg.eigh(T)
    dist = np.minimum(np.abs(w), np.abs(w - 1)).max()
    if np.any((w > 0.25) & (w < 0.75)):
        raise EpsilonTooLargeError(f"eigenvalue of the corrected projection inside (1/4, 3/4) at eps = {eps}")
    mask = w > 0.5
    Uh = _dag(U)
    P = (U * mask[:, None, :]) @ Uh
    F = np.stack([sandwich_factors(wi, mi) for wi, mi in zip(w, mask)])
    dP = U @ ((Uh @ dT @ U) * F) @ Uh
    return RefinedProjection(family.grid, _herm(P), _herm(dP), eps, family.order, 0.25 - float(dist))


# ----------------------------------------------------------------------------
# residual diagnostics


def loglog_slope(x, y, zero_tol: float = ZERO_RESIDUAL) -> float:
    """Least-squares slope of ``log y`` against ``log x``; ``inf`` for identically vanishing ``y``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.all(y <= zero_tol):
        return float("inf")
    keep = y > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


@dataclass
class ResidualReport:
    eps: list
    r55: dict
    r56: dict
    lhs56: dict
    r54: list
    closeness: dict
    slopes: dict

    @property
    def r55_max(self) -> float:
        return max(max(v) for v in self.r55.values())

    @property
    def r56_max(self) -> float:
        return max(max(v) for v in self.r56.values())


def expansion_residuals(family: SuperadiabaticFamily, eps_ladder, k: int = 0, conv: str = MINIMAL_IMAGE) -> ResidualReport:
    """Residuals of the expansion identities along the grid, per order and per ``eps``.

    * ``r55[m]``: ``max_t |P~_m^2 - P~_m - eps^(m+1) G_(m+1)|``
    * ``r56[m]``: ``max_t |i eps dP~_m - [H, P~_m] - i eps^(m+1) dP_m|``
    * ``lhs56[m]``: the same without the last term
    * ``r54``: ``max_t |i eps dP_ref - [H, P_ref]|`` for the refined projection
    * ``closeness``: ``P_ref - P*`` measured plainly, after ``d/dt``, after the spatial derivation
      and at the two ends of the grid
    """
    eps_ladder = [float(e) for e in eps_ladder]
    N = family.order
    H = family.hamiltonians
    lat = family.lattice
    r55 = {m: [] for m in range(N + 1)}
    r56 = {m: [] for m in range(N + 1)}
    lhs56 = {m: [] for m in range(N + 1)}
    r54 = []
    close = {"plain": [], "dt": [], "grad": [], "endpoints": []}
    Gs = {m: family.G(m + 1) for m in range(N + 1)}
    P0, dP0 = family.terms[0], family.dterms[0]
    for eps in eps_ladder:
        for m in range(N + 1):
            T = family.tilde(eps, m)
            dT = family.dtilde(eps, m)
            r55[m].append(float(op_norms(T @ T - T - eps ** (m + 1) * Gs[m]).max()))
            lhs = 1j * eps * dT - (H @ T - T @ H)
            lhs56[m].append(float(op_norms(lhs).max()))
            r56[m].append(float(op_norms(lhs - 1j * eps ** (m + 1) * family.dterms[m]).max()))
        ref = superadiabatic_projection(family, eps, check_threshold=False)
        r54.append(float(op_norms(1j * eps * ref.dP - (H @ ref.P - ref.P @ H)).max()))
        D = ref.P - P0
        close["plain"].append(float(op_norms(D).max()))
        close["endpoints"].append(float(max(np.linalg.norm(D[0], 2), np.linalg.norm(D[-1], 2))))
        close["dt"].append(float(op_norms(ref.dP - dP0).max()))
        close["grad"].append(float(op_norms(np.stack([derivation_matrix(lat, d, k, conv) for d in D])).max()))
    slopes = {f"r55[{m}]": loglog_slope(eps_ladder, r55[m]) for m in r55}
    slopes.update({f"r56[{m}]": loglog_slope(eps_ladder, r56[m]) for m in r56})
    slopes["r54"] = loglog_slope(eps_ladder, r54)
    slopes["closeness"] = loglog_slope(eps_ladder, close["plain"])
    return ResidualReport(eps_ladder, r55, r56, lhs56, r54, close, slopes)


# ----------------------------------------------------------------------------
# closeness of the evolved state


@dataclass
class ClosenessResult:
    eps: float
    max_deviation: float
    half_period_deviation: float
    endpoint_deviation: float
    deviations: np.ndarray = field(repr=False)
    substeps: int = 0


def evolved_closeness(family: SuperadiabaticFamily, eps: float, steps_per_unit: float | None = None) -> ClosenessResult:
    """Evolve from the refined projection at ``t = 0`` and measure ``|rho(t) - P_ref(t)|`` on the grid."""
    ref = superadiabatic_projection(family, eps)
    res = evolve_density(family.drv, None, ref.P[0], eps, steps_per_unit, grid=family.grid)
    dev = op_norms(res.rho - ref.P)
    half = dev[family.grid <= 0.5 * family.grid[-1] + 1e-12]
    return ClosenessResult(eps, float(dev.max()), float(half.max()), float(dev[-1]), dev, res.substeps)
