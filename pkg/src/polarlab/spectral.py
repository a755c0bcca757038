"""Spectral projections, their time derivatives and contour sandwiches.

Contour integrals are evaluated in closed form in the eigenbasis.  The
``method="quadrature"`` variants integrate numerically on a circle and exist to
cross-check the residue algebra.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import GapError
from .lattice import CovariantOperator, TorusLattice, _mat
from .models import DrivenHamiltonian, DrivingProtocol, ModelSpec

SPECTRUM_TOL = 1e-8
GAP_TOL = 1e-6
MAX_TRACK_POINTS = 4096


@dataclass(frozen=True)
class Interval:
    """Closed energy window ``[lo, hi]``; ``lo`` may be ``-inf``."""

    lo: float
    hi: float

    def contains(self, e: np.ndarray) -> np.ndarray:
        return (e >= self.lo) & (e <= self.hi)

    def boundary_distance(self, e: np.ndarray) -> float:
        d = np.abs(e - self.hi)
        if np.isfinite(self.lo):
            d = np.minimum(d, np.abs(e - self.lo))
        return float(d.min(initial=np.inf))

    def circle(self, e: np.ndarray) -> "Circle":
        lo = self.lo if np.isfinite(self.lo) else min(float(e.min()) - 1.0, self.hi - 1.0)
        return Circle(0.5 * (lo + self.hi), 0.5 * (self.hi - lo))


@dataclass(frozen=True)
class Circle:
    center: float
    radius: float

    def contains(self, e: np.ndarray) -> np.ndarray:
        return np.abs(e - self.center) < self.radius

    def boundary_distance(self, e: np.ndarray) -> float:
        return float(np.abs(np.abs(e - self.center) - self.radius).min(initial=np.inf))

    def circle(self, e: np.ndarray) -> "Circle":
        return self


Window = Union[Interval, Circle]


def fermi_window(fermi_energy: float) -> Interval:
    return Interval(-np.inf, float(fermi_energy))


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def function(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        V = self.eigenvectors
        return (V * f(self.eigenvalues)) @ V.conj().T


def eigh(H) -> SpectralDecomposition:
    e, V = np.linalg.eigh(_mat(H))
    return SpectralDecomposition(e, V)


def inside_mask(evals: np.ndarray, window: Window, t: float | None = None) -> np.ndarray:
    if window.boundary_distance(evals) < SPECTRUM_TOL:
        raise GapError("eigenvalue within 1e-8 of the window boundary", t)
    return window.contains(evals)


def _projector(V: np.ndarray, mask: np.ndarray) -> np.ndarray:
    Vin = V[:, mask]
    return Vin @ Vin.conj().T


def _wrap(H, M: np.ndarray, hermitian: bool):
    if isinstance(H, CovariantOperator):
        if hermitian:
            M = 0.5 * (M + M.conj().T)
        return CovariantOperator(H.lattice, M, hermitian=hermitian)
    return M


def fermi_projection(H, fermi_energy: float):
    """Projection onto eigenvectors with eigenvalue at most ``fermi_energy``."""
    dec = eigh(H)
    mask = inside_mask(dec.eigenvalues, fermi_window(fermi_energy))
    return _wrap(H, _projector(dec.eigenvectors, mask), True)


def _quadrature_nodes(circle: Circle, Q: int):
    theta = 2 * np.pi * (np.arange(Q) + 0.5) / Q
    w = circle.radius * np.exp(1j * theta)
    return circle.center + w, w / Q


def riesz_projection(H, contour: Window, method: str = "eigen", Q: int = 64):
    """``(1/2 pi i) oint (z - H)^-1 dz`` around ``contour``."""
    dec = eigh(H)
    mask = inside_mask(dec.eigenvalues, contour)
    if method == "eigen":
        return _wrap(H, _projector(dec.eigenvectors, mask), True)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    h = _mat(H)
    n = h.shape[0]
    zs, ws = _quadrature_nodes(contour.circle(dec.eigenvalues), Q)
    out = np.zeros((n, n), dtype=complex)
    for z, w in zip(zs, ws):
        out += w * np.linalg.inv(z * np.eye(n) - h)
    return _wrap(H, out, False)


def sandwich_factors(evals: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``1/(e_in - e_out)`` on inside/outside pairs, zero elsewhere."""
    sign = np.outer(mask, ~mask).astype(float) - np.outer(~mask, mask)
    denom = evals[:, None] - evals[None, :]
    return np.divide(sign, denom, out=np.zeros_like(denom), where=sign != 0)


def sandwich_eig(V: np.ndarray, factors: np.ndarray, B: np.ndarray) -> np.ndarray:
    Vh = V.conj().T
    return V @ ((Vh @ B @ V) * factors) @ Vh


def contour_sandwich(H, B, window: Window, method: str = "eigen", Q: int = 128):
    """``(1/2 pi i) oint R(z) B R(z) dz`` with ``R(z) = (z - H)^-1``.

    In the eigenbasis entry ``(i, j)`` is ``B_ij / (e_in - e_out)`` when exactly
    one of ``e_i, e_j`` lies inside the window, and zero otherwise.
    """
    dec = eigh(H)
    mask = inside_mask(dec.eigenvalues, window)
    b = _mat(B)
    if method == "eigen":
        out = sandwich_eig(dec.eigenvectors, sandwich_factors(dec.eigenvalues, mask), b)
    elif method == "quadrature":
        h = _mat(H)
        n = h.shape[0]
        zs, ws = _quadrature_nodes(window.circle(dec.eigenvalues), Q)
        out = np.zeros((n, n), dtype=complex)
        for z, w in zip(zs, ws):
            R = np.linalg.inv(z * np.eye(n) - h)
            out += w * R @ b @ R
    else:
        raise ValueError(f"unknown method {method!r}")
    return _wrap(H, out, False)


def dt_projection(H, dH, window: Window):
    """Time derivative of the spectral projection given ``dH/dt``; purely block off-diagonal."""
    D = contour_sandwich(H, dH, window)
    if isinstance(D, CovariantOperator):
        return _wrap(H, D.matrix, True)
    return D


# ----------------------------------------------------------------------------
# gap tracking


@dataclass
class GapWindow:
    """An eigenvalue cluster followed along a time grid.

    The cluster is the index range ``[lo_index, hi_index)`` of the ascending
    spectrum; ``f_minus``/``f_plus`` are its extreme eigenvalues and ``gaps`` the
    distance from the cluster to the rest of the spectrum at each grid time.
    """

    grid: np.ndarray
    f_minus: np.ndarray
    f_plus: np.ndarray
    gaps: np.ndarray
    lo_index: int
    hi_index: int
    refinements: int = 0

    @property
    def g(self) -> float:
        return float(self.gaps.min())

    @property
    def g_time(self) -> float:
        return float(self.grid[int(np.argmin(self.gaps))])

    @property
    def rank(self) -> int:
        return self.hi_index - self.lo_index

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.lo_index:self.hi_index] = True
        return m


def _cluster_gap(e: np.ndarray, lo: int, hi: int) -> float:
    g = np.inf
    if hi == lo:
        return g
    if lo > 0:
        g = min(g, e[lo] - e[lo - 1])
    if hi < len(e):
        g = min(g, e[hi] - e[hi - 1])
    return float(g)


def _initial_range(e: np.ndarray, window: Window) -> tuple[int, int]:
    mask = inside_mask(e, window, 0.0)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return 0, 0
    if idx[-1] - idx[0] + 1 != len(idx):
        raise ValueError("initial window must select a contiguous block of the spectrum")
    return int(idx[0]), int(idx[-1] + 1)


def track_cluster(spectrum: Callable[[float], np.ndarray], grid: Sequence[float], window: Window,
                  spectra: Sequence[np.ndarray] | None = None, tol: float = GAP_TOL,
                  rate: float | None = None) -> GapWindow:
    """Follow the cluster selected by ``window`` at ``grid[0]`` along ``grid``.

    Between consecutive times, eigenvalues are matched by nearest distance (the
    ascending order, which is optimal in one dimension).  An interval is
    accepted when the largest eigenvalue displacement stays below half the
    cluster gap at both ends; otherwise it is bisected.

    ``rate`` is an upper bound on ``|dH/dt|``.  With it, an interval of length
    ``h`` is also bisected unless ``rate * h`` is below half the end-point gaps,
    which by Weyl's inequality certifies that the gap stays open in between
    (displacements alone cannot tell a level crossing from a touching).
    """
    grid = np.asarray(grid, dtype=float)
    spectra = [spectrum(t) for t in grid] if spectra is None else list(spectra)
    lo, hi = _initial_range(spectra[0], window)
    points = 0

    def check(t, e):
        g = _cluster_gap(e, lo, hi)
        if g <= tol:
            raise GapError(f"tracked gap closed (g = {g:.3e})", t)
        return g

    def ambiguous(ta, tb, ea, eb, ga, gb):
        half = 0.5 * min(ga, gb)
        return np.abs(eb - ea).max() >= half or (rate is not None and rate * (tb - ta) >= half)

    def refine(ta, tb, ea, eb, ga, gb, depth):
        nonlocal points
        if not ambiguous(ta, tb, ea, eb, ga, gb):
            return
        if points >= MAX_TRACK_POINTS or depth > 40:
            raise GapError("eigenvalue matching stayed ambiguous at the refinement cap", ta)
        tm = 0.5 * (ta + tb)
        em = spectrum(tm)
        points += 1
        gm = check(tm, em)
        refine(ta, tm, ea, em, ga, gm, depth + 1)
        refine(tm, tb, em, eb, gm, gb, depth + 1)

    gaps = np.array([check(t, e) for t, e in zip(grid, spectra)])
    for i in range(len(grid) - 1):
        refine(grid[i], grid[i + 1], spectra[i], spectra[i + 1], gaps[i], gaps[i + 1], 0)
    if hi > lo:
        fm = np.array([e[lo] for e in spectra])
        fp = np.array([e[hi - 1] for e in spectra])
    else:
        fm = fp = np.full(len(grid), np.nan)
    return GapWindow(grid, fm, fp, gaps, lo, hi, points)


def gap_track(spec: ModelSpec, protocol: DrivingProtocol, window: Window | float, grid=None) -> GapWindow:
    """Track the cluster selected at ``t = 0`` across ``grid`` (default 64 points)."""
    drv = DrivenHamiltonian(spec, protocol)
    if grid is None:
        grid = np.linspace(0.0, protocol.period, 64)
    if not isinstance(window, (Interval, Circle)):
        window = fermi_window(window)
    return track_cluster(lambda t: np.linalg.eigvalsh(drv.at(t)), grid, window, rate=drv.rate_bound())


# ----------------------------------------------------------------------------
# projection paths


@dataclass
class ProjectionPath:
    grid: np.ndarray
    P: np.ndarray
    dP: np.ndarray
    gap: GapWindow
    evals: np.ndarray
    evecs: np.ndarray
    cyclic_defect: float = np.inf
    lattice: TorusLattice | None = None

    def __len__(self) -> int:
        return len(self.grid)

    @property
    def period(self) -> float:
        return float(self.grid[-1] - self.grid[0])

    def factors(self, i: int) -> np.ndarray:
        return sandwich_factors(self.evals[i], self.gap.mask(self.evals.shape[1]))

    def sandwich(self, i: int, B: np.ndarray) -> np.ndarray:
        return sandwich_eig(self.evecs[i], self.factors(i), B)


def projection_path(source, protocol: DrivingProtocol | None = None, grid=None,
                    window: Window | float = 0.0) -> ProjectionPath:
    """Spectral projections and their exact time derivatives along ``grid``.

    ``source`` is a :class:`ModelSpec` (with ``protocol``) or a
    :class:`DrivenHamiltonian`.
    """
    drv = source if isinstance(source, DrivenHamiltonian) else DrivenHamiltonian(source, protocol)
    if grid is None:
        grid = np.linspace(0.0, drv.period, 129)
    grid = np.asarray(grid, dtype=float)
    if not isinstance(window, (Interval, Circle)):
        window = fermi_window(window)
    n = drv.H0.shape[0]
    M = len(grid)
    evals = np.empty((M, n))
    evecs = np.empty((M, n, n), dtype=complex)
    for i, t in enumerate(grid):
        evals[i], evecs[i] = np.linalg.eigh(drv.at(t))
    gap = track_cluster(lambda t: np.linalg.eigvalsh(drv.at(t)), grid, window, spectra=evals,
                        rate=drv.rate_bound())
    mask = gap.mask(n)
    P = np.empty((M, n, n), dtype=complex)
    dP = np.empty((M, n, n), dtype=complex)
    for i, t in enumerate(grid):
        V = evecs[i]
        P[i] = _projector(V, mask)
        D = sandwich_eig(V, sandwich_factors(evals[i], mask), drv.at(t, 1))
        dP[i] = 0.5 * (D + D.conj().T)
    cyc = float(np.abs(drv.at(grid[-1]) - drv.at(grid[0])).max())
    return ProjectionPath(grid, P, dP, gap, evals, evecs, cyc, drv.lattice)
