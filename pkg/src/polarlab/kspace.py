"""Bloch-space oracle for clean one-dimensional pumps.

Bloch vectors follow ``psi_x = exp(-i k x) u_k``, so a bond to the next cell
picks up ``exp(-i k)``.  Signs of the Wilson-loop polarization and of the
plaquette Chern number are oriented to count the charge transported in the
direction of the current ``J = i[X, H]``, matching the real-space evaluators.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .models import AndersonChain, DrivenHamiltonian, DrivingProtocol, ModelSpec, RiceMele

OVERLAP_TOL = 1e-8


def rice_mele_bloch(k: float, J: float, delta: float, Delta: float) -> np.ndarray:
    off = (J + delta) + (J - delta) * np.exp(-1j * k)
    return np.array([[Delta, off], [np.conj(off), -Delta]])


def _rice_mele_parameters(spec: ModelSpec, protocol: DrivingProtocol | None, t: float) -> tuple[float, float]:
    v = spec.variant
    delta, Delta = v.delta0, v.Delta0
    if protocol is None:
        return delta, Delta
    for j, term in enumerate(protocol.terms):
        w = protocol.weight(j, t)
        if term.operator == "dimerization":
            delta += w
        elif term.operator == "staggering":
            Delta += w
        else:
            raise ValueError(f"driving operator {term.operator!r} breaks translation invariance")
    return delta, Delta


def bloch_hamiltonian(spec: ModelSpec, k: float, t: float = 0.0, protocol: DrivingProtocol | None = None) -> np.ndarray:
    """``n_orb x n_orb`` Bloch matrix of a clean chain at momentum ``k`` and time ``t``."""
    v = spec.variant
    if v.W_dis != 0:
        raise ValueError("the Bloch oracle needs a clean model (W_dis = 0)")
    if isinstance(v, RiceMele):
        delta, Delta = _rice_mele_parameters(spec, protocol, t)
        return rice_mele_bloch(k, v.J, delta, Delta)
    if isinstance(v, AndersonChain):
        if protocol is not None and protocol.terms:
            raise ValueError("driven Anderson chains have no Bloch oracle")
        return np.array([[-2 * v.J * np.cos(k)]], dtype=complex)
    raise ValueError("the Bloch oracle covers one-dimensional chains only")


@dataclass
class BlochPath:
    """Bloch eigenvectors on a ``k`` grid (periodic, endpoint excluded) times a ``t`` grid."""

    k: np.ndarray
    t: np.ndarray
    H: np.ndarray = field(repr=False)
    energies: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)

    def band_states(self, bands: Sequence[int]) -> np.ndarray:
        return self.states[..., list(bands)]

    def regauge(self, rng: np.random.Generator) -> "BlochPath":
        """Same path with a random phase on every eigenvector."""
        ph = np.exp(2j * np.pi * rng.random(self.energies.shape))
        return replace(self, states=self.states * ph[:, :, None, :])

    def band_gap(self, bands: Sequence[int]) -> float:
        bands = sorted(bands)
        e = self.energies
        gaps = []
        if bands[0] > 0:
            gaps.append((e[..., bands[0]] - e[..., bands[0] - 1]).min())
        if bands[-1] < e.shape[-1] - 1:
            gaps.append((e[..., bands[-1] + 1] - e[..., bands[-1]]).min())
        return float(min(gaps)) if gaps else np.inf


def bloch_path(spec: ModelSpec, protocol: DrivingProtocol | None, nk: int = 64, t_points=None,
               hamiltonian=None) -> BlochPath:
    """Diagonalize Bloch matrices on ``k = 2 pi m / nk`` and the given times.

    ``hamiltonian(k, t)`` overrides the model-derived Bloch matrix.
    """
    k = 2 * np.pi * np.arange(nk) / nk
    if t_points is None:
        t_points = np.linspace(0.0, protocol.period if protocol else 1.0, 65)
    t = np.asarray(t_points, dtype=float)
    if hamiltonian is None:
        hamiltonian = lambda kk, tt: bloch_hamiltonian(spec, kk, tt, protocol)
    H = np.array([[hamiltonian(kk, tt) for kk in k] for tt in t])
    if np.abs(H - np.conj(np.swapaxes(H, -1, -2))).max() > 1e-12:
        raise ValueError("Bloch matrices must be hermitian")
    e, V = np.linalg.eigh(H)
    return BlochPath(k, t, H, e, V)


def _link(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normalized ``det(a^+ b)`` over the trailing two axes."""
    d = np.linalg.det(np.conj(np.swapaxes(a, -1, -2)) @ b)
    mag = np.abs(d)
    if np.any(mag < OVERLAP_TOL):
        raise ValueError("vanishing link overlap: the grid is too coarse or the bands touch")
    return d / mag


def slice_polarizations(path: BlochPath, bands: Sequence[int], orbital_positions=None) -> np.ndarray:
    """Wilson-loop polarization for every time slice.

    The Wilson-loop phase divided by ``2 pi`` is the Wannier centre; its
    negative is returned because ``J = i[X, H]`` is minus the velocity.
    By default all orbitals sit at their cell origin (the embedding of the
    real-space position operator) and values lie in ``(-1/2, 1/2]``.
    ``orbital_positions`` places orbital ``a`` at ``x + r_a`` instead, which
    changes the centre by the band weight ``sum_a r_a n_a`` in the limit of a
    fine ``k`` grid and keeps inversion-symmetric slices exactly quantized.
    """
    u = path.band_states(bands)
    nxt = np.roll(u, -1, axis=1)
    if orbital_positions is not None:
        # every link picks up exp(i dk r_a) on orbital a
        dk = 2 * np.pi / len(path.k)
        nxt = np.exp(1j * dk * np.asarray(orbital_positions, dtype=float))[:, None] * nxt
    phase = np.angle(np.prod(_link(u, nxt), axis=1))
    return -phase / (2 * np.pi)


def berry_polarization(path: BlochPath, bands: Sequence[int] = (0,), orbital_positions=None) -> float:
    """Polarization change from the first to the last time slice, unwrapped by continuity in ``t``."""
    p = slice_polarizations(path, bands, orbital_positions)
    p = np.unwrap(p, period=1.0)
    return float(p[-1] - p[0])


def fhs_chern(path: BlochPath, bands: Sequence[int] = (0,), check_cyclic: bool = True) -> int:
    """Plaquette Chern number on the ``(k, t)`` torus.

    The last time slice must repeat the first; it is dropped and ``t`` wraps.
    """
    if check_cyclic and np.abs(path.H[-1] - path.H[0]).max() > 1e-12:
        raise ValueError("the (k, t) torus needs H(k, 0) = H(k, T)")
    if path.band_gap(bands) <= OVERLAP_TOL:
        raise ValueError("band crossing on the grid")
    u = path.band_states(bands)[:-1]
    uk = np.roll(u, -1, axis=1)
    ut = np.roll(u, -1, axis=0)
    Ak = _link(u, uk)
    At = _link(u, ut)
    F = np.angle(Ak * np.roll(At, -1, axis=1) * np.conj(np.roll(Ak, -1, axis=0)) * np.conj(At))
    total = F.sum() / (2 * np.pi)
    n = int(np.rint(total))
    if abs(total - n) > 1e-8:
        raise ArithmeticError(f"plaquette sum {total} is not an integer")
    return n


def real_space_spectrum_defect(spec: ModelSpec) -> float:
    """Max difference between the real-space spectrum and the Bloch spectra at ``k = 2 pi m / L``."""
    L = spec.lattice.sizes[0]
    ks = 2 * np.pi * np.arange(L) / L
    bloch = np.sort(np.concatenate([np.linalg.eigvalsh(bloch_hamiltonian(spec, k)) for k in ks]))
    real = np.linalg.eigvalsh(DrivenHamiltonian(spec).H0)
    return float(np.abs(bloch - real).max())
